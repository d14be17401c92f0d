"""Tinybuf: schema-driven binary serialization with fixed-width scalars.

Messages are declared in a line-oriented ``.tb`` schema, parsed into
descriptors, and encoded/decoded with a deterministic wire format whose
size depends only on the shape (presence and lengths) of the data, never
on scalar magnitudes.
"""

from badgesim.tinybuf.schema import (
    FieldRule,
    FieldType,
    FieldDescriptor,
    MessageDescriptor,
    OneofGroup,
    Rule,
    ScalarKind,
    SchemaError,
    parse_schema,
)
from badgesim.tinybuf.codec import (
    CodecError,
    DecodeError,
    ValueError_,
    decode,
    encode,
    encoded_size,
)
from badgesim.tinybuf.emit import (
    descriptors_from_json,
    descriptors_to_json,
    emit_bindings,
    emit_descriptor,
    load_descriptor_file,
    write_descriptor_file,
)

__all__ = [
    "FieldRule",
    "FieldType",
    "FieldDescriptor",
    "MessageDescriptor",
    "OneofGroup",
    "Rule",
    "ScalarKind",
    "SchemaError",
    "parse_schema",
    "CodecError",
    "DecodeError",
    "ValueError_",
    "decode",
    "encode",
    "encoded_size",
    "descriptors_from_json",
    "descriptors_to_json",
    "emit_bindings",
    "emit_descriptor",
    "load_descriptor_file",
    "write_descriptor_file",
]
