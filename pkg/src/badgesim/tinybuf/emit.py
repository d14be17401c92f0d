"""Descriptor-file (JSON) interchange and source-binding generation.

The descriptor file is the canonical machine-readable form of a parsed
schema; further binding targets consume it instead of re-parsing ``.tb``
text. The generated Python bindings wrap the runtime codec in one class
per message.
"""

from __future__ import annotations

import json
import keyword
from pathlib import Path

from badgesim.tinybuf.schema import (
    FieldDescriptor,
    FieldRule,
    FieldType,
    MessageDescriptor,
    OneofGroup,
    Rule,
    ScalarKind,
    SchemaError,
)

_TOKEN_TO_SCALAR = {k.token: k for k in ScalarKind}


def descriptors_to_json(descs: list[MessageDescriptor]) -> str:
    out = []
    for d in descs:
        fields = []
        for f in d.fields:
            entry: dict = {"name": f.name, "type": str(f.ftype), "rule": f.frule.rule.value}
            if f.frule.count is not None:
                entry["count"] = f.frule.count
            if f.frule.rule is Rule.ONEOF:
                entry["group"] = f.frule.oneof_group
                entry["ordinal"] = f.frule.oneof_ordinal
            fields.append(entry)
        oneofs = [
            {"name": g.name, "members": list(g.members), "optional": g.optional}
            for g in d.oneofs.values()
        ]
        out.append({"name": d.name, "fields": fields, "oneofs": oneofs})
    return json.dumps(out, indent=2) + "\n"


def descriptors_from_json(text: str) -> list[MessageDescriptor]:
    raw = json.loads(text)
    descs: list[MessageDescriptor] = []
    known: set[str] = set()
    for dm in raw:
        fields = []
        oneofs = {
            g["name"]: OneofGroup(g["name"], tuple(g["members"]), g.get("optional", False))
            for g in dm.get("oneofs", [])
        }
        for fm in dm["fields"]:
            tname = fm["type"]
            if tname in _TOKEN_TO_SCALAR:
                ftype = FieldType(scalar=_TOKEN_TO_SCALAR[tname])
            elif tname in known:
                ftype = FieldType(message=tname)
            else:
                raise SchemaError(f"descriptor file: unknown type {tname!r} in {dm['name']}")
            rule = Rule(fm["rule"])
            frule = FieldRule(
                rule,
                count=fm.get("count"),
                oneof_group=fm.get("group"),
                oneof_ordinal=fm.get("ordinal"),
            )
            fields.append(FieldDescriptor(fm["name"], ftype, frule))
        descs.append(MessageDescriptor(dm["name"], fields, oneofs))
        known.add(dm["name"])
    return descs


def emit_descriptor(descs: list[MessageDescriptor]) -> str:
    return descriptors_to_json(descs)


def write_descriptor_file(descs: list[MessageDescriptor], path: str | Path) -> None:
    Path(path).write_text(descriptors_to_json(descs), encoding="utf-8")


def load_descriptor_file(path: str | Path) -> list[MessageDescriptor]:
    return descriptors_from_json(Path(path).read_text(encoding="utf-8"))


_BINDINGS_HEADER = '''"""Generated message bindings. Do not edit by hand."""

import json as _json

from badgesim.tinybuf import codec as _codec
from badgesim.tinybuf import emit as _emit

_DESCRIPTORS = _emit.descriptors_from_json(_DESCRIPTOR_JSON)
_BY_NAME = {d.name: d for d in _DESCRIPTORS}


class _Message:
    _name = None

    def __init__(self, **kwargs):
        for k, v in kwargs.items():
            setattr(self, k, v)

    @staticmethod
    def _plain(v):
        if isinstance(v, _Message):
            return v.to_value()
        if isinstance(v, (list, tuple)):
            return [_Message._plain(x) for x in v]
        return v

    def to_value(self):
        return {k: _Message._plain(v) for k, v in vars(self).items()
                if not k.startswith("_")}

    def encoded_size(self):
        return _codec.encoded_size(_BY_NAME[self._name], self.to_value(), _DESCRIPTORS)

    def encode(self):
        return _codec.encode(_BY_NAME[self._name], self.to_value(), _DESCRIPTORS)

    @classmethod
    def decode(cls, data, exact=True):
        v = _codec.decode(_BY_NAME[cls._name], data, _DESCRIPTORS, exact=exact)
        return cls(**v)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_value() == other.to_value()

    def __repr__(self):
        body = ", ".join(f"{k}={v!r}" for k, v in self.to_value().items())
        return f"{type(self).__name__}({body})"
'''


def emit_bindings(descs: list[MessageDescriptor], target: str) -> str:
    """Generate source bindings for a target language ("python")."""
    if target != "python":
        raise ValueError(f"unknown bindings target {target!r}")
    lines = ["_DESCRIPTOR_JSON = r'''" + descriptors_to_json(descs).rstrip() + "'''", ""]
    lines.append(_BINDINGS_HEADER)
    for d in descs:
        cls = d.name if d.name.isidentifier() and not keyword.iskeyword(d.name) else None
        if cls is None:
            raise SchemaError(f"message name {d.name!r} is not a valid Python identifier")
        lines.append(f"\nclass {cls}(_Message):")
        lines.append(f'    _name = "{d.name}"')
        lines.append("")
    return "\n".join(lines) + "\n"
