"""Deterministic binary codec over message descriptors.

Wire format (documented with worked examples in docs/wire-format.md):

* all multi-byte scalars little-endian; floats IEEE-754 binary32/64
* required field: the value, nothing else
* optional field: one presence byte (0x00 absent / 0x01 present) + value
* repeated field: count prefix (smallest of 1/2/4 bytes holding max_count)
  followed by that many elements
* fixed_repeated field: exactly `count` elements, no prefix
* oneof group: one tag byte = 1-based ordinal of the set member; 0x00 only
  valid for groups declared optional
* nested messages inline, no length prefix

Message instances are plain dicts: field name -> scalar, list, nested dict,
or absent. Encoded size depends only on presence/length shape.
"""

from __future__ import annotations

import struct

from badgesim.tinybuf.schema import (
    FieldDescriptor,
    MessageDescriptor,
    Rule,
    ScalarKind,
)

Value = dict


class CodecError(Exception):
    pass


class ValueError_(CodecError):
    """Instance violates the descriptor's invariants."""


class DecodeError(CodecError):
    """Byte sequence cannot be decoded against the descriptor."""


_STRUCT_FMT = {
    ScalarKind.UINT8: "<B",
    ScalarKind.INT8: "<b",
    ScalarKind.UINT16: "<H",
    ScalarKind.INT16: "<h",
    ScalarKind.UINT32: "<I",
    ScalarKind.INT32: "<i",
    ScalarKind.UINT64: "<Q",
    ScalarKind.INT64: "<q",
    ScalarKind.FLOAT32: "<f",
    ScalarKind.FLOAT64: "<d",
}


def count_prefix_width(max_count: int) -> int:
    """Smallest unsigned width (1/2/4 bytes) that can hold max_count."""
    if max_count <= 0xFF:
        return 1
    if max_count <= 0xFFFF:
        return 2
    if max_count <= 0xFFFFFFFF:
        return 4
    raise ValueError_(f"max_count {max_count} too large")


class _Registry:
    """Name -> descriptor lookup for resolving message-typed fields."""

    def __init__(self, descs: list[MessageDescriptor]):
        self.by_name = {d.name: d for d in descs}

    def resolve(self, name: str) -> MessageDescriptor:
        try:
            return self.by_name[name]
        except KeyError:
            raise CodecError(f"unresolved message reference {name!r}") from None


def _elem_size(ftype, value, reg: _Registry) -> int:
    if ftype.is_message:
        return _message_size(reg.resolve(ftype.message), value, reg)
    return ftype.scalar.width


def _message_size(desc: MessageDescriptor, v: Value, reg: _Registry) -> int:
    if not isinstance(v, dict):
        raise ValueError_(f"{desc.name}: expected dict instance, got {type(v).__name__}")
    size = 0
    seen_groups: set[str] = set()
    for f in desc.fields:
        rule = f.frule.rule
        if rule is Rule.ONEOF:
            g = f.frule.oneof_group
            if g in seen_groups:
                continue
            seen_groups.add(g)
            group = desc.oneofs[g]
            set_members = [m for m in group.members if m in v and v[m] is not None]
            if len(set_members) > 1:
                raise ValueError_(f"{desc.name}.{g}: more than one oneof member set")
            if not set_members and not group.optional:
                raise ValueError_(f"{desc.name}.{g}: no member of required oneof set")
            size += 1
            if set_members:
                member = desc.field_by_name(set_members[0])
                size += _elem_size(member.ftype, v[set_members[0]], reg)
            continue
        present = f.name in v and v[f.name] is not None
        if rule is Rule.REQUIRED:
            if not present:
                raise ValueError_(f"{desc.name}.{f.name}: required field missing")
            size += _elem_size(f.ftype, v[f.name], reg)
        elif rule is Rule.OPTIONAL:
            size += 1
            if present:
                size += _elem_size(f.ftype, v[f.name], reg)
        elif rule is Rule.REPEATED:
            if not present:
                raise ValueError_(f"{desc.name}.{f.name}: repeated field missing (use [])")
            items = v[f.name]
            if len(items) > f.frule.count:
                raise ValueError_(
                    f"{desc.name}.{f.name}: {len(items)} elements exceeds max_count {f.frule.count}"
                )
            size += count_prefix_width(f.frule.count)
            size += sum(_elem_size(f.ftype, it, reg) for it in items)
        elif rule is Rule.FIXED_REPEATED:
            if not present:
                raise ValueError_(f"{desc.name}.{f.name}: fixed_repeated field missing")
            items = v[f.name]
            if len(items) != f.frule.count:
                raise ValueError_(
                    f"{desc.name}.{f.name}: expected exactly {f.frule.count} elements, got {len(items)}"
                )
            size += sum(_elem_size(f.ftype, it, reg) for it in items)
    return size


def encoded_size(desc: MessageDescriptor, v: Value, all_descs: list[MessageDescriptor]) -> int:
    """Exact byte count of encode(desc, v); validates instance invariants."""
    return _message_size(desc, v, _Registry(all_descs))


def _check_scalar(kind: ScalarKind, value) -> None:
    if kind.is_float:
        if not isinstance(value, (int, float)):
            raise ValueError_(f"expected number for {kind.token}, got {type(value).__name__}")
        return
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError_(f"expected int for {kind.token}, got {type(value).__name__}")
    bits = kind.width * 8
    lo, hi = (-(1 << (bits - 1)), (1 << (bits - 1)) - 1) if kind.signed else (0, (1 << bits) - 1)
    if not lo <= value <= hi:
        raise ValueError_(f"value {value} out of range for {kind.token}")


def _encode_elem(ftype, value, reg: _Registry, out: bytearray) -> None:
    if ftype.is_message:
        _encode_message(reg.resolve(ftype.message), value, reg, out)
        return
    kind = ftype.scalar
    _check_scalar(kind, value)
    out += struct.pack(_STRUCT_FMT[kind], value)


def _encode_message(desc: MessageDescriptor, v: Value, reg: _Registry, out: bytearray) -> None:
    _message_size(desc, v, reg)  # full invariant validation up front
    seen_groups: set[str] = set()
    for f in desc.fields:
        rule = f.frule.rule
        if rule is Rule.ONEOF:
            g = f.frule.oneof_group
            if g in seen_groups:
                continue
            seen_groups.add(g)
            group = desc.oneofs[g]
            set_members = [m for m in group.members if m in v and v[m] is not None]
            if not set_members:
                out.append(0x00)
                continue
            member = desc.field_by_name(set_members[0])
            out.append(member.frule.oneof_ordinal)
            _encode_elem(member.ftype, v[set_members[0]], reg, out)
            continue
        present = f.name in v and v[f.name] is not None
        if rule is Rule.REQUIRED:
            _encode_elem(f.ftype, v[f.name], reg, out)
        elif rule is Rule.OPTIONAL:
            out.append(0x01 if present else 0x00)
            if present:
                _encode_elem(f.ftype, v[f.name], reg, out)
        elif rule is Rule.REPEATED:
            items = v[f.name]
            width = count_prefix_width(f.frule.count)
            out += len(items).to_bytes(width, "little")
            for it in items:
                _encode_elem(f.ftype, it, reg, out)
        elif rule is Rule.FIXED_REPEATED:
            for it in v[f.name]:
                _encode_elem(f.ftype, it, reg, out)


def encode(desc: MessageDescriptor, v: Value, all_descs: list[MessageDescriptor]) -> bytes:
    out = bytearray()
    _encode_message(desc, v, _Registry(all_descs), out)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(
                f"truncated input: need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _decode_elem(ftype, reg: _Registry, r: _Reader):
    if ftype.is_message:
        return _decode_message(reg.resolve(ftype.message), reg, r)
    kind = ftype.scalar
    return struct.unpack(_STRUCT_FMT[kind], r.take(kind.width))[0]


def _decode_message(desc: MessageDescriptor, reg: _Registry, r: _Reader) -> Value:
    v: Value = {}
    seen_groups: set[str] = set()
    for f in desc.fields:
        rule = f.frule.rule
        if rule is Rule.ONEOF:
            g = f.frule.oneof_group
            if g in seen_groups:
                continue
            seen_groups.add(g)
            group = desc.oneofs[g]
            tag = r.take(1)[0]
            if tag == 0:
                if not group.optional:
                    raise DecodeError(f"{desc.name}.{g}: tag 0 on required oneof")
                continue
            if tag > len(group.members):
                raise DecodeError(
                    f"{desc.name}.{g}: invalid oneof tag {tag} (group has {len(group.members)} members)"
                )
            member = desc.field_by_name(group.members[tag - 1])
            v[member.name] = _decode_elem(member.ftype, reg, r)
            continue
        if rule is Rule.REQUIRED:
            v[f.name] = _decode_elem(f.ftype, reg, r)
        elif rule is Rule.OPTIONAL:
            flag = r.take(1)[0]
            if flag == 0x01:
                v[f.name] = _decode_elem(f.ftype, reg, r)
            elif flag != 0x00:
                raise DecodeError(f"{desc.name}.{f.name}: invalid presence byte 0x{flag:02X}")
        elif rule is Rule.REPEATED:
            width = count_prefix_width(f.frule.count)
            n = int.from_bytes(r.take(width), "little")
            if n > f.frule.count:
                raise DecodeError(
                    f"{desc.name}.{f.name}: count {n} exceeds max_count {f.frule.count}"
                )
            v[f.name] = [_decode_elem(f.ftype, reg, r) for _ in range(n)]
        elif rule is Rule.FIXED_REPEATED:
            v[f.name] = [_decode_elem(f.ftype, reg, r) for _ in range(f.frule.count)]
    return v


def decode(
    desc: MessageDescriptor,
    data: bytes,
    all_descs: list[MessageDescriptor],
    exact: bool = True,
) -> Value:
    """Decode a byte sequence. In exact mode trailing bytes are an error."""
    r = _Reader(bytes(data))
    v = _decode_message(desc, _Registry(all_descs), r)
    if exact and r.pos != len(r.data):
        raise DecodeError(f"trailing bytes: consumed {r.pos} of {len(r.data)}")
    return v


def decode_prefix(
    desc: MessageDescriptor, data: bytes, all_descs: list[MessageDescriptor]
) -> tuple[Value, int]:
    """Decode from the front of data; return (value, bytes consumed)."""
    r = _Reader(bytes(data))
    v = _decode_message(desc, _Registry(all_descs), r)
    return v, r.pos
