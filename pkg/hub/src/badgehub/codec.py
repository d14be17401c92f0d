"""Standalone message codec driven by a descriptor JSON file.

This is an independent implementation of the badge wire format, written
against the published descriptor interchange format rather than any badge
code. Wire rules:

  scalars        little-endian; float/double are IEEE-754
  required       value only
  optional       0x00/0x01 presence byte, then the value if present
  repeated       count prefix (1, 2 or 4 bytes: smallest that fits the
                 declared max), then the elements
  fixed_repeated the declared number of elements, nothing else
  oneof          one tag byte, the 1-based ordinal of the set member
                 (0x00 allowed only for optional groups), then the value
  messages       nested inline without a length prefix

Values are plain dicts keyed by field name.
"""

import json
import struct

_SCALARS = {
    "uint8": ("<B", 0, 0xFF),
    "int8": ("<b", -0x80, 0x7F),
    "uint16": ("<H", 0, 0xFFFF),
    "int16": ("<h", -0x8000, 0x7FFF),
    "uint32": ("<I", 0, 0xFFFFFFFF),
    "int32": ("<i", -0x80000000, 0x7FFFFFFF),
    "uint64": ("<Q", 0, 2**64 - 1),
    "int64": ("<q", -(2**63), 2**63 - 1),
    "float": ("<f", None, None),
    "float32": ("<f", None, None),
    "double": ("<d", None, None),
    "float64": ("<d", None, None),
}


class CodecError(Exception):
    pass


def _count_width(max_count):
    if max_count <= 0xFF:
        return "<B"
    if max_count <= 0xFFFF:
        return "<H"
    return "<I"


class Schema:
    """All message layouts from one descriptor file."""

    def __init__(self, descriptor_json):
        if isinstance(descriptor_json, (bytes, str)):
            descriptor_json = json.loads(descriptor_json)
        self.messages = {m["name"]: m for m in descriptor_json}

    @classmethod
    def from_file(cls, path):
        with open(path) as f:
            return cls(json.load(f))

    # -- encoding ------------------------------------------------------

    def encode(self, message_name, value):
        out = bytearray()
        self._put_message(message_name, value, out)
        return bytes(out)

    def _put_scalar(self, type_name, v, out):
        fmt, lo, hi = _SCALARS[type_name]
        if lo is not None:
            if not isinstance(v, int) or isinstance(v, bool) or not lo <= v <= hi:
                raise CodecError(f"{type_name} value {v!r} out of range")
            out += struct.pack(fmt, v)
        else:
            out += struct.pack(fmt, float(v))

    def _put_one(self, type_name, v, out):
        if type_name in _SCALARS:
            self._put_scalar(type_name, v, out)
        elif type_name in self.messages:
            self._put_message(type_name, v, out)
        else:
            raise CodecError(f"unknown type {type_name!r}")

    def _put_message(self, name, value, out):
        if not isinstance(value, dict):
            raise CodecError(f"{name}: expected dict, got {type(value).__name__}")
        msg = self.messages[name]
        groups_seen = {}
        for f in msg["fields"]:
            rule = f["rule"]
            v = value.get(f["name"])
            if rule == "required":
                if v is None:
                    raise CodecError(f"{name}.{f['name']} is required")
                self._put_one(f["type"], v, out)
            elif rule == "optional":
                out += b"\x01" if v is not None else b"\x00"
                if v is not None:
                    self._put_one(f["type"], v, out)
            elif rule == "repeated":
                v = v or []
                if len(v) > f["count"]:
                    raise CodecError(
                        f"{name}.{f['name']}: {len(v)} elements exceed max {f['count']}")
                out += struct.pack(_count_width(f["count"]), len(v))
                for item in v:
                    self._put_one(f["type"], item, out)
            elif rule == "fixed_repeated":
                if v is None or len(v) != f["count"]:
                    raise CodecError(
                        f"{name}.{f['name']}: exactly {f['count']} elements required")
                for item in v:
                    self._put_one(f["type"], item, out)
            elif rule == "oneof":
                groups_seen.setdefault(f["group"], [])
                if v is not None:
                    groups_seen[f["group"]].append((f["ordinal"], f))
            else:
                raise CodecError(f"unknown rule {rule!r}")
            if rule == "oneof":
                self._maybe_close_group(name, msg, f, value, groups_seen, out)
        return out

    def _maybe_close_group(self, name, msg, f, value, groups_seen, out):
        """Emit a oneof group once its last declared member has passed."""
        group = next(g for g in msg["oneofs"] if g["name"] == f["group"])
        if f["name"] != group["members"][-1]:
            return
        present = groups_seen[f["group"]]
        if len(present) > 1:
            raise CodecError(f"{name}.{f['group']}: more than one member set")
        if not present:
            if not group["optional"]:
                raise CodecError(f"{name}.{f['group']}: no member set")
            out += b"\x00"
            return
        ordinal, member = present[0]
        out += struct.pack("<B", ordinal)
        self._put_one(member["type"], value[member["name"]], out)

    # -- decoding ------------------------------------------------------

    def decode(self, message_name, data, exact=True):
        value, pos = self._take_message(message_name, data, 0)
        if exact and pos != len(data):
            raise CodecError(f"{len(data) - pos} unconsumed trailing bytes")
        return value

    def _take(self, data, pos, fmt):
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CodecError("input truncated")
        return struct.unpack_from(fmt, data, pos)[0], pos + size

    def _take_one(self, type_name, data, pos):
        if type_name in _SCALARS:
            return self._take(data, pos, _SCALARS[type_name][0])
        if type_name in self.messages:
            return self._take_message(type_name, data, pos)
        raise CodecError(f"unknown type {type_name!r}")

    def _take_message(self, name, data, pos):
        msg = self.messages[name]
        value = {}
        done_groups = set()
        for f in msg["fields"]:
            rule = f["rule"]
            if rule == "required":
                value[f["name"]], pos = self._take_one(f["type"], data, pos)
            elif rule == "optional":
                flag, pos = self._take(data, pos, "<B")
                if flag == 1:
                    value[f["name"]], pos = self._take_one(f["type"], data, pos)
                elif flag == 0:
                    value[f["name"]] = None
                else:
                    raise CodecError(f"{name}.{f['name']}: bad presence byte {flag:#x}")
            elif rule == "repeated":
                n, pos = self._take(data, pos, _count_width(f["count"]))
                if n > f["count"]:
                    raise CodecError(f"{name}.{f['name']}: count {n} exceeds max")
                items = []
                for _ in range(n):
                    item, pos = self._take_one(f["type"], data, pos)
                    items.append(item)
                value[f["name"]] = items
            elif rule == "fixed_repeated":
                items = []
                for _ in range(f["count"]):
                    item, pos = self._take_one(f["type"], data, pos)
                    items.append(item)
                value[f["name"]] = items
            elif rule == "oneof":
                if f["group"] in done_groups:
                    continue
                done_groups.add(f["group"])
                group = next(g for g in msg["oneofs"] if g["name"] == f["group"])
                tag, pos = self._take(data, pos, "<B")
                if tag == 0:
                    if not group["optional"]:
                        raise CodecError(f"{name}.{f['group']}: zero tag")
                    continue
                if tag > len(group["members"]):
                    raise CodecError(f"{name}.{f['group']}: bad tag {tag}")
                chosen = group["members"][tag - 1]
                member = next(x for x in msg["fields"] if x["name"] == chosen)
                value[chosen], pos = self._take_one(member["type"], data, pos)
            else:
                raise CodecError(f"unknown rule {rule!r}")
        return value, pos
