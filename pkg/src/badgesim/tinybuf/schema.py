"""Schema DSL parser producing message descriptors.

Grammar (line oriented, ``#`` starts a comment):

    message Name {
        required uint32 seconds;
        optional uint8 flags;
        repeated uint16 vals[100];        # up to 100 elements
        fixed_repeated int8 axes[3];      # exactly 3 elements
        required OtherMessage nested;
        oneof payload {                   # or: optional oneof payload { ... }
            TypeA a;
            TypeB b;
        }
    }

Scalar types: uint8/int8/uint16/int16/uint32/int32/uint64/int64/float/double.
A non-scalar type name references a message declared earlier in the same
schema; forward references and recursion are rejected.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class SchemaError(Exception):
    """Schema text could not be parsed or validated."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


class ScalarKind(enum.Enum):
    UINT8 = ("uint8", 1, False, False)
    INT8 = ("int8", 1, True, False)
    UINT16 = ("uint16", 2, False, False)
    INT16 = ("int16", 2, True, False)
    UINT32 = ("uint32", 4, False, False)
    INT32 = ("int32", 4, True, False)
    UINT64 = ("uint64", 8, False, False)
    INT64 = ("int64", 8, True, False)
    FLOAT32 = ("float", 4, True, True)
    FLOAT64 = ("double", 8, True, True)

    def __init__(self, token: str, width: int, signed: bool, is_float: bool):
        self.token = token
        self.width = width
        self.signed = signed
        self.is_float = is_float


_SCALARS = {k.token: k for k in ScalarKind}
# Descriptor-file spellings are accepted on input as well.
_SCALARS["float32"] = ScalarKind.FLOAT32
_SCALARS["float64"] = ScalarKind.FLOAT64


@dataclass(frozen=True)
class FieldType:
    """Either a scalar kind or a reference to a previously declared message."""

    scalar: ScalarKind | None = None
    message: str | None = None

    @property
    def is_message(self) -> bool:
        return self.message is not None

    def __str__(self) -> str:
        return self.message if self.message else self.scalar.token


class Rule(enum.Enum):
    REQUIRED = "required"
    OPTIONAL = "optional"
    REPEATED = "repeated"
    FIXED_REPEATED = "fixed_repeated"
    ONEOF = "oneof"


@dataclass(frozen=True)
class FieldRule:
    rule: Rule
    count: int | None = None  # max_count (repeated) or count (fixed_repeated)
    oneof_group: str | None = None
    oneof_ordinal: int | None = None  # 1-based position within the group


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    ftype: FieldType
    frule: FieldRule


@dataclass(frozen=True)
class OneofGroup:
    name: str
    members: tuple[str, ...]  # field names, declaration order
    optional: bool = False


@dataclass
class MessageDescriptor:
    name: str
    fields: list[FieldDescriptor] = field(default_factory=list)
    oneofs: dict[str, OneofGroup] = field(default_factory=dict)

    def field_by_name(self, name: str) -> FieldDescriptor:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

_FIELD_RE = re.compile(
    r"^(required|optional|repeated|fixed_repeated)\s+"
    r"([A-Za-z_][A-Za-z0-9_]*)\s+"
    r"([A-Za-z_][A-Za-z0-9_]*)\s*"
    r"(?:\[\s*(-?\d+)\s*\])?\s*;$"
)
_ONEOF_MEMBER_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s+([A-Za-z_][A-Za-z0-9_]*)\s*;$")


def _resolve_type(token: str, known: dict[str, MessageDescriptor], line: int, col: int) -> FieldType:
    if token in _SCALARS:
        return FieldType(scalar=_SCALARS[token])
    if token in known:
        return FieldType(message=token)
    raise SchemaError(f"unknown type {token!r} (forward references are not allowed)", line, col)


def parse_schema(text: str) -> list[MessageDescriptor]:
    """Parse schema source into descriptors, in declaration order."""
    messages: dict[str, MessageDescriptor] = {}
    order: list[MessageDescriptor] = []
    cur: MessageDescriptor | None = None
    cur_oneof: tuple[str, bool, list[str]] | None = None  # (name, optional, members)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col = len(raw) - len(raw.lstrip()) + 1

        if cur is None:
            m = re.match(r"^message\s+([A-Za-z_][A-Za-z0-9_]*)\s*\{$", line)
            if not m:
                raise SchemaError(f"expected 'message Name {{', got {line!r}", lineno, col)
            name = m.group(1)
            if name in messages:
                raise SchemaError(f"duplicate message name {name!r}", lineno, col)
            cur = MessageDescriptor(name=name)
            continue

        if cur_oneof is not None:
            if line == "}":
                gname, optional, members = cur_oneof
                if not members:
                    raise SchemaError(f"oneof {gname!r} has no members", lineno, col)
                cur.oneofs[gname] = OneofGroup(gname, tuple(members), optional)
                cur_oneof = None
                continue
            m = _ONEOF_MEMBER_RE.match(line)
            if not m:
                raise SchemaError(f"expected '<type> <name>;' inside oneof, got {line!r}", lineno, col)
            tname, fname = m.groups()
            if any(f.name == fname for f in cur.fields):
                raise SchemaError(f"duplicate field name {fname!r}", lineno, col)
            ftype = _resolve_type(tname, messages, lineno, col)
            gname, optional, members = cur_oneof
            members.append(fname)
            cur.fields.append(
                FieldDescriptor(
                    fname,
                    ftype,
                    FieldRule(Rule.ONEOF, oneof_group=gname, oneof_ordinal=len(members)),
                )
            )
            continue

        if line == "}":
            messages[cur.name] = cur
            order.append(cur)
            cur = None
            continue

        m = re.match(r"^(optional\s+)?oneof\s+([A-Za-z_][A-Za-z0-9_]*)\s*\{$", line)
        if m:
            gname = m.group(2)
            if gname in cur.oneofs:
                raise SchemaError(f"duplicate oneof group {gname!r}", lineno, col)
            cur_oneof = (gname, m.group(1) is not None, [])
            continue

        m = _FIELD_RE.match(line)
        if not m:
            raise SchemaError(f"cannot parse field declaration {line!r}", lineno, col)
        rule_tok, type_tok, fname, count_tok = m.groups()
        if any(f.name == fname for f in cur.fields):
            raise SchemaError(f"duplicate field name {fname!r}", lineno, col)
        ftype = _resolve_type(type_tok, messages, lineno, col)
        rule = Rule(rule_tok)
        count = None
        if rule in (Rule.REPEATED, Rule.FIXED_REPEATED):
            if count_tok is None:
                raise SchemaError(f"{rule.value} field {fname!r} needs a [count]", lineno, col)
            count = int(count_tok)
            if count < 1:
                raise SchemaError(f"{rule.value} count must be >= 1, got {count}", lineno, col)
        elif count_tok is not None:
            raise SchemaError(f"{rule.value} field {fname!r} cannot have a [count]", lineno, col)
        cur.fields.append(FieldDescriptor(fname, ftype, FieldRule(rule, count=count)))

    if cur_oneof is not None:
        raise SchemaError("unterminated oneof block", 0, 0)
    if cur is not None:
        raise SchemaError(f"unterminated message {cur.name!r}", 0, 0)
    return order


def canonical_text(descs: list[MessageDescriptor]) -> str:
    """Render descriptors back to schema source (parse round-trip aid)."""
    out = []
    for d in descs:
        out.append(f"message {d.name} {{")
        open_group = None
        for f in d.fields:
            if f.frule.rule is Rule.ONEOF:
                if f.frule.oneof_group != open_group:
                    if open_group is not None:
                        out.append("    }")
                    g = d.oneofs[f.frule.oneof_group]
                    prefix = "optional " if g.optional else ""
                    out.append(f"    {prefix}oneof {g.name} {{")
                    open_group = g.name
                out.append(f"        {f.ftype} {f.name};")
                continue
            if open_group is not None:
                out.append("    }")
                open_group = None
            if f.frule.rule in (Rule.REPEATED, Rule.FIXED_REPEATED):
                out.append(f"    {f.frule.rule.value} {f.ftype} {f.name}[{f.frule.count}];")
            else:
                out.append(f"    {f.frule.rule.value} {f.ftype} {f.name};")
        if open_group is not None:
            out.append("    }")
        out.append("}")
        out.append("")
    return "\n".join(out)
