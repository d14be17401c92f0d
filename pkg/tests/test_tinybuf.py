"""Schema parser, codec, and bindings for the tinybuf wire format."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from badgesim.tinybuf import codec, emit, schema

TEST_SCHEMA = """
message Inner {
    required uint16 a;
    optional int8 b;
}

message Outer {
    required uint8 head;
    optional Inner nested;
    repeated uint16 words[100];
    repeated Inner inners[3];
    fixed_repeated uint8 pair[2];
    required double level;
    oneof pick {
        uint32 num;
        Inner thing;
    }
    optional oneof extra {
        uint8 small;
        uint16 big;
    }
}

message Wide {
    repeated uint8 lots[300];
    repeated uint8 huge[70000];
}
"""

DESCS = schema.parse_schema(TEST_SCHEMA)
BY_NAME = {d.name: d for d in DESCS}


def enc(name, value):
    return codec.encode(BY_NAME[name], value, DESCS)


def dec(name, data):
    return codec.decode(BY_NAME[name], data, DESCS)


# ---------------------------------------------------------------- parsing

def test_parse_shapes():
    outer = BY_NAME["Outer"]
    rules = [(f.name, f.frule.rule.value) for f in outer.fields]
    assert ("head", "required") in rules
    assert ("nested", "optional") in rules
    assert ("words", "repeated") in rules
    assert ("pair", "fixed_repeated") in rules
    assert set(outer.oneofs) == {"pick", "extra"}


@pytest.mark.parametrize("text", [
    "message {}",                                # missing name
    "message M { required uint7 x; }",           # unknown scalar
    "message M { required Missing x; }",         # unknown message
    "message M { repeated uint8 x; }",           # repeated without count
    "message M { required uint8 x; required uint8 x; }",  # duplicate field
    "message M { oneof g { } }",                 # empty oneof
    "message M { bogus uint8 x; }",              # unknown rule
])
def test_parse_errors(text):
    with pytest.raises(schema.SchemaError):
        schema.parse_schema(text)


# ------------------------------------------------------- wire-size oracle

def test_count_prefix_width():
    assert codec.count_prefix_width(1) == 1
    assert codec.count_prefix_width(255) == 1
    assert codec.count_prefix_width(256) == 2
    assert codec.count_prefix_width(65535) == 2
    assert codec.count_prefix_width(65536) == 4


def expected_size(name, value):
    """Independent size computation from first principles."""
    widths = {"uint8": 1, "int8": 1, "uint16": 2, "int16": 2, "uint32": 4,
              "int32": 4, "uint64": 8, "int64": 8, "float": 4, "double": 8}

    def one(tname, v):
        if tname in widths:
            return widths[tname]
        return msg(tname, v)

    def msg(mname, v):
        d = BY_NAME[mname]
        total = 0
        groups_done = set()
        for f in d.fields:
            rule = f.frule.rule.value
            tname = (f.ftype.scalar.value[0] if f.ftype.scalar
                     else f.ftype.message)
            if rule == "required":
                total += one(tname, v[f.name])
            elif rule == "optional":
                total += 1
                if v.get(f.name) is not None:
                    total += one(tname, v[f.name])
            elif rule == "repeated":
                n = f.frule.count
                total += 1 if n <= 255 else (2 if n <= 65535 else 4)
                total += sum(one(tname, x) for x in v.get(f.name) or [])
            elif rule == "fixed_repeated":
                total += sum(one(tname, x) for x in v[f.name])
            elif rule == "oneof":
                if f.frule.oneof_group in groups_done:
                    continue
                groups_done.add(f.frule.oneof_group)
                total += 1
                if v.get(f.name) is not None:
                    total += one(tname, v[f.name])
                else:
                    for m in d.oneofs[f.frule.oneof_group].members:
                        if m != f.name and v.get(m) is not None:
                            member = next(x for x in d.fields if x.name == m)
                            tn = (member.ftype.scalar.value[0]
                                  if member.ftype.scalar
                                  else member.ftype.message)
                            total += one(tn, v[m])
        return total
    return msg(name, value)


INNER = {"a": 7, "b": None}
OUTER_FULL = {
    "head": 1, "nested": {"a": 65535, "b": -12},
    "words": [1, 2, 3], "inners": [INNER, {"a": 0, "b": 5}],
    "pair": [9, 9], "level": -0.5, "num": 123456, "big": 40000,
}
OUTER_SPARSE = {
    "head": 0, "nested": None, "words": [], "inners": [],
    "pair": [0, 0], "level": 0.0, "thing": {"a": 1, "b": None},
}


@pytest.mark.parametrize("value", [OUTER_FULL, OUTER_SPARSE])
def test_size_matches_oracle_and_roundtrip(value):
    data = enc("Outer", value)
    assert len(data) == expected_size("Outer", value)
    assert codec.encoded_size(BY_NAME["Outer"], value, DESCS) == len(data)
    back = dec("Outer", data)
    assert enc("Outer", back) == data


def test_count_prefix_sizes_on_wire():
    # max 100 -> 1-byte prefix, max 300 -> 2 bytes, max 70000 -> 4 bytes
    assert len(enc("Wide", {"lots": [], "huge": []})) == 2 + 4
    assert len(enc("Wide", {"lots": [1] * 10, "huge": [2] * 5})) == 6 + 15


def test_exact_bytes_worked_example():
    data = enc("Inner", {"a": 0x1234, "b": -2})
    assert data == bytes([0x34, 0x12, 0x01, 0xFE])
    assert enc("Inner", {"a": 1, "b": None}) == bytes([0x01, 0x00, 0x00])


# ------------------------------------------------------- hypothesis trips

inner_st = st.fixed_dictionaries({
    "a": st.integers(0, 0xFFFF),
    "b": st.none() | st.integers(-128, 127),
})


def outer_st():
    base = st.fixed_dictionaries({
        "head": st.integers(0, 255),
        "nested": st.none() | inner_st,
        "words": st.lists(st.integers(0, 0xFFFF), max_size=100),
        "inners": st.lists(inner_st, max_size=3),
        "pair": st.lists(st.integers(0, 255), min_size=2, max_size=2),
        "level": st.floats(allow_nan=False, allow_infinity=False,
                           width=32).map(float),
        "pick": st.sampled_from(["num", "thing"]),
        "extra": st.sampled_from(["small", "big", None]),
    })

    def fill(v):
        v = dict(v)
        pick, extra = v.pop("pick"), v.pop("extra")
        v["num"] = 42 if pick == "num" else None
        v["thing"] = {"a": 3, "b": 1} if pick == "thing" else None
        v["small"] = 7 if extra == "small" else None
        v["big"] = 700 if extra == "big" else None
        return v
    return base.map(fill)


def _strip_nones(v):
    if isinstance(v, dict):
        return {k: _strip_nones(x) for k, x in v.items() if x is not None}
    if isinstance(v, list):
        return [_strip_nones(x) for x in v]
    return v


@settings(max_examples=500)
@given(outer_st())
def test_roundtrip_property(value):
    data = enc("Outer", value)
    back = dec("Outer", data)
    assert enc("Outer", back) == data
    for k, v in value.items():
        if v is not None and k != "level":
            assert _strip_nones(back[k]) == _strip_nones(v)
    assert back["level"] == struct.unpack("<d", struct.pack("<d",
                                                            value["level"]))[0]


# ------------------------------------------------------------- bad input

def test_encode_rejects_bad_values():
    with pytest.raises(codec.ValueError_):
        enc("Inner", {"a": -1, "b": None})
    with pytest.raises(codec.ValueError_):
        enc("Inner", {"a": 0x10000, "b": None})
    with pytest.raises(codec.ValueError_):
        enc("Inner", {"b": None})                       # missing required
    with pytest.raises(codec.ValueError_):
        enc("Outer", dict(OUTER_FULL, words=[0] * 101))  # over max count
    with pytest.raises(codec.ValueError_):
        enc("Outer", dict(OUTER_FULL, pair=[1]))         # wrong fixed length
    with pytest.raises(codec.ValueError_):
        enc("Outer", dict(OUTER_FULL, num=None, thing=None))  # no member
    with pytest.raises(codec.ValueError_):
        enc("Outer", dict(OUTER_FULL, thing=INNER))      # two members


def test_decode_rejects_bad_input():
    good = enc("Inner", {"a": 5, "b": 1})
    with pytest.raises(codec.DecodeError):
        dec("Inner", good[:-1])                          # truncated
    with pytest.raises(codec.DecodeError):
        dec("Inner", good + b"\x00")                     # trailing bytes
    with pytest.raises(codec.DecodeError):
        dec("Inner", bytes([0x05, 0x00, 0x02, 0x00]))    # bad presence byte
    full = enc("Outer", OUTER_FULL)
    # corrupt the repeated-words count to exceed the max
    idx = full.index(bytes([3, 1, 0, 2, 0, 3, 0]))
    with pytest.raises(codec.DecodeError):
        dec("Outer", full[:idx] + b"\x65" + full[idx + 1:])


def test_decode_rejects_bad_oneof_tag():
    v = dict(OUTER_SPARSE, thing=None, num=7)
    data = bytearray(enc("Outer", v))
    tag_at = len(data) - 1 - 4 - 1  # [tag][uint32 num][extra tag 0]
    assert data[tag_at] == 1
    data[tag_at] = 3
    with pytest.raises(codec.DecodeError):
        dec("Outer", bytes(data))
    data[tag_at] = 0
    with pytest.raises(codec.DecodeError):
        dec("Outer", bytes(data))


# --------------------------------------------------------------- bindings

def test_python_bindings_roundtrip(tmp_path):
    source = emit.emit_bindings(DESCS, "python")
    ns = {}
    exec(compile(source, "bindings", "exec"), ns)
    Inner, Outer = ns["Inner"], ns["Outer"]
    inner = Inner(a=9, b=-3)
    assert inner.encode() == enc("Inner", {"a": 9, "b": -3})
    outer = Outer(head=2, nested=Inner(a=1, b=None), words=[5],
                  inners=[], pair=[1, 2], level=1.5, num=10,
                  thing=None, small=None, big=None)
    wire = outer.encode()
    assert dec("Outer", wire)["head"] == 2
    back = Outer.decode(wire)
    assert back.encode() == wire


def test_descriptor_json_roundtrip():
    text = emit.descriptors_to_json(DESCS)
    again = emit.descriptors_from_json(text)
    assert emit.descriptors_to_json(again) == text
    data = codec.encode({d.name: d for d in again}["Inner"],
                        {"a": 3, "b": None}, again)
    assert data == enc("Inner", {"a": 3, "b": None})
