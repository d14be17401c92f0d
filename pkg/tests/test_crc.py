"""CRC16 (CCITT-FALSE variant: poly 0x1021, init 0xFFFF, no reflection)."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from badgesim.crc import crc16


def crc16_bitwise(data: bytes, crc: int = 0xFFFF) -> int:
    """Independent shift-register reference."""
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


@pytest.mark.parametrize("data,expected", [
    (b"", 0xFFFF),
    (b"123456789", 0x29B1),   # standard check value for CRC-16/CCITT-FALSE
    (b"\x00", 0xE1F0),
    (b"\xff" * 4, 0x1D0F),
])
def test_known_vectors(data, expected):
    assert crc16(data) == crc16_bitwise(data) == expected


@given(st.binary(max_size=256))
def test_matches_bitwise_reference(data):
    assert crc16(data) == crc16_bitwise(data)


@given(st.binary(max_size=128), st.binary(max_size=128))
def test_incremental(a, b):
    assert crc16(b, crc16(a)) == crc16(a + b)


@given(st.binary(min_size=1, max_size=64), st.integers(0, 7),
       st.data())
def test_detects_single_bit_flips(data, bit, draw):
    idx = draw.draw(st.integers(0, len(data) - 1))
    corrupted = bytearray(data)
    corrupted[idx] ^= 1 << bit
    assert crc16(bytes(corrupted)) != crc16(data)
