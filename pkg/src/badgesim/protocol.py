"""Badge protocol: shared schema access and link framing.

A frame is a 2-byte little-endian payload length followed by one encoded
Request or Response message. The schema source ships with the package as
``data/protocol.tb`` so other implementations can compile it independently.
"""

from __future__ import annotations

import importlib.resources
import struct

from badgesim.tinybuf import codec, schema

RESTART_MAGIC = 0xA5
MAX_FRAME_PAYLOAD = 0xFFFF

# status byte bit assignment (frozen in docs/wire-format.md)
FLAG_SYNCED = 1 << 0
FLAG_MIC = 1 << 1
FLAG_SCAN = 1 << 2
FLAG_ACCEL = 1 << 3
FLAG_ACCEL_EVENT = 1 << 4
FLAG_BATTERY = 1 << 5


class FramingError(Exception):
    pass


def schema_text() -> str:
    return (importlib.resources.files("badgesim") / "data" / "protocol.tb").read_text()


_DESCRIPTORS: list[schema.MessageDescriptor] | None = None


def descriptors() -> list[schema.MessageDescriptor]:
    global _DESCRIPTORS
    if _DESCRIPTORS is None:
        _DESCRIPTORS = schema.parse_schema(schema_text())
    return _DESCRIPTORS


def descriptor(name: str) -> schema.MessageDescriptor:
    for d in descriptors():
        if d.name == name:
            return d
    raise KeyError(name)


def encode_message(name: str, value: dict) -> bytes:
    return codec.encode(descriptor(name), value, descriptors())


def decode_message(name: str, data: bytes) -> dict:
    return codec.decode(descriptor(name), data, descriptors())


def pack_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME_PAYLOAD:
        raise FramingError(f"payload of {len(payload)} bytes exceeds frame limit")
    return struct.pack("<H", len(payload)) + payload


def encode_request(value: dict) -> bytes:
    return pack_frame(encode_message("Request", value))


def encode_response(value: dict) -> bytes:
    return pack_frame(encode_message("Response", value))


class FrameSplitter:
    """Reassembles frames from arbitrarily sliced link data."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        """Append link bytes; return any completed frame payloads."""
        self._buf += data
        frames = []
        while True:
            if len(self._buf) < 2:
                break
            (length,) = struct.unpack_from("<H", self._buf, 0)
            if len(self._buf) < 2 + length:
                break
            frames.append(bytes(self._buf[2 : 2 + length]))
            del self._buf[: 2 + length]
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
