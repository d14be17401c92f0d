"""TCP client for a badge exposed over the socket bridge.

Frames are a 2-byte little-endian length prefix followed by one encoded
message. Requests are `Request` messages, replies `Response` messages.
"""

import socket
import struct
import time
from importlib import resources

from .codec import CodecError, Schema

SOURCES = ("mic", "scan", "accel", "accel_event", "battery")
_DATA_KIND = {
    "mic": "mic_data",
    "scan": "scan_data",
    "accel": "accel_data",
    "accel_event": "accel_event_data",
    "battery": "battery_data",
}
DEFAULT_CONFIGS = {
    "mic": {"avg_period_ms": 50},
    "scan": {"window_ms": 100, "interval_ms": 300, "duration_s": 3,
             "period_s": 15, "aggregation": 0},
    "accel": {"datarate_hz": 10, "operating_mode": 0,
              "full_scale_g": 4, "fifo_read_period_ms": 1000},
    "accel_event": {"threshold_mg": 250, "min_duration_ms": 0,
                    "dead_time_ms": 1000},
    "battery": {"read_period_s": 60},
}


def default_schema():
    text = resources.files("badgehub.data").joinpath(
        "protocol.descriptor.json").read_text()
    return Schema(text)


def split_timestamp(unix_ms):
    return {"seconds": unix_ms // 1000, "ms": unix_ms % 1000}


def join_timestamp(ts):
    return ts["seconds"] * 1000 + ts["ms"]


class HubSession:
    """One connection to a badge bridge."""

    def __init__(self, host="127.0.0.1", port=0, schema=None, timeout=10.0):
        self.schema = schema or default_schema()
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buf = b""

    def close(self):
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- framing -------------------------------------------------------

    def _send_request(self, request_value):
        body = self.schema.encode("Request", request_value)
        self.sock.sendall(struct.pack("<H", len(body)) + body)

    def _recv_response(self):
        while True:
            if len(self._buf) >= 2:
                (length,) = struct.unpack_from("<H", self._buf)
                if len(self._buf) >= 2 + length:
                    frame = self._buf[2:2 + length]
                    self._buf = self._buf[2 + length:]
                    return self.schema.decode("Response", frame)
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ConnectionError("badge closed the connection")
            self._buf += chunk

    @staticmethod
    def _response_kind(resp):
        for key, v in resp.items():
            if v is not None:
                return key, v
        raise CodecError("empty response")

    # -- operations ----------------------------------------------------

    def status(self, badge_id=None, group=None, now_ms=None):
        """Sync the badge clock; optionally assign identity."""
        if now_ms is None:
            now_ms = int(time.time() * 1000)
        req = {"timestamp": split_timestamp(now_ms)}
        if badge_id is not None:
            req["assignment"] = {"id": badge_id, "group": group or 0}
        self._send_request({"status": req})
        kind, body = self._response_kind(self._recv_response())
        if kind != "status":
            raise CodecError(f"expected status response, got {kind}")
        return body

    def activate(self, badge_id, group, now_ms=None, sources=("mic",),
                 configs=None):
        """Assign identity, sync, and start recording on each source."""
        if now_ms is None:
            now_ms = int(time.time() * 1000)
        status = self.status(badge_id, group, now_ms)
        ts = split_timestamp(now_ms)
        for source in sources:
            config = dict(DEFAULT_CONFIGS[source])
            config.update((configs or {}).get(source, {}))
            self._send_request(
                {f"start_{source}": {"timestamp": ts, "config": config}})
            kind, body = self._response_kind(self._recv_response())
            if kind == "error":
                raise RuntimeError(f"start {source}: error code {body['code']}")
            if kind != "ack":
                raise CodecError(f"expected ack, got {kind}")
        return status

    def pull_data(self, source, since_ms):
        """Fetch all chunks for one source recorded at/after since_ms."""
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}")
        self._send_request({"data": {
            "source": SOURCES.index(source),
            "since": split_timestamp(since_ms),
        }})
        want = _DATA_KIND[source]
        chunks = []
        while True:
            kind, body = self._response_kind(self._recv_response())
            if kind == "data_end":
                return chunks
            if kind == "error":
                raise RuntimeError(f"data pull failed, error code {body['code']}")
            if kind != want:
                raise CodecError(f"expected {want} or data_end, got {kind}")
            chunks.append(body)

    def stream(self, n_points, source="mic", start=True, stop=True,
               max_polls=1000):
        """Collect n_points live stream samples from one source.

        The bridge is request-driven: badge time only advances while a
        request is being served. Each time the ack drains without enough
        points collected, the stream_start is re-sent as a poll (the badge
        treats a repeated stream_start as a no-op and acks it).
        """
        src = SOURCES.index(source)
        if start:
            self._send_request({"stream_start": {"source": src}})
        points = []
        polls = 0
        while len(points) < n_points:
            kind, body = self._response_kind(self._recv_response())
            if kind == "stream_point":
                points.append(body)
            elif kind == "ack" and len(points) < n_points:
                polls += 1
                if polls > max_polls:
                    raise TimeoutError(
                        f"no stream data after {max_polls} polls; "
                        f"is the {source} source started?")
                self._send_request({"stream_start": {"source": src}})
        if stop:
            self._send_request({"stream_stop": {"source": src}})
        return points
