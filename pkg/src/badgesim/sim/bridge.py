"""TCP bridge: expose a simulated badge on a localhost socket.

The stream carries exactly the link framing (2-byte little-endian length
prefix per message), so an external client talks to the badge without any
knowledge of simulator internals. Incoming bytes are sliced into 20-byte
packets onto the simulated link; virtual time advances until the badge goes
quiet, then the collected response bytes are written back.
"""

from __future__ import annotations

import random
import socket

from badgesim import chunks as ch
from badgesim.badge import Badge
from badgesim.sim.loop import EventLoop
from badgesim.sim.transport import Link

INTERVAL_NS = 50_000_000
QUIET_INTERVALS = 4


class BridgeServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 prestore_mic: int = 0, prestore_scan: int = 0,
                 seed: int = 0, sender_mode: str = "timer",
                 base_unix_ms: int = 1_700_000_000_000):
        self.loop = EventLoop()
        self.badge = Badge(self.loop, sender_mode=sender_mode)
        self.link = Link(self.loop, interval_ns=INTERVAL_NS, seed=seed)
        self.badge.attach_link(self.link, self.link.a)
        self.link.connect()

        rng = random.Random(seed)
        for i in range(prestore_mic):
            chunk = ch.MicrophoneChunk(
                ch.Timestamp.from_unix_ms(base_unix_ms + i * 5600), 50,
                [rng.randrange(256) for _ in range(ch.MIC_CHUNK_POINTS)])
            self.badge.store_chunk(ch.SOURCE_MIC, chunk)
        for i in range(prestore_scan):
            devices = ch.scan_aggregate_and_sort(
                [(rng.randrange(1, 20000), -rng.randrange(40, 95))
                 for _ in range(rng.randrange(0, 40))])
            chunk = ch.ScanChunk(
                ch.Timestamp.from_unix_ms(base_unix_ms + i * 15000), devices)
            self.badge.store_chunk(ch.SOURCE_SCAN, chunk)

        self._rx_buf = bytearray()
        self.link.b.on_rx = self._rx_buf.extend

        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)
        self.address = self._sock.getsockname()

    def _feed(self, data: bytes) -> None:
        pos = 0
        while pos < len(data):
            slice_ = data[pos : pos + 20]
            if self.link.b.try_send(slice_):
                pos += len(slice_)
            else:
                self.loop.run_until(self.loop.now_ns + INTERVAL_NS)
        self._run_until_quiet()

    def _run_until_quiet(self) -> None:
        quiet = 0
        while quiet < QUIET_INTERVALS:
            self.loop.run_until(self.loop.now_ns + INTERVAL_NS)
            busy = (self.badge.sender.backlog or self.link.a.staged
                    or self.link.b.staged)
            quiet = 0 if busy else quiet + 1

    def serve_one_client(self) -> None:
        """Accept a single connection and serve it until the peer closes."""
        conn, _addr = self._sock.accept()
        try:
            conn.settimeout(10.0)
            while True:
                try:
                    data = conn.recv(65536)
                except socket.timeout:
                    break
                if not data:
                    break
                self._feed(data)
                if self._rx_buf:
                    conn.sendall(bytes(self._rx_buf))
                    self._rx_buf.clear()
        finally:
            conn.close()

    def close(self) -> None:
        self._sock.close()


def serve(host: str = "127.0.0.1", port: int = 3333, clients: int = 1,
          **kwargs) -> None:
    server = BridgeServer(host=host, port=port, **kwargs)
    try:
        print(f"badge bridge listening on {server.address[0]}:{server.address[1]}")
        for _ in range(clients):
            server.serve_one_client()
    finally:
        server.close()
