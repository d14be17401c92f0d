"""Link model: periodic connection events moving 20-byte slices.

Each direction owns a small staging buffer; `try_send` fails when the
buffer already holds a full connection event's worth of packets, modeling
the radio stack reporting busy. Every connection interval the staged
packets (at most 6 per direction) are delivered to the peer.
"""

from __future__ import annotations

import random

from badgesim.sim.loop import EventLoop

MTU = 20
MAX_PACKETS_PER_EVENT = 6
DEFAULT_INTERVAL_NS = 50_000_000  # 50 ms


class TransportError(Exception):
    pass


class Endpoint:
    """One side of the link."""

    def __init__(self, link: "Link", name: str):
        self.link = link
        self.name = name
        self.staged: list[bytes] = []
        self.on_rx = None  # callback(bytes)
        self.on_tx_done = None  # callback(n_packets) after a connection event
        self.sent_bytes = 0
        self.received_bytes = 0
        self.rejected_sends = 0

    def try_send(self, slice_: bytes) -> bool:
        """Stage one packet; False when the stack is busy."""
        if not self.link.connected:
            return False
        if len(slice_) > MTU:
            raise TransportError(f"slice of {len(slice_)} bytes exceeds MTU {MTU}")
        if len(self.staged) >= MAX_PACKETS_PER_EVENT:
            self.rejected_sends += 1
            return False
        self.staged.append(bytes(slice_))
        return True


class Link:
    """Bidirectional connection with periodic delivery opportunities."""

    def __init__(self, loop: EventLoop, interval_ns: int = DEFAULT_INTERVAL_NS,
                 jitter: bool = False, seed: int = 0):
        self.loop = loop
        self.interval_ns = interval_ns
        self.jitter = jitter
        self._rng = random.Random(seed)
        self.a = Endpoint(self, "a")
        self.b = Endpoint(self, "b")
        self.connected = False
        self._event_handle = None

    def peer_of(self, ep: Endpoint) -> Endpoint:
        return self.b if ep is self.a else self.a

    def connect(self) -> None:
        if self.connected:
            return
        self.connected = True
        self._event_handle = self.loop.call_later(self.interval_ns, self._event)

    def disconnect(self) -> None:
        self.connected = False
        if self._event_handle is not None:
            self._event_handle.cancel()
            self._event_handle = None
        self.a.staged.clear()
        self.b.staged.clear()

    def _event(self) -> None:
        if not self.connected:
            return
        self._event_handle = self.loop.call_later(self.interval_ns, self._event)
        for ep in (self.a, self.b):
            packets = ep.staged[:MAX_PACKETS_PER_EVENT]
            ep.staged = ep.staged[MAX_PACKETS_PER_EVENT:]
            if not packets:
                continue
            payload = b"".join(packets)
            ep.sent_bytes += len(payload)
            peer = self.peer_of(ep)
            delay = 0
            if self.jitter:
                delay = self._rng.randrange(0, self.interval_ns + 1)
            self.loop.call_later(delay, self._deliver, ep, peer, payload,
                                 len(packets))

    def _deliver(self, sender: Endpoint, peer: Endpoint, payload: bytes,
                 n_packets: int) -> None:
        peer.received_bytes += len(payload)
        if peer.on_rx is not None:
            peer.on_rx(payload)
        if sender.on_tx_done is not None:
            sender.on_tx_done(n_packets)
