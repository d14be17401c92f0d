"""In-RAM queues used between sampling and storage.

ChunkFifo hands out references to fixed slots instead of copying chunk
payloads around; CircularFifo is a plain byte-record ring that drops the
oldest entry when full.
"""

from __future__ import annotations

from enum import Enum


class FifoError(Exception):
    pass


class SlotState(Enum):
    FREE = "free"
    OPEN_WRITE = "open-for-write"
    FINALIZED = "finalized"
    OPEN_READ = "open-for-read"


class Slot:
    """One chunk slot; `value` is owned by whoever holds the slot open."""

    def __init__(self, index: int):
        self.index = index
        self.state = SlotState.FREE
        self.value = None
        self._seq = -1  # finalization order, for the overwrite policy


class ChunkFifo:
    """Zero-copy chunk queue with overwrite-last semantics.

    open_write returns a free slot when one exists; otherwise it reuses the
    most recently finalized slot, so under overload the newest pending chunk
    is the one sacrificed and older backlog survives.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise FifoError("capacity must be >= 1")
        self.slots = [Slot(i) for i in range(capacity)]
        self._next_seq = 0
        self.overwrites = 0

    def open_write(self) -> Slot:
        for slot in self.slots:
            if slot.state is SlotState.FREE:
                slot.state = SlotState.OPEN_WRITE
                return slot
        finalized = [s for s in self.slots if s.state is SlotState.FINALIZED]
        if not finalized:
            raise FifoError("no free or finalized slot to reuse")
        slot = max(finalized, key=lambda s: s._seq)
        slot.state = SlotState.OPEN_WRITE
        slot.value = None
        self.overwrites += 1
        return slot

    def finalize_write(self, slot: Slot) -> None:
        if slot.state is not SlotState.OPEN_WRITE:
            raise FifoError(f"finalize of slot in state {slot.state.value}")
        slot.state = SlotState.FINALIZED
        slot._seq = self._next_seq
        self._next_seq += 1

    def open_read(self) -> Slot | None:
        """Oldest finalized slot, or None when nothing is pending."""
        finalized = [s for s in self.slots if s.state is SlotState.FINALIZED]
        if not finalized:
            return None
        slot = min(finalized, key=lambda s: s._seq)
        slot.state = SlotState.OPEN_READ
        return slot

    def release(self, slot: Slot) -> None:
        if slot.state is not SlotState.OPEN_READ:
            raise FifoError(f"release of slot in state {slot.state.value}")
        slot.state = SlotState.FREE
        slot.value = None

    def abandon_write(self, slot: Slot) -> None:
        if slot.state is not SlotState.OPEN_WRITE:
            raise FifoError(f"abandon of slot in state {slot.state.value}")
        slot.state = SlotState.FREE
        slot.value = None

    @property
    def pending(self) -> int:
        return sum(1 for s in self.slots if s.state is SlotState.FINALIZED)


class CircularFifo:
    """Byte-record ring buffer; push evicts the oldest record when full."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise FifoError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[bytes] = []
        self.evictions = 0

    def push(self, record: bytes) -> None:
        if len(self._items) == self.capacity:
            self._items.pop(0)
            self.evictions += 1
        self._items.append(bytes(record))

    def pop(self) -> bytes:
        if not self._items:
            raise FifoError("pop from empty fifo")
        return self._items.pop(0)

    def peek(self) -> bytes:
        if not self._items:
            raise FifoError("peek at empty fifo")
        return self._items[0]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(list(self._items))
