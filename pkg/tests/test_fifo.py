"""Chunk slot queue and byte-record ring."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from badgesim.fifo import ChunkFifo, CircularFifo, FifoError, SlotState


def test_slot_lifecycle():
    f = ChunkFifo(2)
    w = f.open_write()
    assert w.state is SlotState.OPEN_WRITE
    w.value = "chunk0"
    f.finalize_write(w)
    assert f.pending == 1
    r = f.open_read()
    assert r is w and r.value == "chunk0"
    f.release(r)
    assert r.state is SlotState.FREE and r.value is None
    assert f.open_read() is None


def test_fifo_order_is_finalization_order():
    f = ChunkFifo(3)
    for i in range(3):
        s = f.open_write()
        s.value = i
        f.finalize_write(s)
    got = []
    while (r := f.open_read()) is not None:
        got.append(r.value)
        f.release(r)
    assert got == [0, 1, 2]


def test_overwrite_sacrifices_newest():
    f = ChunkFifo(2)
    for i in range(2):
        s = f.open_write()
        s.value = i
        f.finalize_write(s)
    s = f.open_write()  # full: reuses the most recently finalized slot
    assert f.overwrites == 1
    s.value = 2
    f.finalize_write(s)
    got = []
    while (r := f.open_read()) is not None:
        got.append(r.value)
        f.release(r)
    assert got == [0, 2]  # oldest backlog survived; chunk 1 was sacrificed


def test_abandon_write_frees_slot():
    f = ChunkFifo(1)
    s = f.open_write()
    f.abandon_write(s)
    assert s.state is SlotState.FREE
    assert f.pending == 0


def test_state_violations():
    f = ChunkFifo(1)
    s = f.open_write()
    with pytest.raises(FifoError):
        f.open_write()  # sole slot busy, nothing finalized
    with pytest.raises(FifoError):
        f.release(s)
    f.finalize_write(s)
    with pytest.raises(FifoError):
        f.finalize_write(s)
    r = f.open_read()
    with pytest.raises(FifoError):
        f.abandon_write(r)
    with pytest.raises(FifoError):
        ChunkFifo(0)


def test_circular_evicts_oldest():
    c = CircularFifo(3)
    for i in range(5):
        c.push(bytes([i]))
    assert c.evictions == 2
    assert list(c) == [b"\x02", b"\x03", b"\x04"]
    assert c.peek() == b"\x02"
    assert c.pop() == b"\x02"
    assert len(c) == 2


def test_circular_empty_errors():
    c = CircularFifo(1)
    with pytest.raises(FifoError):
        c.pop()
    with pytest.raises(FifoError):
        c.peek()


@given(st.lists(st.integers(0, 255), max_size=60), st.integers(1, 8))
def test_circular_matches_list_model(values, cap):
    c = CircularFifo(cap)
    for v in values:
        c.push(bytes([v]))
    expected = [bytes([v]) for v in values][-cap:]
    assert list(c) == expected
    assert c.evictions == max(0, len(values) - cap)
