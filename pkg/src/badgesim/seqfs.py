"""Sequential filesystem over the virtual storage.

Each data class gets a fixed partition. Elements are appended consecutively
with a small header; dynamic partitions chain variable-length elements with
an XOR linked list (header stores prev_len XOR cur_len). The first element
of a partition carries 14 bytes of partition metadata; before it is
overwritten at wrap-around, a backup of metadata + header goes to a 32-byte
swap area reserved at the head of the partition. On-media layout is
documented byte-exactly in docs/seqfs-layout.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from badgesim.crc import crc16
from badgesim.vmem import VirtualStorage

SWAP_SIZE = 32
METADATA_SIZE = 14
BACKUP_SIZE = METADATA_SIZE + 6 + 2  # metadata + padded header + backup crc
NO_PREV_GENERATION = 0xFFFFFFFF


class FilesystemError(Exception):
    pass


class BeginReached(FilesystemError):
    pass


class EndReached(FilesystemError):
    pass


class EmptyPartition(FilesystemError):
    pass


class CorruptElement(FilesystemError):
    """Payload failed its CRC check; the iterator remains movable."""


class PartitionMode(Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class PartitionConfig:
    partition_id: int
    size: int
    mode: PartitionMode = PartitionMode.DYNAMIC
    element_size: int | None = None  # static mode only
    crc_enabled: bool = True

    def header_size(self) -> int:
        size = 2  # record number
        if self.mode is PartitionMode.DYNAMIC:
            size += 2  # xor length
        if self.crc_enabled:
            size += 2
        return size


@dataclass
class _Element:
    addr: int  # address of the header (metadata excluded)
    length: int  # payload length
    record: int

    def payload_addr(self, header_size: int) -> int:
        return self.addr + header_size

    def end(self, header_size: int) -> int:
        return self.addr + header_size + self.length


class Partition:
    """One registered partition; owns [base, base+size) of virtual storage."""

    def __init__(self, fs: "Filesystem", cfg: PartitionConfig, base: int):
        self.fs = fs
        self.cfg = cfg
        self.base = base
        self.estart = base + SWAP_SIZE  # metadata of the first element lives here
        self.eend = base + cfg.size
        self.chain: list[_Element] = []  # live elements, oldest first
        self.next_record = 0
        # flash only: everything below this address is consumed, everything
        # up to it on its page is erased and unwritten; the partition erases
        # ahead of its own writes so neighbours sharing the device stay intact
        self._erased_until = base
        # metadata currently on media (mirrored in RAM once valid)
        self.meta_last_elem_addr = NO_PREV_GENERATION
        self.meta_first_len = 0

    # -- header / metadata packing -------------------------------------

    @property
    def hdr(self) -> int:
        return self.cfg.header_size()

    def _pack_header(self, record: int, length: int, prev_len: int, payload: bytes) -> bytes:
        out = struct.pack("<H", record & 0xFFFF)
        if self.cfg.mode is PartitionMode.DYNAMIC:
            out += struct.pack("<H", (prev_len ^ length) & 0xFFFF)
        if self.cfg.crc_enabled:
            out += struct.pack("<H", crc16(payload))
        return out

    def _read_header(self, addr: int) -> tuple[int, int | None, int | None]:
        """Return (record, xor_length or None, crc or None)."""
        raw = self.fs.storage.read(addr, self.hdr)
        record = struct.unpack_from("<H", raw, 0)[0]
        pos = 2
        xor_len = None
        if self.cfg.mode is PartitionMode.DYNAMIC:
            xor_len = struct.unpack_from("<H", raw, pos)[0]
            pos += 2
        crc = struct.unpack_from("<H", raw, pos)[0] if self.cfg.crc_enabled else None
        return record, xor_len, crc

    def _pack_metadata(self, last_elem_addr: int, first_len: int) -> bytes:
        body = struct.pack(
            "<HIIH", self.cfg.partition_id, self.cfg.size, last_elem_addr, first_len
        )
        return body + struct.pack("<H", crc16(body))

    def _unpack_metadata(self, raw: bytes) -> tuple[int, int] | None:
        pid, size, last_addr, first_len = struct.unpack_from("<HIIH", raw, 0)
        (crc,) = struct.unpack_from("<H", raw, 12)
        if crc != crc16(raw[:12]):
            return None
        if pid != self.cfg.partition_id or size != self.cfg.size:
            return None
        return last_addr, first_len

    # -- element validation against media ------------------------------

    def _payload_ok(self, elem: _Element, expected_crc: int | None) -> bool:
        if expected_crc is None:
            return True
        payload = self.fs.storage.read(elem.payload_addr(self.hdr), elem.length)
        return crc16(payload) == expected_crc

    def _element_at(self, addr: int, expect_record: int, prev_len: int) -> _Element | None:
        """Validate and build the element whose header starts at addr."""
        if addr < self.estart or addr + self.hdr > self.eend:
            return None
        record, xor_len, crc = self._read_header(addr)
        if record != expect_record & 0xFFFF:
            return None
        if self.cfg.mode is PartitionMode.STATIC:
            length = self.cfg.element_size
        else:
            length = xor_len ^ prev_len
        if length == 0 and self.cfg.mode is PartitionMode.DYNAMIC:
            return None
        if addr + self.hdr + length > self.eend:
            return None
        elem = _Element(addr, length, record)
        if not self._payload_ok(elem, crc):
            return None
        return elem

    # -- store ----------------------------------------------------------

    def store_element(self, payload: bytes) -> int:
        payload = bytes(payload)
        if self.cfg.mode is PartitionMode.STATIC:
            if len(payload) != self.cfg.element_size:
                raise FilesystemError(
                    f"static partition {self.cfg.partition_id}: payload must be "
                    f"{self.cfg.element_size} bytes, got {len(payload)}"
                )
        else:
            if not 1 <= len(payload) <= 0xFFFF:
                raise FilesystemError(f"dynamic payload length {len(payload)} out of range")
        max_first = self.eend - (self.estart + METADATA_SIZE + self.hdr)
        if len(payload) > max_first:
            raise FilesystemError(
                f"payload of {len(payload)} bytes exceeds partition capacity {max_first}"
            )

        record = self.next_record & 0xFFFF
        if not self.chain:
            elem = self._store_first(payload, record, last_elem_addr=NO_PREV_GENERATION)
        else:
            latest = self.chain[-1]
            tail_end = latest.end(self.hdr)
            if latest.addr == self.estart:
                tail_end += METADATA_SIZE
            if tail_end + self.hdr + len(payload) <= self.eend:
                elem = self._store_append(payload, record, tail_end, latest)
            else:
                elem = self._store_first(payload, record, last_elem_addr=latest.addr,
                                         prev_len=latest.length)
        self.chain.append(elem)
        self.next_record = (record + 1) & 0xFFFF
        return record

    def _evict_overlapping(self, start: int, end: int) -> None:
        if self.fs.storage.is_flash_backed(start):
            # a flash store may erase up to the end of the last covered page
            end = self.fs.page_ceil(end)
        kept = []
        for e in self.chain:
            estart = e.addr - (METADATA_SIZE if e.addr == self.estart else 0)
            if estart < end and e.end(self.hdr) > start:
                continue
            kept.append(e)
        self.chain = kept

    def _is_flash(self) -> bool:
        return self.fs.storage.is_flash_backed(self.base)

    def _store_fresh(self, addr: int, data: bytes) -> None:
        """Store into cells this partition has erased ahead of time."""
        end = addr + len(data)
        if self._is_flash():
            if end > self._erased_until:
                self.fs.storage.erase_for(self._erased_until,
                                          end - self._erased_until)
                self._erased_until = self.fs.page_ceil(end)
            self.fs.storage.store(addr, data, no_erase=True)
        else:
            self.fs.storage.store(addr, data)

    def _store_append(self, payload: bytes, record: int, addr: int, latest: _Element) -> _Element:
        buf = self._pack_header(record, len(payload), latest.length, payload) + payload
        self._evict_overlapping(addr, addr + len(buf))
        self._store_fresh(addr, buf)
        return _Element(addr, len(payload), record)

    def _store_first(self, payload: bytes, record: int, last_elem_addr: int,
                     prev_len: int = 0) -> _Element:
        """Place an element at the start of the element area, with metadata.

        Used both for the very first element and at wrap-around. At wrap the
        current first-element metadata + header is backed up to the swap area
        before being overwritten.
        """
        meta = self._pack_metadata(last_elem_addr, len(payload))
        header = self._pack_header(record, len(payload), prev_len, payload)
        buf = meta + header + payload
        wrap = last_elem_addr != NO_PREV_GENERATION

        # Back up what the swap should describe after this overwrite. Only a
        # first element that actually committed (still alive in the chain) may
        # be backed up: a torn wrap can leave valid-looking metadata at estart
        # for an element that never finished, and backing that ghost up would
        # poison the swap and lose the real survivors on the next tear. When
        # the resident first element is a ghost, the previous backup is kept.
        backup = None
        new_backup = False
        if wrap:
            first_alive = any(e.addr == self.estart + METADATA_SIZE
                              for e in self.chain)
            if first_alive:
                old = self.fs.storage.read(self.estart, METADATA_SIZE + self.hdr)
                body = old[:METADATA_SIZE] + old[METADATA_SIZE:].ljust(6, b"\x00")
                backup = body + struct.pack("<H", crc16(body))
                new_backup = True
            else:
                existing = self.fs.storage.read(self.base, BACKUP_SIZE)
                (crc,) = struct.unpack_from("<H", existing, BACKUP_SIZE - 2)
                if crc == crc16(existing[:-2]):
                    backup = existing  # still valid: preserve across erase

        if not self._is_flash() and new_backup:
            self.fs.storage.store(self.base, backup)  # before the overwrite

        self._evict_overlapping(self.base, self.estart + len(buf))
        if self._is_flash():
            # swap and first element share pages: erase them together, then
            # drop the backup into the fresh cells before the new element
            self.fs.storage.erase_for(self.base, SWAP_SIZE + len(buf))
            self._erased_until = self.fs.page_ceil(self.estart + len(buf))
            if backup is not None:
                self.fs.storage.store(self.base, backup, no_erase=True)
            self.fs.storage.store(self.estart, buf, no_erase=True)
        else:
            self.fs.storage.store(self.estart, buf)
        self.meta_last_elem_addr = last_elem_addr
        self.meta_first_len = len(payload)
        return _Element(self.estart + METADATA_SIZE, len(payload), record)

    # -- clear / recover -------------------------------------------------

    def clear(self) -> None:
        """Invalidate metadata and backup; O(1) small writes."""
        self.fs.storage.store(self.estart, b"\x00" * METADATA_SIZE, no_erase=True)
        self.fs.storage.store(self.base, b"\x00" * BACKUP_SIZE, no_erase=True)
        self.chain = []
        self.next_record = 0
        self.meta_last_elem_addr = NO_PREV_GENERATION
        self.meta_first_len = 0
        self._erased_until = self.base

    def recover(self) -> None:
        """Rebuild the live chain from media after reboot or power loss."""
        self.chain = []
        self.next_record = 0
        self.meta_last_elem_addr = NO_PREV_GENERATION
        self.meta_first_len = 0
        self._erased_until = self.base

        meta = self._unpack_metadata(self.fs.storage.read(self.estart, METADATA_SIZE))
        if meta is not None:
            last_addr, first_len = meta
            first = self._first_element(first_len)
            if first is not None:
                self._adopt(first, last_addr, first_len)
                return
        self._recover_from_backup()

    def _first_element(self, first_len: int) -> _Element | None:
        addr = self.estart + METADATA_SIZE
        if self.cfg.mode is PartitionMode.STATIC and first_len != self.cfg.element_size:
            return None
        record, xor_len, crc = self._read_header(addr)
        if self.cfg.mode is PartitionMode.DYNAMIC:
            if first_len == 0 or addr + self.hdr + first_len > self.eend:
                return None
        elem = _Element(addr, first_len if self.cfg.mode is PartitionMode.DYNAMIC
                        else self.cfg.element_size, record)
        if not self._payload_ok(elem, crc):
            return None
        return elem

    def _adopt(self, first: _Element, last_addr: int, first_len: int) -> None:
        self.meta_last_elem_addr = last_addr
        self.meta_first_len = first_len

        # forward through the current generation
        newgen = [first]
        while True:
            cur = newgen[-1]
            nxt = self._element_at(cur.end(self.hdr), cur.record + 1, cur.length)
            if nxt is None:
                break
            newgen.append(nxt)
        frontier = newgen[-1].end(self.hdr)
        # on flash this may erase the tail of the frontier page, so it has
        # to happen before the old generation is scanned against media
        self._prepare_frontier(frontier)

        # backward through the surviving previous generation
        oldgen: list[_Element] = []
        if last_addr != NO_PREV_GENERATION:
            _, first_xor, _ = self._read_header(first.addr)
            prev_len = (first_xor ^ first.length) if self.cfg.mode is PartitionMode.DYNAMIC \
                else self.cfg.element_size
            cand = self._old_element(last_addr, first.record - 1, prev_len)
            while cand is not None and cand.addr >= frontier:
                oldgen.append(cand)
                prev_prev = self._prev_of(cand)
                cand = prev_prev
            oldgen.reverse()

        self.chain = oldgen + newgen
        self.next_record = (newgen[-1].record + 1) & 0xFFFF

    def _old_element(self, addr: int, expect_record: int, length: int) -> _Element | None:
        """Validate an old-generation element whose length is already known."""
        if addr < self.estart + METADATA_SIZE or addr + self.hdr + length > self.eend:
            return None
        record, xor_len, crc = self._read_header(addr)
        if record != expect_record & 0xFFFF:
            return None
        if self.cfg.mode is PartitionMode.STATIC:
            length = self.cfg.element_size
        elem = _Element(addr, length, record)
        if not self._payload_ok(elem, crc):
            return None
        return elem

    def _prev_of(self, elem: _Element) -> _Element | None:
        """Step backward along the XOR chain; None at the begin boundary."""
        if elem.addr == self.estart + METADATA_SIZE:
            return None
        record, xor_len, _ = self._read_header(elem.addr)
        if self.cfg.mode is PartitionMode.DYNAMIC:
            prev_len = xor_len ^ elem.length
        else:
            prev_len = self.cfg.element_size
        if prev_len == 0 and self.cfg.mode is PartitionMode.DYNAMIC:
            return None
        prev_addr = elem.addr - self.hdr - prev_len
        return self._old_element(prev_addr, elem.record - 1, prev_len)

    def _prepare_frontier(self, frontier: int) -> None:
        """Make the append frontier writable again after recovery; a torn
        tail on the frontier's flash page is salvage-erased away."""
        if not self._is_flash():
            return
        if frontier >= self.eend:
            self._erased_until = frontier
            return
        self.fs.storage.prepare_append(frontier)
        self._erased_until = self.fs.page_floor(frontier) + self.fs.page_size

    def _recover_from_backup(self) -> None:
        raw = self.fs.storage.read(self.base, BACKUP_SIZE)
        body, (crc,) = raw[:-2], struct.unpack_from("<H", raw, BACKUP_SIZE - 2)
        if crc != crc16(body):
            return  # both copies invalid: partition reported empty
        meta = self._unpack_metadata(body[:METADATA_SIZE])
        if meta is None:
            return
        last_addr, first_len = meta
        hdr_raw = body[METADATA_SIZE : METADATA_SIZE + self.hdr]
        (r0,) = struct.unpack_from("<H", hdr_raw, 0)
        if self.cfg.mode is PartitionMode.STATIC:
            first_len = self.cfg.element_size

        # first element is (being) destroyed; recover survivors after it
        survivors: list[_Element] = []
        addr = self.estart + METADATA_SIZE + self.hdr + first_len
        prev_len, expect = first_len, r0 + 1
        while True:
            nxt = self._element_at(addr, expect, prev_len)
            if nxt is None:
                break
            survivors.append(nxt)
            addr, prev_len, expect = nxt.end(self.hdr), nxt.length, expect + 1
        if not survivors:
            return
        self.chain = survivors
        self.next_record = (survivors[-1].record + 1) & 0xFFFF
        self.meta_last_elem_addr = last_addr
        self.meta_first_len = first_len
        self._prepare_frontier(survivors[-1].end(self.hdr))

    # -- iteration --------------------------------------------------------

    def iterator_latest(self) -> "PartitionIterator":
        if not self.chain:
            raise EmptyPartition(f"partition {self.cfg.partition_id} is empty")
        return PartitionIterator(self, len(self.chain) - 1)

    def iterator_oldest(self) -> "PartitionIterator":
        if not self.chain:
            raise EmptyPartition(f"partition {self.cfg.partition_id} is empty")
        return PartitionIterator(self, 0)


class PartitionIterator:
    """Walks the element chain; payloads are read and checked lazily."""

    def __init__(self, partition: Partition, index: int):
        self.partition = partition
        self.index = index

    @property
    def record_number(self) -> int:
        return self.partition.chain[self.index].record

    @property
    def element_length(self) -> int:
        return self.partition.chain[self.index].length

    def prev(self) -> "PartitionIterator":
        if self.index == 0:
            raise BeginReached()
        self.index -= 1
        return self

    def next(self) -> "PartitionIterator":
        if self.index >= len(self.partition.chain) - 1:
            raise EndReached()
        self.index += 1
        return self

    def read(self) -> bytes:
        p = self.partition
        elem = p.chain[self.index]
        payload = p.fs.storage.read(elem.payload_addr(p.hdr), elem.length)
        if p.cfg.crc_enabled:
            _, _, crc = p._read_header(elem.addr)
            if crc16(payload) != crc:
                raise CorruptElement(
                    f"partition {p.cfg.partition_id} record {elem.record}: CRC mismatch"
                )
        return payload


class Filesystem:
    """Registers partitions over contiguous virtual storage regions."""

    def __init__(self, storage: VirtualStorage):
        self.storage = storage
        self.partitions: dict[int, Partition] = {}
        self._next_base = 0

    @property
    def page_size(self) -> int:
        if hasattr(self.storage.units[0], "flash"):
            return self.storage.units[0].flash.page_size
        return 1

    def page_floor(self, addr: int) -> int:
        unit, local = self.storage.unit_for(addr)
        if unit == 0 and hasattr(self.storage.units[0], "flash"):
            ps = self.storage.units[0].flash.page_size
            return (addr // ps) * ps
        return addr

    def page_ceil(self, addr: int) -> int:
        if addr == 0:
            return 0
        unit, local = self.storage.unit_for(addr - 1)
        if unit == 0 and hasattr(self.storage.units[0], "flash"):
            ps = self.storage.units[0].flash.page_size
            return ((addr + ps - 1) // ps) * ps
        return addr

    def register_partition(self, cfg: PartitionConfig) -> Partition:
        if cfg.partition_id in self.partitions:
            raise FilesystemError(f"duplicate partition id {cfg.partition_id}")
        if cfg.mode is PartitionMode.STATIC:
            if not cfg.element_size:
                raise FilesystemError("static partition needs element_size >= 1")
            minimum = SWAP_SIZE + METADATA_SIZE + cfg.header_size() + cfg.element_size
        else:
            minimum = SWAP_SIZE + METADATA_SIZE + cfg.header_size() + 1
        if cfg.size < minimum:
            raise FilesystemError(
                f"partition size {cfg.size} below minimum {minimum}"
            )
        base = self._next_base
        if base < self.storage.size and self.storage.is_flash_backed(base):
            base = self.page_ceil(base)  # wrap erase must not reach a neighbour
        if base + cfg.size > self.storage.size:
            raise FilesystemError("virtual storage exhausted")
        p = Partition(self, cfg, base)
        self._next_base = base
        self._next_base += cfg.size
        p.recover()  # adopt a valid prior image, if any
        self.partitions[cfg.partition_id] = p
        return p

    def clear_all(self) -> None:
        """Slow path: reset every byte to the media default."""
        for unit in self.storage.units:
            if hasattr(unit, "flash"):
                for page in range(unit.flash.pages):
                    unit.flash.erase_page(page)
                unit.writable_start = 0
                unit.writable_end = unit.flash.size
            else:
                unit.eeprom.cells[:] = b"\x00" * unit.eeprom.size
        for p in self.partitions.values():
            p.chain = []
            p.next_record = 0
            p.meta_last_elem_addr = NO_PREV_GENERATION
            p.meta_first_len = 0
