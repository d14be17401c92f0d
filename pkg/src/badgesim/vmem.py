"""Simulated non-volatile memories and the concatenated virtual storage.

Two physical models with faithful semantics:

* flash: 256 pages x 1024 bytes, 4-byte words; stores can only clear bits
  (new = old AND written), pages erase to 0xFF; a byte-level abstraction
  writes masked words and auto-erases pages when a store falls outside the
  tracked "erased and not yet written" range
* EEPROM: 1024 pages x 256 bytes, byte-granular overwrite, no erase needed

Virtual storage concatenates flash-then-EEPROM into one address space and
supports power-loss injection: an armed fault halts a store after a chosen
number of physical bytes have been committed.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class StorageError(Exception):
    pass


class OutOfRange(StorageError):
    pass


class PowerLoss(StorageError):
    """Raised by a store interrupted by an injected power loss."""


# latencies charged to the simulation clock, nanoseconds
FLASH_WORD_STORE_NS = 46_300       # 46.3 us per word
FLASH_PAGE_ERASE_NS = 22_300_000   # 22.3 ms per page
EEPROM_STORE_NS = 10_000_000       # 10 ms per store operation


@dataclass
class FlashModel:
    """Raw flash cells with AND-store semantics and per-page erase counters."""

    pages: int = 256
    page_size: int = 1024
    word_size: int = 4

    def __post_init__(self):
        self.cells = bytearray(b"\xff" * (self.pages * self.page_size))
        self.erase_counters = [0] * self.pages

    @property
    def size(self) -> int:
        return self.pages * self.page_size

    def store_word(self, addr: int, word: bytes) -> None:
        if addr % self.word_size != 0 or len(word) != self.word_size:
            raise StorageError(f"unaligned word store at {addr}")
        if not 0 <= addr <= self.size - self.word_size:
            raise OutOfRange(f"flash word store at {addr}")
        for i, b in enumerate(word):
            self.cells[addr + i] &= b

    def erase_page(self, page: int) -> None:
        if not 0 <= page < self.pages:
            raise OutOfRange(f"flash erase of page {page}")
        start = page * self.page_size
        self.cells[start : start + self.page_size] = b"\xff" * self.page_size
        self.erase_counters[page] += 1

    def read(self, addr: int, length: int) -> bytes:
        if not 0 <= addr <= self.size - length or length < 0:
            raise OutOfRange(f"flash read [{addr}, {addr + length})")
        return bytes(self.cells[addr : addr + length])


@dataclass
class EepromModel:
    """Byte-granular EEPROM; affected bytes erase automatically on store."""

    pages: int = 1024
    page_size: int = 256

    def __post_init__(self):
        self.cells = bytearray(self.pages * self.page_size)

    @property
    def size(self) -> int:
        return self.pages * self.page_size

    def store(self, addr: int, data: bytes) -> None:
        if not 0 <= addr <= self.size - len(data):
            raise OutOfRange(f"eeprom store [{addr}, {addr + len(data)})")
        self.cells[addr : addr + len(data)] = data

    def read(self, addr: int, length: int) -> bytes:
        if not 0 <= addr <= self.size - length or length < 0:
            raise OutOfRange(f"eeprom read [{addr}, {addr + length})")
        return bytes(self.cells[addr : addr + length])


class FlashStorage:
    """Byte-level abstraction over flash (storage_1).

    Tracks one contiguous erased-and-unwritten range. A store inside the
    range only writes masked words; a store outside it first erases the
    pages it covers (forward extension erases only pages beyond the range
    end, so sequential appends never destroy earlier data).
    """

    def __init__(self, flash: FlashModel | None = None):
        self.flash = flash or FlashModel()
        # fresh cells are erased: whole device writable
        self.writable_start = 0
        self.writable_end = self.flash.size
        self.elapsed_ns = 0

    @property
    def size(self) -> int:
        return self.flash.size

    def _page_span(self, start: int, end: int) -> range:
        ps = self.flash.page_size
        return range(start // ps, (end + ps - 1) // ps)

    def _erase(self, start: int, end: int) -> None:
        for page in self._page_span(start, end):
            self.flash.erase_page(page)
            self.elapsed_ns += FLASH_PAGE_ERASE_NS

    def _prepare_range(self, addr: int, end: int) -> None:
        ps = self.flash.page_size
        if self.writable_start <= addr and end <= self.writable_end:
            return
        if self.writable_start <= addr <= self.writable_end < end:
            # sequential overrun: erase only the pages beyond the range end
            self._erase(self.writable_end, end)
            self.writable_end = ((end + ps - 1) // ps) * ps
            return
        # non-sequential store: erase everything the write covers
        self._erase(addr, end)
        self.writable_start = (addr // ps) * ps
        self.writable_end = ((end + ps - 1) // ps) * ps

    def _write_masked(self, addr: int, data: bytes) -> None:
        ws = self.flash.word_size
        first_word = addr // ws
        last_word = (addr + len(data) - 1) // ws
        for w in range(first_word, last_word + 1):
            wstart = w * ws
            mask = bytearray(b"\xff" * ws)
            for i in range(ws):
                pos = wstart + i - addr
                if 0 <= pos < len(data):
                    mask[i] = data[pos]
            self.flash.store_word(wstart, bytes(mask))
            self.elapsed_ns += FLASH_WORD_STORE_NS

    def store(self, addr: int, data: bytes, no_erase: bool = False) -> None:
        if len(data) == 0:
            return
        end = addr + len(data)
        if not 0 <= addr and end <= self.size:
            raise OutOfRange(f"flash store [{addr}, {end})")
        if not no_erase:
            self._prepare_range(addr, end)
            self.writable_start = max(self.writable_start, end)
        self._write_masked(addr, data)

    def read(self, addr: int, length: int) -> bytes:
        return self.flash.read(addr, length)

    def erase_range(self, addr: int, length: int) -> None:
        """Explicitly erase the pages covering a range and mark them writable."""
        ps = self.flash.page_size
        end = addr + length
        self._erase(addr, end)
        self.writable_start = (addr // ps) * ps
        self.writable_end = ((end + ps - 1) // ps) * ps

    def prepare_append(self, addr: int) -> None:
        """Make [addr, ...) appendable after recovery without losing the
        earlier part of addr's page: salvage-rewrite the page if any cell
        at or beyond addr was already written."""
        ps = self.flash.page_size
        page = addr // ps
        page_start = page * ps
        tail = self.flash.read(addr, page_start + ps - addr)
        if all(b == 0xFF for b in tail):
            self.writable_start = addr
            self.writable_end = page_start + ps
            return
        head = self.flash.read(page_start, addr - page_start)
        self.flash.erase_page(page)
        self.elapsed_ns += FLASH_PAGE_ERASE_NS
        if any(b != 0xFF for b in head):
            self._write_masked(page_start, head)
        self.writable_start = addr
        self.writable_end = page_start + ps


class EepromStorage:
    """Byte-level abstraction over EEPROM (storage_2)."""

    def __init__(self, eeprom: EepromModel | None = None):
        self.eeprom = eeprom or EepromModel()
        self.elapsed_ns = 0

    @property
    def size(self) -> int:
        return self.eeprom.size

    def store(self, addr: int, data: bytes, no_erase: bool = False) -> None:
        if len(data) == 0:
            return
        self.eeprom.store(addr, data)
        self.elapsed_ns += EEPROM_STORE_NS

    def read(self, addr: int, length: int) -> bytes:
        return self.eeprom.read(addr, length)

    def prepare_append(self, addr: int) -> None:
        pass  # byte overwrite is always allowed

    def erase_range(self, addr: int, length: int) -> None:
        pass  # no erase precondition on EEPROM


class VirtualStorage:
    """Flash-then-EEPROM concatenated into one byte-addressable space."""

    def __init__(self, units: list | None = None):
        if units is None:
            units = [FlashStorage(), EepromStorage()]
        self.units = units
        self._bases: list[int] = []
        base = 0
        for u in units:
            self._bases.append(base)
            base += u.size
        self.size = base
        self._fault_budget: int | None = None  # physical bytes until power loss

    def unit_for(self, addr: int) -> tuple[int, int]:
        """Map a virtual address to (unit index, local address)."""
        if not 0 <= addr < self.size:
            raise OutOfRange(f"virtual address {addr}")
        for i in reversed(range(len(self.units))):
            if addr >= self._bases[i]:
                return i, addr - self._bases[i]
        raise OutOfRange(f"virtual address {addr}")

    def inject_power_loss(self, after_n_physical_bytes: int) -> None:
        """Arm a fault: the next store(s) commit that many bytes, then halt."""
        self._fault_budget = after_n_physical_bytes

    def clear_fault(self) -> None:
        self._fault_budget = None

    def _split(self, addr: int, length: int):
        if length < 0 or not 0 <= addr <= self.size - length:
            raise OutOfRange(f"virtual range [{addr}, {addr + length})")
        spans = []
        pos = addr
        remaining = length
        while remaining > 0:
            i, local = self.unit_for(pos)
            room = self.units[i].size - local
            take = min(room, remaining)
            spans.append((i, local, take))
            pos += take
            remaining -= take
        return spans

    def store(self, addr: int, data: bytes, no_erase: bool = False) -> None:
        data = bytes(data)
        if not data:
            if not 0 <= addr <= self.size:
                raise OutOfRange(f"virtual store at {addr}")
            return
        offset = 0
        for i, local, take in self._split(addr, len(data)):
            chunk = data[offset : offset + take]
            if self._fault_budget is not None:
                if self._fault_budget < take:
                    committed = chunk[: self._fault_budget]
                    if committed:
                        self.units[i].store(local, committed, no_erase=no_erase)
                    self._fault_budget = None
                    raise PowerLoss(f"power lost after {offset + len(committed)} bytes")
                self._fault_budget -= take
            self.units[i].store(local, chunk, no_erase=no_erase)
            offset += take

    def read(self, addr: int, length: int) -> bytes:
        out = bytearray()
        for i, local, take in self._split(addr, length):
            out += self.units[i].read(local, take)
        return bytes(out)

    def prepare_append(self, addr: int) -> None:
        i, local = self.unit_for(addr)
        self.units[i].prepare_append(local)

    def erase_for(self, addr: int, length: int) -> None:
        """Erase-for-rewrite across units (flash pages only; EEPROM no-op)."""
        for i, local, take in self._split(addr, length):
            self.units[i].erase_range(local, take)

    def is_flash_backed(self, addr: int) -> bool:
        i, _ = self.unit_for(addr)
        return isinstance(self.units[i], FlashStorage)

    @property
    def elapsed_ns(self) -> int:
        return sum(u.elapsed_ns for u in self.units)

    def dump(self) -> bytes:
        return self.read(0, self.size)

    def load(self, image: bytes) -> None:
        if len(image) != self.size:
            raise StorageError(f"image size {len(image)} != storage size {self.size}")
        for i, local, take in self._split(0, self.size):
            unit = self.units[i]
            base = self._bases[i]
            raw = image[base : base + take]
            if isinstance(unit, FlashStorage):
                unit.flash.cells[local : local + take] = raw
                # unknown erase state after load: nothing is writable
                unit.writable_start = unit.writable_end = 0
            else:
                unit.eeprom.cells[local : local + take] = raw
