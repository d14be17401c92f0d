"""Clock synchronization: map a free-running 32.768 kHz tick counter to
wall-clock milliseconds.

Every sync point (local tick count, received unix milliseconds) updates a
smoothed slope estimate; between sync points the time is a linear
extrapolation from the last anchor. All arithmetic is exact (Fraction), so
results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

NOMINAL_HZ = 32768
NOMINAL_SLOPE = Fraction(1000, NOMINAL_HZ)  # milliseconds per tick

DEFAULT_ALPHA = Fraction(1, 10)
DEFAULT_FREQ_DEV_HZ = Fraction(4)


class TimebaseError(Exception):
    pass


class NotSynced(TimebaseError):
    pass


@dataclass
class Timebase:
    """Smoothed-slope clock model.

    alpha = 0 never moves the slope off its nominal value, which makes the
    estimator equivalent to assuming a perfect crystal.
    """

    alpha: Fraction = DEFAULT_ALPHA
    freq_dev_hz: Fraction = DEFAULT_FREQ_DEV_HZ
    slope: Fraction | None = None  # ms per tick
    anchor_ticks: int | None = None
    anchor_ms: Fraction | None = None
    _errors_ms: list[Fraction] = field(default_factory=list)

    def __post_init__(self):
        self.alpha = Fraction(self.alpha)
        self.freq_dev_hz = Fraction(self.freq_dev_hz)
        if not 0 <= self.alpha <= 1:
            raise TimebaseError("alpha must be in [0, 1]")
        if not 0 <= self.freq_dev_hz < NOMINAL_HZ:
            raise TimebaseError("freq_dev_hz out of range")

    @property
    def synced(self) -> bool:
        return self.slope is not None

    def slope_bounds(self) -> tuple[Fraction, Fraction]:
        lo = Fraction(1000, NOMINAL_HZ + self.freq_dev_hz)
        hi = Fraction(1000, NOMINAL_HZ - self.freq_dev_hz)
        return lo, hi

    def now_ms(self, ticks: int) -> Fraction:
        if not self.synced:
            raise NotSynced("no sync point received yet")
        return self.anchor_ms + (ticks - self.anchor_ticks) * self.slope

    def on_sync(self, ticks: int, received_ms) -> Fraction | None:
        """Fold in a sync point; returns the prediction error in ms, or
        None for the first sync (no prediction existed)."""
        received_ms = Fraction(received_ms)
        if not self.synced:
            self.slope = NOMINAL_SLOPE
            self.anchor_ticks = ticks
            self.anchor_ms = received_ms
            return None
        d_ticks = ticks - self.anchor_ticks
        if d_ticks == 0:
            raise TimebaseError("sync point repeats the anchor tick count")
        error = self.now_ms(ticks) - received_ms
        self._errors_ms.append(abs(error))

        raw = (received_ms - self.anchor_ms) / d_ticks
        lo, hi = self.slope_bounds()
        clamped = min(max(raw, lo), hi)
        self.slope = self.alpha * clamped + (1 - self.alpha) * self.slope
        self.anchor_ticks = ticks
        self.anchor_ms = received_ms
        return error

    @property
    def abs_errors_ms(self) -> list[Fraction]:
        return list(self._errors_ms)

    def mae_ms(self) -> Fraction:
        if not self._errors_ms:
            raise TimebaseError("no prediction errors recorded")
        return sum(self._errors_ms) / len(self._errors_ms)

    def max_error_ms(self) -> Fraction:
        if not self._errors_ms:
            raise TimebaseError("no prediction errors recorded")
        return max(self._errors_ms)
