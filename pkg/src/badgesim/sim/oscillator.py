"""Drifting 32.768 kHz oscillator model.

The tick counter is the exact integral of the true frequency over virtual
time, computed with rational arithmetic so that two runs agree bit for bit.
Supported drift shapes: constant offset, linear ramp, bounded random walk
(piecewise constant, one step per fixed interval).
"""

from __future__ import annotations

import random
from fractions import Fraction

from badgesim.timebase import NOMINAL_HZ

NS = 1_000_000_000
MAX_DRIFT_HZ = 50


class OscillatorError(Exception):
    pass


class OscillatorModel:
    def __init__(self, offset_hz=0, ramp_hz_per_hour=0,
                 walk_step_hz=0, walk_interval_s: int = 60,
                 walk_bound_hz=10, seed: int = 0):
        self.offset_hz = Fraction(offset_hz)
        self.ramp_hz_per_s = Fraction(ramp_hz_per_hour) / 3600
        self.walk_step_hz = Fraction(walk_step_hz)
        self.walk_interval_ns = walk_interval_s * NS
        self.walk_bound_hz = Fraction(walk_bound_hz)
        self._walk_levels: list[Fraction] = [Fraction(0)]
        self._rng = random.Random(seed)
        if abs(self.offset_hz) > MAX_DRIFT_HZ:
            raise OscillatorError(f"offset {offset_hz} Hz exceeds +-{MAX_DRIFT_HZ}")

    def _walk_level(self, index: int) -> Fraction:
        while len(self._walk_levels) <= index:
            prev = self._walk_levels[-1]
            step = Fraction(self._rng.uniform(-1, 1)).limit_denominator(10**6)
            nxt = prev + step * self.walk_step_hz
            bound = self.walk_bound_hz
            nxt = min(max(nxt, -bound), bound)
            self._walk_levels.append(nxt)
        return self._walk_levels[index]

    def freq_at(self, t_ns: int) -> Fraction:
        """True frequency in Hz at virtual time t."""
        f = NOMINAL_HZ + self.offset_hz + self.ramp_hz_per_s * Fraction(t_ns, NS)
        if self.walk_step_hz:
            f += self._walk_level(t_ns // self.walk_interval_ns)
        return f

    def _integral_hz_ns(self, t_ns: int) -> Fraction:
        """Integral of f over [0, t], in Hz*ns (divide by 1e9 for ticks)."""
        total = (NOMINAL_HZ + self.offset_hz) * t_ns
        total += self.ramp_hz_per_s * Fraction(t_ns, NS) * t_ns / 2
        if self.walk_step_hz:
            full = t_ns // self.walk_interval_ns
            for i in range(full):
                total += self._walk_level(i) * self.walk_interval_ns
            total += self._walk_level(full) * (t_ns - full * self.walk_interval_ns)
        return total

    def ticks_at(self, t_ns: int) -> int:
        if t_ns < 0:
            raise OscillatorError("time must be non-negative")
        return int(self._integral_hz_ns(t_ns) / NS)
