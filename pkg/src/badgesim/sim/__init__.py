"""Deterministic discrete-event simulator for the badge firmware core."""

from badgesim.sim.loop import EventLoop, Timer
from badgesim.sim.oscillator import OscillatorModel
from badgesim.sim.transport import Link

__all__ = ["EventLoop", "Timer", "OscillatorModel", "Link"]
