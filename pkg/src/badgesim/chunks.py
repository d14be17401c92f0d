"""Chunk types and the small numeric operations behind them.

Rounding convention: wherever a real value becomes an integer we use
round-half-to-even (Python's `round`), except RSSI averaging which rounds
toward minus infinity as a conservative distance estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

BEACON_ID_THRESHOLD = 16000
MAX_SCAN_DEVICES = 255
SCAN_TRUNCATE = 29
MIC_CHUNK_POINTS = 112

# protocol source identifiers
SOURCE_MIC = 0
SOURCE_SCAN = 1
SOURCE_ACCEL = 2
SOURCE_ACCEL_EVENT = 3
SOURCE_BATTERY = 4
ALL_SOURCES = (SOURCE_MIC, SOURCE_SCAN, SOURCE_ACCEL, SOURCE_ACCEL_EVENT,
               SOURCE_BATTERY)


class ChunkError(Exception):
    pass


@dataclass(frozen=True, order=True)
class Timestamp:
    seconds: int
    ms: int = 0

    def __post_init__(self):
        if not 0 <= self.seconds < 2**32:
            raise ChunkError(f"seconds {self.seconds} out of u32 range")
        if not 0 <= self.ms < 1000:
            raise ChunkError(f"ms {self.ms} must be < 1000")

    def to_unix_ms(self) -> int:
        return self.seconds * 1000 + self.ms

    @classmethod
    def from_unix_ms(cls, unix_ms: int) -> "Timestamp":
        return cls(int(unix_ms) // 1000, int(unix_ms) % 1000)

    def to_value(self) -> dict:
        return {"seconds": self.seconds, "ms": self.ms}

    @classmethod
    def from_value(cls, v: dict) -> "Timestamp":
        return cls(v["seconds"], v["ms"])


@dataclass(frozen=True)
class ScanDevice:
    id: int
    rssi: int
    count: int

    def to_value(self) -> dict:
        return {"id": self.id, "rssi": self.rssi, "count": self.count}


def mic_average(window: list[int]) -> int:
    """One microphone data point: mean absolute deviation from midscale."""
    if not window:
        raise ChunkError("empty averaging window")
    total = sum(abs(s - 128) for s in window)
    value = round(Fraction(total, len(window)))
    return min(value, 255)


def scan_aggregate_and_sort(observations: list[tuple[int, int]],
                            aggregation: str = "avg") -> list[ScanDevice]:
    """Aggregate per-id RSSI readings and order for chunk storage.

    Location beacons (id >= 16000) come first, each group sorted by RSSI
    descending with a stable tiebreak, then the list is cut to 29 devices.
    """
    if aggregation not in ("avg", "max"):
        raise ChunkError(f"unknown aggregation {aggregation!r}")
    by_id: dict[int, list[int]] = {}
    order: list[int] = []
    for dev_id, rssi in observations:
        if dev_id not in by_id:
            by_id[dev_id] = []
            order.append(dev_id)
        by_id[dev_id].append(rssi)

    devices = []
    for dev_id in order:
        readings = by_id[dev_id]
        if aggregation == "max":
            rssi = max(readings)
        else:
            rssi = sum(readings) // len(readings)  # floor, conservative
        devices.append(ScanDevice(dev_id, rssi, min(len(readings), 255)))

    devices.sort(key=lambda d: (0 if d.id >= BEACON_ID_THRESHOLD else 1,
                                -d.rssi))
    return devices[:SCAN_TRUNCATE]


def battery_ewma(prev: float | None, sample: float, alpha: float) -> float:
    if not 0 < alpha <= 1:
        raise ChunkError(f"alpha {alpha} out of (0, 1]")
    if prev is None:
        return sample
    return alpha * sample + (1 - alpha) * prev


def battery_from_adc(adc10: int) -> float:
    """Supply voltage from a 10-bit ADC reading of the band-gap divider."""
    if not 0 <= adc10 < 1024:
        raise ChunkError(f"adc reading {adc10} out of 10-bit range")
    return adc10 / 1024 * 3 * 1.2


def battery_encode(volts: float) -> int:
    """One-byte battery level, 0.01 V resolution over [1.00, 3.55] V."""
    volts = min(max(volts, 1.00), 3.55)
    return min(max(round(volts * 100 - 100), 0), 255)


def battery_decode(byte: int) -> float:
    if not 0 <= byte <= 255:
        raise ChunkError(f"battery byte {byte} out of range")
    return (byte + 100) / 100


@dataclass
class MicrophoneChunk:
    timestamp: Timestamp
    sample_period_ms: int
    data: list[int] = field(default_factory=list)

    def to_value(self) -> dict:
        return {"timestamp": self.timestamp.to_value(),
                "sample_period_ms": self.sample_period_ms,
                "data": list(self.data)}

    @classmethod
    def from_value(cls, v: dict) -> "MicrophoneChunk":
        return cls(Timestamp.from_value(v["timestamp"]),
                   v["sample_period_ms"], list(v["data"]))


@dataclass
class ScanChunk:
    timestamp: Timestamp
    devices: list[ScanDevice] = field(default_factory=list)

    def to_value(self) -> dict:
        return {"timestamp": self.timestamp.to_value(),
                "devices": [d.to_value() for d in self.devices]}

    @classmethod
    def from_value(cls, v: dict) -> "ScanChunk":
        return cls(Timestamp.from_value(v["timestamp"]),
                   [ScanDevice(d["id"], d["rssi"], d["count"])
                    for d in v["devices"]])


@dataclass
class AccelChunk:
    timestamp: Timestamp
    magnitudes: list[int] = field(default_factory=list)

    def to_value(self) -> dict:
        return {"timestamp": self.timestamp.to_value(),
                "magnitudes": list(self.magnitudes)}

    @classmethod
    def from_value(cls, v: dict) -> "AccelChunk":
        return cls(Timestamp.from_value(v["timestamp"]), list(v["magnitudes"]))


@dataclass
class AccelEvent:
    timestamp: Timestamp

    def to_value(self) -> dict:
        return {"timestamp": self.timestamp.to_value()}

    @classmethod
    def from_value(cls, v: dict) -> "AccelEvent":
        return cls(Timestamp.from_value(v["timestamp"]))


@dataclass
class BatteryChunk:
    timestamp: Timestamp
    voltage: float

    def to_value(self) -> dict:
        return {"timestamp": self.timestamp.to_value(),
                "voltage": self.voltage}

    @classmethod
    def from_value(cls, v: dict) -> "BatteryChunk":
        return cls(Timestamp.from_value(v["timestamp"]), v["voltage"])


CHUNK_MESSAGE_BY_SOURCE = {
    SOURCE_MIC: ("MicrophoneChunk", MicrophoneChunk),
    SOURCE_SCAN: ("ScanChunk", ScanChunk),
    SOURCE_ACCEL: ("AccelChunk", AccelChunk),
    SOURCE_ACCEL_EVENT: ("AccelEvent", AccelEvent),
    SOURCE_BATTERY: ("BatteryChunk", BatteryChunk),
}
