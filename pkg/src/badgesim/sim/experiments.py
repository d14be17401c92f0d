"""Reusable experiment drivers behind the CLI and the acceptance tests.

Every driver is deterministic in its (parameters, seed) pair and returns
plain result objects; CSV writing is separated so tests can assert on the
numbers directly.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from badgesim import chunks as ch
from badgesim import protocol
from badgesim.badge import Badge
from badgesim.sim.loop import EventLoop
from badgesim.sim.oscillator import NS, OscillatorModel
from badgesim.sim.transport import Link
from badgesim.timebase import NOMINAL_HZ, Timebase
from badgesim.vmem import PowerLoss, VirtualStorage


# ---------------------------------------------------------------- throughput

@dataclass
class ThroughputResult:
    mode: str
    period_ms: float | None
    bytes_received: int
    elapsed_s: float
    bytes_per_s: float
    chunks: int


def measure_throughput(mode: str = "timer", period_ms: float = 6.0,
                       n_chunks: int = 50, queue_load: int = 12,
                       seed: int = 0, interval_ns: int = 50_000_000,
                       timeout_s: float = 120.0) -> ThroughputResult:
    """Time a bulk data pull of `n_chunks` stored microphone chunks.

    The clock starts when the request frame is handed to the link and stops
    when the hub has received the final end-of-data frame.
    """
    loop = EventLoop()
    badge = Badge(loop, sender_mode=mode,
                  sender_period_ns=int(period_ms * 1_000_000),
                  sender_queue_load=queue_load)
    rng = random.Random(seed)
    for i in range(n_chunks):
        chunk = ch.MicrophoneChunk(
            ch.Timestamp(100 + i), 50,
            [rng.randrange(256) for _ in range(ch.MIC_CHUNK_POINTS)])
        badge.store_chunk(ch.SOURCE_MIC, chunk)

    link = Link(loop, interval_ns=interval_ns, seed=seed)
    badge.attach_link(link, link.a)
    link.connect()

    received = bytearray()
    done = {"at": None}
    splitter = protocol.FrameSplitter()

    def hub_rx(data: bytes) -> None:
        received.extend(data)
        for frame in splitter.feed(data):
            resp = protocol.decode_message("Response", frame)
            if resp.get("data_end") is not None:
                done["at"] = loop.now_ns

    link.b.on_rx = hub_rx
    request = protocol.encode_request(
        {"data": {"source": ch.SOURCE_MIC,
                  "since": {"seconds": 0, "ms": 0}}})
    start_ns = loop.now_ns
    for i in range(0, len(request), 20):
        link.b.try_send(request[i : i + 20])

    deadline = start_ns + int(timeout_s * NS)
    while done["at"] is None and loop.now_ns < deadline:
        loop.run_until(min(loop.now_ns + NS, deadline))
    if done["at"] is None:
        raise RuntimeError(f"pull did not finish within {timeout_s}s of sim time")
    elapsed_s = (done["at"] - start_ns) / NS
    return ThroughputResult(mode, period_ms if mode == "timer" else None,
                            len(received), elapsed_s,
                            len(received) / elapsed_s, n_chunks)


# ----------------------------------------------------------------- clock sync

@dataclass
class SyncResult:
    mode: str
    n_syncs: int
    mae_ms: float
    max_error_ms: float
    errors_ms: list = field(default_factory=list)
    sync_times_s: list = field(default_factory=list)


def run_sync_experiment(drift_hz: float = 2.2, mode: str = "ewma",
                        alpha: float = 0.11, f_dev: float = 3.833,
                        duration_s: float = 9.5 * 3600,
                        max_gap_s: float = 600.0, seed: int = 0,
                        jitter_ms: float = 0.0,
                        ramp_hz_per_hour: float = 0.0) -> SyncResult:
    """Replay hub sync messages against a drifting oscillator.

    Sync arrival gaps are uniform over [0, max_gap_s]. In 'constant' mode
    the slope stays nominal (alpha = 0); 'ewma' smooths clamped slopes.
    """
    if mode not in ("constant", "ewma"):
        raise ValueError(f"unknown sync mode {mode!r}")
    rng = random.Random(seed)
    osc = OscillatorModel(offset_hz=Fraction(drift_hz).limit_denominator(10**6),
                          ramp_hz_per_hour=Fraction(ramp_hz_per_hour).limit_denominator(10**6),
                          seed=seed)
    tb = Timebase(alpha=Fraction(0) if mode == "constant"
                  else Fraction(alpha).limit_denominator(10**6),
                  freq_dev_hz=Fraction(f_dev).limit_denominator(10**6))
    t_ns = 0
    end_ns = int(duration_s * NS)
    errors = []
    times = []
    while t_ns <= end_ns:
        arrival_ns = t_ns
        received_ms = Fraction(t_ns, 1_000_000)  # hub's true clock
        if jitter_ms:
            arrival_ns = t_ns + int(rng.uniform(0, jitter_ms) * 1_000_000)
        # the hub stamps the message at send time; the badge anchors it to
        # the tick count at arrival, so latency directly skews the anchor
        ticks = osc.ticks_at(arrival_ns)
        err = tb.on_sync(ticks, received_ms)
        if err is not None:
            errors.append(abs(err))
            times.append(t_ns / NS)
        t_ns += int(rng.uniform(0, max_gap_s) * NS)

    if not errors:
        return SyncResult(mode, 0, 0.0, 0.0)
    return SyncResult(mode, len(errors),
                      float(sum(errors) / len(errors)),
                      float(max(errors)),
                      [float(e) for e in errors], times)


# -------------------------------------------------------------- audio average

@dataclass
class AudioResult:
    samples_a: int
    samples_b: int
    mae: float
    n_points: int


def _band_limited_signal(seed: int, n_tones: int = 24,
                         max_hz: float = 340.0, amplitude: float = 45.0):
    """Synthetic signal under the averaging filter's passband."""
    import math
    rng = random.Random(seed)
    tones = [(rng.uniform(20.0, max_hz), rng.uniform(0, 2 * math.pi),
              rng.uniform(0.3, 1.0)) for _ in range(n_tones)]
    norm = sum(a for _, _, a in tones)

    def signal(t_s: float) -> float:
        return amplitude * sum(a * math.sin(2 * math.pi * f * t_s + p)
                               for f, p, a in tones) / norm

    return signal


def run_audio_experiment(samples_a: int = 1, samples_b: int = 2,
                         duration_s: float = 20.0, seed: int = 0,
                         avg_period_ms: int = 50) -> AudioResult:
    """Compare k-sample ADC reads feeding the same averaging pipeline.

    ADC conversions sit on a 20 kHz grid; a read takes k consecutive
    conversions and averages them. Reads occur at 700 Hz; data points are
    window averages of |sample - 128|.
    """
    for k in (samples_a, samples_b):
        if k not in (1, 2, 3):
            raise ValueError(f"samples per read must be 1..3, got {k}")
    sig = _band_limited_signal(seed)
    adc_hz = 20_000

    def adc(t_s: float) -> int:
        return min(max(int(round(128 + sig(t_s))), 0), 255)

    def point_series(k: int) -> list[int]:
        points = []
        reads_per_window = round(700 * avg_period_ms / 1000)
        n_windows = int(duration_s * 1000) // avg_period_ms
        for w in range(n_windows):
            window = []
            for r in range(reads_per_window):
                t_read = w * avg_period_ms / 1000 + r / 700
                conversions = [adc(t_read + i / adc_hz) for i in range(k)]
                sample = round(sum(conversions) / k)
                window.append(sample)
            points.append(ch.mic_average(window))
        return points

    a = point_series(samples_a)
    b = point_series(samples_b)
    mae = sum(abs(x - y) for x, y in zip(a, b)) / len(a)
    return AudioResult(samples_a, samples_b, mae, len(a))


# -------------------------------------------------------------- fault storms

@dataclass
class FaultResult:
    cuts: int
    stores_attempted: int
    stores_committed: int
    lost: int
    phantoms: int


def run_fault_experiment(cuts: int = 1000, seed: int = 0) -> FaultResult:
    """Random power losses during a mixed store workload on an EEPROM-backed
    partition; audits recovered content against an in-RAM reference log."""
    from badgesim.seqfs import EmptyPartition, Filesystem, PartitionConfig

    rng = random.Random(seed)
    storage = VirtualStorage()
    fs = Filesystem(storage)
    fs._next_base = storage.units[0].size  # place in EEPROM: byte-exact overwrite
    partition = fs.register_partition(PartitionConfig(partition_id=99, size=16 * 1024))

    committed: dict[int, bytes] = {}
    attempted = 0
    injected = 0
    while injected < cuts:
        payload = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 256)))
        attempted += 1
        if rng.random() < 0.5:
            injected += 1
            storage.inject_power_loss(rng.randrange(0, len(payload) + 24))
            try:
                rec = partition.store_element(payload)
                committed[rec] = payload
                storage.clear_fault()
            except PowerLoss:
                partition.recover()
        else:
            rec = partition.store_element(payload)
            committed[rec] = payload

    partition.recover()
    recovered: dict[int, bytes] = {}
    try:
        it = partition.iterator_oldest()
        while True:
            recovered[it.record_number] = it.read()
            try:
                it.next()
            except Exception:
                break
    except EmptyPartition:
        pass

    phantoms = sum(1 for r, p in recovered.items()
                   if committed.get(r) != p)
    # a committed element is lost only if it was never physically overwritten:
    # everything newer than the oldest recovered record must be present
    lost = 0
    if recovered:
        newest = max(recovered)
        oldest_alive = min(recovered)
        for r in committed:
            if oldest_alive <= r <= newest and r not in recovered:
                lost += 1
    return FaultResult(cuts, attempted, len(committed), lost, phantoms)


# ------------------------------------------------------------------ CSV output

def write_sync_csv(result: SyncResult, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sync_time_s", "abs_error_ms"])
        for t, e in zip(result.sync_times_s, result.errors_ms):
            w.writerow([f"{t:.3f}", f"{e:.6f}"])


def write_throughput_csv(results: list[ThroughputResult], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "period_ms", "bytes", "elapsed_s", "bytes_per_s"])
        for r in results:
            w.writerow([r.mode, "" if r.period_ms is None else r.period_ms,
                        r.bytes_received, f"{r.elapsed_s:.6f}",
                        f"{r.bytes_per_s:.3f}"])
