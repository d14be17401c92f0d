"""Acceptance suite: one pass/fail line per top-level criterion.

Run with `pytest -s tests/test_acceptance.py` to see the report lines.
Tolerances are stated inline; each test prints exactly one PASS/FAIL line.
"""

import importlib.util
import json
import random
from fractions import Fraction
from pathlib import Path

from badgesim import chunks as ch
from badgesim import protocol
from badgesim.seqfs import (Filesystem, PartitionConfig, PartitionMode)
from badgesim.sim.experiments import (measure_throughput, run_audio_experiment,
                                      run_fault_experiment,
                                      run_sync_experiment)
from badgesim.timebase import Timebase
from badgesim.tinybuf import codec, emit, schema
from badgesim.vmem import FlashModel, VirtualStorage

_gen_spec = importlib.util.spec_from_file_location(
    "golden_gen", Path(__file__).parent / "fixtures" / "make_golden.py")
golden_gen = importlib.util.module_from_spec(_gen_spec)
_gen_spec.loader.exec_module(golden_gen)


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}: {name} -- {detail}"
    print(line)
    assert ok, line


def _strip_nones(v):
    if isinstance(v, dict):
        return {k: _strip_nones(x) for k, x in v.items() if x is not None}
    if isinstance(v, list):
        return [_strip_nones(x) for x in v]
    return v


def test_wire_sizes():
    descs = schema.parse_schema(
        "message Raw {\n    repeated uint16 v[100];\n}\n")
    raw = codec.encode(descs[0], {"v": list(range(100))}, descs)
    scan = protocol.encode_message("ScanChunk", {
        "timestamp": {"seconds": 1, "ms": 2},
        "devices": [{"id": i, "rssi": -40, "count": 1} for i in range(29)]})
    ok = len(raw) == 201 and len(scan) == 123
    report("wire sizes", ok,
           f"100x uint16 repeated = {len(raw)} B (want 201), "
           f"29-device scan chunk = {len(scan)} B (want 123), zero tolerance")


def test_roundtrip_fuzz():
    rng = random.Random(7)
    descs = {d["name"]: d for d in
             json.loads(emit.descriptors_to_json(protocol.descriptors()))}
    names = sorted(descs)
    n = 10_000
    mismatches = 0
    size_errors = 0
    reg = protocol.descriptors()
    by_name = {d.name: d for d in reg}
    for i in range(n):
        name = names[i % len(names)]
        value = golden_gen.random_value(descs, name, rng)
        data = protocol.encode_message(name, value)
        if codec.encoded_size(by_name[name], value, reg) != len(data):
            size_errors += 1
        back = protocol.decode_message(name, data)
        if _strip_nones(back) != _strip_nones(value):
            mismatches += 1
    ok = mismatches == 0 and size_errors == 0
    report("round-trip fuzz", ok,
           f"{n} messages: {mismatches} decode mismatches, "
           f"{size_errors} size mismatches (want 0/0)")


def test_filesystem_overhead():
    cases = [  # (mode, crc, expected header bytes)
        (PartitionMode.STATIC, False, 2),
        (PartitionMode.STATIC, True, 4),
        (PartitionMode.DYNAMIC, False, 4),
        (PartitionMode.DYNAMIC, True, 6),
    ]
    got = []
    for pid, (mode, crc, want) in enumerate(cases, start=1):
        cfg = PartitionConfig(partition_id=pid, size=4096, mode=mode,
                              element_size=16 if mode is PartitionMode.STATIC
                              else None, crc_enabled=crc)
        got.append((cfg.header_size(), want))
    worst = protocol.encode_message("ScanChunk", {
        "timestamp": {"seconds": 1, "ms": 2},
        "devices": [{"id": i, "rssi": -40, "count": 1} for i in range(255)]})
    ok = all(g == w for g, w in got) and len(worst) == 1027
    report("filesystem overhead", ok,
           f"headers {[g for g, _ in got]} (want [2, 4, 4, 6]), "
           f"255-device element = {len(worst)} B (want 1027)")


def test_crash_consistency():
    r = run_fault_experiment(cuts=1000, seed=0)
    ok = r.lost == 0 and r.phantoms == 0
    report("crash consistency", ok,
           f"{r.cuts} power cuts over {r.stores_attempted} stores: "
           f"{r.lost} lost, {r.phantoms} phantom elements (want 0/0)")


def test_flash_semantics():
    flash = FlashModel()
    flash.store_word(0, bytes([0xFF, 0xAB, 0xFF, 0xFF]))
    fixture = bytes(flash.read(0, 4))
    fixture_ok = fixture == bytes([0xFF, 0xAB, 0xFF, 0xFF])
    flash.store_word(0, bytes([0x12, 0xFF, 0x34, 0xFF]))
    sibling_ok = bytes(flash.read(0, 4)) == bytes([0x12, 0xAB, 0x34, 0xFF])

    rng = random.Random(11)
    mismatches = 0
    model = bytearray([0xFF]) * 4096
    f2 = FlashModel(pages=1, page_size=4096)
    for _ in range(10_000):
        addr = rng.randrange(0, 4096 // 4) * 4
        word = bytes(rng.randrange(256) for _ in range(4))
        f2.store_word(addr, word)
        for i in range(4):
            model[addr + i] &= word[i]
        if bytes(f2.read(addr, 4)) != bytes(model[addr:addr + 4]):
            mismatches += 1
    ok = fixture_ok and sibling_ok and mismatches == 0
    report("flash AND semantics", ok,
           f"FF AB FF FF fixture {'held' if fixture_ok and sibling_ok else 'BROKE'}, "
           f"10000 word writes: {mismatches} deviations from analytic AND (want 0)")


def test_clock_sync():
    const = run_sync_experiment(mode="constant", seed=3)
    ewma = run_sync_experiment(mode="ewma", alpha=0.11, f_dev=3.833, seed=3)
    ratio = ewma.mae_ms / const.mae_ms
    ok = 35.0 <= const.max_error_ms <= 45.0 and ratio <= 0.30
    report("clock sync", ok,
           f"constant-slope max error {const.max_error_ms:.2f} ms "
           f"(want 35-45), smoothed/constant MAE ratio {ratio:.3f} "
           f"(want <= 0.30; {ewma.mae_ms:.2f} vs {const.mae_ms:.2f} ms)")


def test_slope_clamp():
    rng = random.Random(23)
    violations = 0
    checked = 0
    for _ in range(200):
        f_dev = Fraction(rng.randrange(1, 8 * 256), 256)
        tb = Timebase(alpha=Fraction(rng.randrange(0, 257), 256),
                      freq_dev_hz=f_dev)
        lo, hi = tb.slope_bounds()
        ticks, ms = 0, 0
        for _ in range(30):
            ticks += rng.randrange(1, 10**7)
            # outliers: wildly wrong timestamps, including backwards jumps
            ms += rng.choice([rng.randrange(1, 10**6),
                              -rng.randrange(1, 10**6),
                              rng.randrange(1, 10**9)])
            tb.on_sync(ticks, ms)
            checked += 1
            if not lo <= tb.slope <= hi:
                violations += 1
    ok = violations == 0
    report("slope clamp", ok,
           f"{checked} fuzzed syncs with outlier timestamps: "
           f"{violations} slopes outside [1000/(32768+f), 1000/(32768-f)] (want 0)")


def test_throughput():
    timer = measure_throughput(mode="timer", period_ms=6.0)
    in_band = 2200.0 <= timer.bytes_per_s <= 2400.0
    ordering_ok = True
    rates = {}
    for seed in (0, 1, 2):
        t = measure_throughput(mode="timer", period_ms=6.0, seed=seed)
        s = measure_throughput(mode="scheduler", seed=seed, n_chunks=20)
        c = measure_throughput(mode="callback", seed=seed, n_chunks=20)
        rates[seed] = (t.bytes_per_s, s.bytes_per_s, c.bytes_per_s)
        if not t.bytes_per_s > s.bytes_per_s > c.bytes_per_s:
            ordering_ok = False
    bound_ok = True
    bounds = []
    for period in (6, 10, 20, 50):
        r = measure_throughput(mode="timer", period_ms=float(period),
                               n_chunks=20)
        limit = 20_000.0 / period  # one 20-byte packet per period
        bounds.append((period, r.bytes_per_s, limit))
        if r.bytes_per_s > limit + 1e-6:
            bound_ok = False
    ok = in_band and ordering_ok and bound_ok
    report("transfer throughput", ok,
           f"timer T=6ms: {timer.bytes_per_s:.0f} B/s (want 2200-2400); "
           f"timer>scheduler>callback {'holds' if ordering_ok else 'VIOLATED'} "
           f"for seeds 0-2 {rates[0][0]:.0f}/{rates[0][1]:.0f}/{rates[0][2]:.0f}; "
           f"20B-per-period bound {'holds' if bound_ok else 'VIOLATED'} "
           f"for T in (6,10,20,50) ms")


def test_battery_codec():
    worst = 0.0
    for i in range(100, 356):
        v = i / 100
        err = abs(ch.battery_decode(ch.battery_encode(v)) - v)
        worst = max(worst, err)
    ok = worst <= 0.005
    report("battery codec", ok,
           f"max |decode(encode(V)) - V| on the 0.01 V grid in [1.00, 3.55] "
           f"= {worst:.4f} V (want <= 0.005)")


def _scan_oracle(observations, aggregation):
    by_id = {}
    for dev_id, rssi in observations:
        by_id.setdefault(dev_id, []).append(rssi)
    devices = []
    for dev_id, rssis in by_id.items():
        agg = (max(rssis) if aggregation == "max"
               else sum(rssis) // len(rssis))  # floor average
        devices.append((dev_id, agg, min(len(rssis), 255)))
    keyed = sorted(enumerate(devices),
                   key=lambda kv: (0 if kv[1][0] >= ch.BEACON_ID_THRESHOLD
                                   else 1, -kv[1][1], kv[0]))
    return [d for _, d in keyed][:ch.SCAN_TRUNCATE]


def test_scan_sort():
    rng = random.Random(5)
    mismatches = 0
    beacon_drops = 0
    for _ in range(10_000):
        n = rng.randrange(0, 60)
        obs = [(rng.choice([rng.randrange(16000), rng.randrange(16000, 32768)]),
                rng.randrange(-100, 0)) for _ in range(n)]
        agg = rng.choice(["avg", "max"])
        got = [(d.id, d.rssi, d.count)
               for d in ch.scan_aggregate_and_sort(obs, aggregation=agg)]
        if got != _scan_oracle(obs, agg):
            mismatches += 1
        kept = {d[0] for d in got}
        seen = {i for i, _ in obs}
        dropped_beacons = {i for i in seen - kept
                           if i >= ch.BEACON_ID_THRESHOLD}
        kept_plain = {i for i in kept if i < ch.BEACON_ID_THRESHOLD}
        if dropped_beacons and kept_plain:
            beacon_drops += 1
    ok = mismatches == 0 and beacon_drops == 0
    report("scan sort oracle", ok,
           f"10000 device lists: {mismatches} oracle mismatches, "
           f"{beacon_drops} cases dropped a beacon while keeping a non-beacon "
           f"(want 0/0)")


def test_audio_averaging():
    results = [run_audio_experiment(1, 2, seed=s) for s in (0, 1)]
    results.append(run_audio_experiment(2, 3, seed=0))
    worst = max(r.mae for r in results)
    ok = worst <= 1.0
    report("audio averaging", ok,
           f"max MAE between k-sample averaging variants over 20 s "
           f"band-limited signals = {worst:.3f} quantization units (want <= 1.0)")
