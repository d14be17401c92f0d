"""Scenario runner: one badge, one hub, a JSON-described schedule.

A scenario is fully determined by its seed: the hub's sync gaps, the
synthetic sample sources, and the fault plan all draw from one seeded RNG,
so two runs emit byte-identical CSV files.

Scenario JSON fields (all optional except duration_s):
  seed            int, default 0
  duration_s      simulated seconds
  badge           {id, group, mac_hex, drift_hz, sources: [names or
                   {source, config}]}
  hub             {connect_at_s, sync_gap_s: [lo, hi], data_requests:
                   [{at_s, source, since_ms}]}
  faults          {power_loss_at_s: [t, ...]}
  sender          {mode, period_ms, queue_load}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from badgesim import chunks as ch
from badgesim import protocol
from badgesim.badge import Badge, DEFAULT_CONFIGS
from badgesim.sim.experiments import _band_limited_signal
from badgesim.sim.loop import EventLoop
from badgesim.sim.oscillator import NS, OscillatorModel
from badgesim.sim.transport import Link

SOURCE_NAMES = {"mic": ch.SOURCE_MIC, "scan": ch.SOURCE_SCAN,
                "accel": ch.SOURCE_ACCEL, "accel_event": ch.SOURCE_ACCEL_EVENT,
                "battery": ch.SOURCE_BATTERY}
SOURCE_IDS = {v: k for k, v in SOURCE_NAMES.items()}


class ScenarioError(Exception):
    pass


@dataclass
class ScenarioResult:
    duration_s: float
    sync_errors: list = field(default_factory=list)  # (t_s, abs_err_ms)
    received_chunks: dict = field(default_factory=dict)  # source -> count
    counters: dict = field(default_factory=dict)
    partition_elements: dict = field(default_factory=dict)
    restarts: int = 0
    events_run: int = 0


def _parse_sources(items) -> list[tuple[int, dict]]:
    out = []
    for item in items or []:
        if isinstance(item, str):
            src = SOURCE_NAMES[item]
            out.append((src, dict(DEFAULT_CONFIGS[src])))
        else:
            src = SOURCE_NAMES[item["source"]] if isinstance(item["source"], str) \
                else int(item["source"])
            cfg = dict(DEFAULT_CONFIGS[src])
            cfg.update(item.get("config", {}))
            out.append((src, cfg))
    return out


def load_scenario(path: str | Path) -> dict:
    with open(path) as f:
        scenario = json.load(f)
    validate_scenario(scenario)
    return scenario


def validate_scenario(s: dict) -> None:
    if "duration_s" not in s:
        raise ScenarioError("scenario needs duration_s")
    if s["duration_s"] < 0:
        raise ScenarioError("duration_s must be >= 0")
    for item in s.get("badge", {}).get("sources", []):
        name = item if isinstance(item, str) else item["source"]
        if isinstance(name, str) and name not in SOURCE_NAMES:
            raise ScenarioError(f"unknown source {name!r}")
    mode = s.get("sender", {}).get("mode", "timer")
    if mode not in ("timer", "scheduler", "callback"):
        raise ScenarioError(f"unknown sender mode {mode!r}")


def run_scenario(scenario: dict, out_dir: str | Path | None = None,
                 dump_mem: bool = False) -> ScenarioResult:
    validate_scenario(scenario)
    seed = scenario.get("seed", 0)
    duration_ns = int(scenario["duration_s"] * NS)
    rng = random.Random(seed)

    badge_cfg = scenario.get("badge", {})
    sender_cfg = scenario.get("sender", {})
    hub_cfg = scenario.get("hub", {})

    loop = EventLoop()
    osc = OscillatorModel(
        offset_hz=Fraction(badge_cfg.get("drift_hz", 0)).limit_denominator(10**6),
        seed=seed)
    badge = Badge(loop, oscillator=osc,
                  mac=bytes.fromhex(badge_cfg.get("mac_hex", "020000000001")),
                  sender_mode=sender_cfg.get("mode", "timer"),
                  sender_period_ns=int(sender_cfg.get("period_ms", 6) * 1_000_000),
                  sender_queue_load=sender_cfg.get("queue_load", 12))
    badge.badge_id = badge_cfg.get("id", 0)
    badge.group = badge_cfg.get("group", 0)

    # synthetic environment, all drawn from the scenario RNG
    sig = _band_limited_signal(rng.randrange(2**31))
    scan_rng = random.Random(rng.randrange(2**31))

    def mic_source(t_ns: int) -> int:
        return min(max(int(round(128 + sig(t_ns / NS))), 0), 255)

    def scan_source(t_ns: int):
        n = scan_rng.randrange(0, 8)
        return [(scan_rng.choice([scan_rng.randrange(1, 100),
                                  16000 + scan_rng.randrange(0, 10)]),
                 -scan_rng.randrange(40, 95)) for _ in range(n)]

    def battery_source(t_ns: int) -> int:
        return max(300, 880 - t_ns // (3600 * NS))  # slow discharge

    badge.sample_sources["mic"] = mic_source
    badge.sample_sources["scan"] = scan_source
    badge.sample_sources["battery"] = battery_source

    for src, cfg in _parse_sources(badge_cfg.get("sources")):
        badge.start_source(src, cfg)

    result = ScenarioResult(duration_s=scenario["duration_s"])

    # hub side
    link = Link(loop, seed=rng.randrange(2**31),
                jitter=bool(hub_cfg.get("jitter", False)))
    badge.attach_link(link, link.a)
    hub_splitter = protocol.FrameSplitter()

    def hub_rx(data: bytes) -> None:
        for frame in hub_splitter.feed(data):
            resp = protocol.decode_message("Response", frame)
            for src, name in SOURCE_IDS.items():
                key = f"{name}_data" if name != "accel_event" else "accel_event_data"
                if resp.get(key) is not None:
                    result.received_chunks[name] = result.received_chunks.get(name, 0) + 1

    link.b.on_rx = hub_rx

    def hub_send(value: dict) -> None:
        frame = protocol.encode_request(value)
        for i in range(0, len(frame), 20):
            link.b.try_send(frame[i : i + 20])

    gap_lo, gap_hi = hub_cfg.get("sync_gap_s", [0, 600])

    def hub_sync() -> None:
        if not link.connected:
            return
        hub_send({"status": {
            "timestamp": ch.Timestamp.from_unix_ms(loop.now_ns // 1_000_000
                                                   + 1_700_000_000_000).to_value(),
            "assignment": {"id": badge_cfg.get("id", 1),
                           "group": badge_cfg.get("group", 1)},
        }})
        loop.call_later(int(rng.uniform(gap_lo, gap_hi) * NS) + 1, hub_sync)

    def hub_connect() -> None:
        link.connect()
        hub_sync()

    loop.call_at(int(hub_cfg.get("connect_at_s", 0) * NS), hub_connect)

    for dr in hub_cfg.get("data_requests", []):
        src = SOURCE_NAMES[dr["source"]] if isinstance(dr["source"], str) \
            else int(dr["source"])
        loop.call_at(int(dr["at_s"] * NS), hub_send, {
            "data": {"source": src,
                     "since": ch.Timestamp.from_unix_ms(dr.get("since_ms", 0)).to_value()}})

    # fault plan: arm a power loss shortly before a storage write lands
    def arm_fault() -> None:
        badge.storage.inject_power_loss(rng.randrange(0, 64))

    for t_s in scenario.get("faults", {}).get("power_loss_at_s", []):
        loop.call_at(int(t_s * NS), arm_fault)

    # track badge sync prediction errors against the hub clock
    loop.run_until(duration_ns)

    result.sync_errors = [(i, float(e)) for i, e in
                          enumerate(badge.timebase.abs_errors_ms)]
    result.counters = dict(badge.counters)
    result.counters["fifo_overwrites"] = badge.chunk_fifo.overwrites
    result.partition_elements = {SOURCE_IDS[src]: len(p.chain)
                                 for src, p in badge.partitions.items()}
    result.restarts = badge.counters.get("restarts", 0)
    result.events_run = loop.events_run

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_outputs(result, badge, out, dump_mem)
    return result


def _write_outputs(result: ScenarioResult, badge: Badge, out: Path,
                   dump_mem: bool) -> None:
    import csv
    with open(out / "sync_errors.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sync_index", "abs_error_ms"])
        for i, e in result.sync_errors:
            w.writerow([i, f"{e:.6f}"])
    with open(out / "storage.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["source", "live_elements"])
        for name, n in sorted(result.partition_elements.items()):
            w.writerow([name, n])
    summary = {
        "duration_s": result.duration_s,
        "counters": result.counters,
        "received_chunks": result.received_chunks,
        "partition_elements": result.partition_elements,
        "events_run": result.events_run,
    }
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    if dump_mem:
        (out / "memory.bin").write_bytes(badge.storage.dump())
        meta = {"partitions": [
            {"partition_id": p.cfg.partition_id, "size": p.cfg.size,
             "mode": p.cfg.mode.value, "element_size": p.cfg.element_size,
             "crc_enabled": p.cfg.crc_enabled,
             "source": SOURCE_IDS[src]}
            for src, p in badge.partitions.items()]}
        with open(out / "memory.meta.json", "w") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")
