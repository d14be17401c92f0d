"""Command line interface."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from badgesim.sim.oscillator import NS


@click.group()
def main():
    """Badge firmware core simulator."""


# ------------------------------------------------------------------ tinybuf

@main.group()
def tinybuf():
    """Schema compiler."""


@tinybuf.command("compile")
@click.argument("schema_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", type=click.Choice(["python", "descriptor"]),
              default="descriptor", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default=".", show_default=True)
def tinybuf_compile(schema_file, target, out_dir):
    """Compile a schema to a descriptor file or language bindings."""
    from badgesim.tinybuf import emit, schema

    try:
        descs = schema.parse_schema(Path(schema_file).read_text())
    except schema.SchemaError as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(schema_file).stem
    if target == "descriptor":
        path = out / f"{stem}.descriptor.json"
        emit.write_descriptor_file(descs, path)
    else:
        path = out / f"{stem}_messages.py"
        path.write_text(emit.emit_bindings(descs, "python"))
    click.echo(f"wrote {path}")


# ----------------------------------------------------------------------- fs

@main.group()
def fs():
    """Filesystem image tools."""


@fs.command("inspect")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--partition", "partition_id", type=int, default=None,
              help="Only this partition id.")
def fs_inspect(image, partition_id):
    """List live elements in a dumped memory image.

    Expects a sidecar `<image>.meta.json` (written by `sim run --dump-mem`)
    describing the partition table.
    """
    from badgesim.seqfs import Filesystem, PartitionConfig, PartitionMode
    from badgesim.vmem import VirtualStorage

    meta_path = Path(str(image) + ".meta.json")
    if not meta_path.exists():
        meta_path = Path(image).with_suffix(".meta.json")
    if not meta_path.exists():
        raise click.ClickException(f"no partition table sidecar for {image}")
    meta = json.loads(meta_path.read_text())

    storage = VirtualStorage()
    storage.load(Path(image).read_bytes())
    filesystem = Filesystem(storage)
    for pdef in meta["partitions"]:
        cfg = PartitionConfig(
            partition_id=pdef["partition_id"], size=pdef["size"],
            mode=PartitionMode(pdef.get("mode", "dynamic")),
            element_size=pdef.get("element_size"),
            crc_enabled=pdef.get("crc_enabled", True))
        p = filesystem.register_partition(cfg)
        if partition_id is not None and cfg.partition_id != partition_id:
            continue
        label = pdef.get("source", cfg.partition_id)
        click.echo(f"partition {cfg.partition_id} ({label}): "
                   f"{len(p.chain)} live elements, "
                   f"[0x{p.base:06x}, 0x{p.eend:06x})")
        for e in p.chain:
            click.echo(f"  record {e.record:5d}  addr 0x{e.addr:06x}  "
                       f"{e.length} bytes")


# ---------------------------------------------------------------------- sim

@main.group()
def sim():
    """Simulation experiments."""


def _out_dir_option(fn):
    fn = click.option("--out-dir", type=click.Path(file_okay=False),
                      default=None, help="Write CSV/summary files here.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    return fn


@sim.command("run")
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None,
              help="Override the scenario's seed.")
@click.option("--dump-mem", is_flag=True, help="Dump the non-volatile image.")
def sim_run(scenario_file, out_dir, seed, dump_mem):
    """Run a JSON scenario."""
    from badgesim.sim.scenario import ScenarioError, load_scenario, run_scenario

    try:
        scenario = load_scenario(scenario_file)
        if seed is not None:
            scenario["seed"] = seed
        result = run_scenario(scenario, out_dir=out_dir, dump_mem=dump_mem)
    except ScenarioError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({
        "duration_s": result.duration_s,
        "counters": result.counters,
        "received_chunks": result.received_chunks,
        "partition_elements": result.partition_elements,
        "syncs": len(result.sync_errors),
    }, indent=2, sort_keys=True))


@sim.command("throughput")
@click.option("--mode", type=click.Choice(["timer", "scheduler", "callback"]),
              default="timer", show_default=True)
@click.option("--period-ms", type=float, default=6.0, show_default=True)
@click.option("--chunks", type=int, default=50, show_default=True)
@_out_dir_option
def sim_throughput(mode, period_ms, chunks, out_dir, seed):
    """Measure bulk-transfer throughput for one pump mode."""
    from badgesim.sim.experiments import measure_throughput, write_throughput_csv

    r = measure_throughput(mode=mode, period_ms=period_ms, n_chunks=chunks,
                           seed=seed)
    click.echo(f"{r.mode}: {r.bytes_per_s:.1f} B/s "
               f"({r.bytes_received} bytes in {r.elapsed_s:.3f} s)")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_throughput_csv([r], out / "throughput.csv")


@sim.command("sync")
@click.option("--mode", type=click.Choice(["constant", "ewma"]),
              default="ewma", show_default=True)
@click.option("--alpha", type=float, default=0.11, show_default=True)
@click.option("--fdev", type=float, default=3.833, show_default=True)
@click.option("--drift-hz", type=float, default=2.2, show_default=True)
@click.option("--duration-h", type=float, default=9.5, show_default=True)
@click.option("--max-gap-s", type=float, default=600.0, show_default=True)
@click.option("--jitter-ms", type=float, default=0.0, show_default=True)
@_out_dir_option
def sim_sync(mode, alpha, fdev, drift_hz, duration_h, max_gap_s, jitter_ms,
             out_dir, seed):
    """Run the clock-sync drift experiment."""
    from badgesim.sim.experiments import run_sync_experiment, write_sync_csv

    r = run_sync_experiment(drift_hz=drift_hz, mode=mode, alpha=alpha,
                            f_dev=fdev, duration_s=duration_h * 3600,
                            max_gap_s=max_gap_s, seed=seed,
                            jitter_ms=jitter_ms)
    click.echo(f"{r.mode}: {r.n_syncs} syncs, MAE {r.mae_ms:.3f} ms, "
               f"max {r.max_error_ms:.3f} ms")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sync_csv(r, out / f"sync_{mode}.csv")


@sim.command("faults")
@click.option("--cuts", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def sim_faults(cuts, seed):
    """Power-loss storm against the filesystem, with recovery audit."""
    from badgesim.sim.experiments import run_fault_experiment

    r = run_fault_experiment(cuts=cuts, seed=seed)
    click.echo(f"{r.cuts} cuts over {r.stores_attempted} stores: "
               f"{r.stores_committed} committed, "
               f"{r.lost} lost, {r.phantoms} phantoms")
    if r.lost or r.phantoms:
        sys.exit(1)


@sim.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=3333, show_default=True)
@click.option("--prestore-mic", type=int, default=0, show_default=True)
@click.option("--prestore-scan", type=int, default=0, show_default=True)
@click.option("--clients", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def sim_serve(host, port, prestore_mic, prestore_scan, clients, seed):
    """Expose a simulated badge on a localhost TCP socket."""
    from badgesim.sim.bridge import serve

    serve(host=host, port=port, clients=clients, prestore_mic=prestore_mic,
          prestore_scan=prestore_scan, seed=seed)
