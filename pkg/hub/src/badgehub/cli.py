"""Command line interface: talk to a badge over the socket bridge."""

import csv
import json
import sys
import time

import click

from .client import SOURCES, HubSession, join_timestamp
from .codec import Schema


def _session(host, port, descriptor):
    schema = Schema.from_file(descriptor) if descriptor else None
    return HubSession(host=host, port=port, schema=schema)


def _common(f):
    f = click.option("--host", default="127.0.0.1", show_default=True)(f)
    f = click.option("--port", type=int, required=True)(f)
    f = click.option("--descriptor", type=click.Path(exists=True),
                     help="Override the bundled protocol descriptor.")(f)
    return f


@click.group()
def main():
    """Badge hub client."""


@main.command()
@_common
@click.option("--id", "badge_id", type=int, default=None,
              help="Assign this badge id (with --group).")
@click.option("--group", type=int, default=0)
@click.option("--now-ms", type=int, default=None,
              help="Sync time to send, unix ms (default: wall clock).")
def status(host, port, descriptor, badge_id, group, now_ms):
    """Sync the badge clock and print its status."""
    with _session(host, port, descriptor) as s:
        body = s.status(badge_id, group, now_ms)
    body["badge_time_ms"] = join_timestamp(body.pop("timestamp"))
    click.echo(json.dumps(body, indent=2))


@main.command()
@_common
@click.option("--id", "badge_id", type=int, required=True)
@click.option("--group", type=int, default=0)
@click.option("--sources", default="mic", show_default=True,
              help="Comma-separated sources to start.")
@click.option("--now-ms", type=int, default=None)
def activate(host, port, descriptor, badge_id, group, sources, now_ms):
    """Assign identity, sync, and start recording."""
    wanted = [x.strip() for x in sources.split(",") if x.strip()]
    for src in wanted:
        if src not in SOURCES:
            raise click.BadParameter(f"unknown source {src!r}")
    with _session(host, port, descriptor) as s:
        body = s.activate(badge_id, group, now_ms, sources=wanted)
    click.echo(f"badge {body['id']} group {body['group']} "
               f"synced={body['synced']} started: {', '.join(wanted)}")


def _rows_for(source, chunk):
    ts = join_timestamp(chunk["timestamp"])
    if source == "mic":
        period = chunk["sample_period_ms"]
        for i, v in enumerate(chunk["data"]):
            yield {"timestamp_ms": ts + i * period, "value": v}
    elif source == "scan":
        for d in chunk["devices"]:
            yield {"timestamp_ms": ts, "seen_id": d["id"],
                   "rssi": d["rssi"], "count": d["count"]}
    elif source == "accel":
        for v in chunk["magnitudes"]:
            yield {"timestamp_ms": ts, "magnitude": v}
    elif source == "accel_event":
        yield {"timestamp_ms": ts}
    else:
        yield {"timestamp_ms": ts, "voltage": chunk["voltage"]}


@main.command()
@_common
@click.option("--source", type=click.Choice(SOURCES), default="mic",
              show_default=True)
@click.option("--since", type=int, default=0, show_default=True,
              help="Only chunks recorded at/after this unix-ms time.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write rows as CSV (default: stdout).")
@click.option("--sync/--no-sync", default=True, show_default=True,
              help="Send a clock sync before pulling.")
def pull(host, port, descriptor, source, since, out, sync):
    """Download stored chunks from one source and flatten them to CSV."""
    with _session(host, port, descriptor) as s:
        if sync:
            s.status()
        chunks = s.pull_data(source, since)
    rows = [row for chunk in chunks for row in _rows_for(source, chunk)]
    stream = open(out, "w", newline="") if out else sys.stdout
    try:
        if rows:
            writer = csv.DictWriter(stream, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    finally:
        if out:
            stream.close()
    click.echo(f"{len(chunks)} chunks, {len(rows)} rows from {source}",
               err=True)


@main.command()
@_common
@click.option("--source", type=click.Choice(SOURCES), default="mic",
              show_default=True)
@click.option("--points", type=int, default=10, show_default=True)
def stream(host, port, descriptor, source, points):
    """Print live stream samples."""
    with _session(host, port, descriptor) as s:
        s.status(now_ms=int(time.time() * 1000))
        for p in s.stream(points, source=source):
            click.echo(f"{join_timestamp(p['timestamp'])},{p['value']}")


if __name__ == "__main__":
    main()
