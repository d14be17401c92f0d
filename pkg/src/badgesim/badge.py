"""The badge application.

Wires the sampling pipelines, the chunk storer, the framed sender, the
request handler state machine, and the advertiser on top of the event
loop, storage, and link models. Sampling runs in timer context and only
touches FIFOs; storage and protocol work run as scheduler tasks in the
main context.
"""

from __future__ import annotations

import struct

from badgesim import chunks as ch
from badgesim import protocol
from badgesim.fifo import ChunkFifo
from badgesim.seqfs import (
    BeginReached,
    CorruptElement,
    EmptyPartition,
    Filesystem,
    PartitionConfig,
)
from badgesim.sim.loop import EventLoop, Timer
from badgesim.sim.oscillator import OscillatorModel
from badgesim.timebase import NOMINAL_HZ, Timebase
from badgesim.tinybuf.codec import CodecError
from badgesim.vmem import PowerLoss, StorageError, VirtualStorage

ADVERTISING_PERIOD_NS = 200_000_000  # 200 ms
DEVICE_NAME = b"HDBDG"
MIC_SAMPLE_HZ = 700
SEND_RETRY_BUDGET = 10
CHUNK_FIFO_SLOTS = 4
BATTERY_EWMA_ALPHA = 0.1

MS = 1_000_000
NS = 1_000_000_000

# default partition layout: flash for the bulk sources, EEPROM for the rest
PARTITION_SIZES = {
    ch.SOURCE_MIC: 128 * 1024,
    ch.SOURCE_SCAN: 64 * 1024,
    ch.SOURCE_ACCEL: 64 * 1024,
    ch.SOURCE_ACCEL_EVENT: 8 * 1024,
    ch.SOURCE_BATTERY: 8 * 1024,
}

DEFAULT_CONFIGS = {
    ch.SOURCE_MIC: {"avg_period_ms": 50},
    ch.SOURCE_SCAN: {"window_ms": 100, "interval_ms": 300, "duration_s": 3,
                     "period_s": 15, "aggregation": 0},
    ch.SOURCE_ACCEL: {"datarate_hz": 10, "operating_mode": 0,
                      "full_scale_g": 4, "fifo_read_period_ms": 1000},
    ch.SOURCE_ACCEL_EVENT: {"threshold_mg": 250, "min_duration_ms": 0,
                            "dead_time_ms": 1000},
    ch.SOURCE_BATTERY: {"read_period_s": 60},
}

_START_KIND_TO_SOURCE = {
    "start_mic": ch.SOURCE_MIC,
    "start_scan": ch.SOURCE_SCAN,
    "start_accel": ch.SOURCE_ACCEL,
    "start_accel_event": ch.SOURCE_ACCEL_EVENT,
    "start_battery": ch.SOURCE_BATTERY,
}

_RESPONSE_FIELD_BY_SOURCE = {
    ch.SOURCE_MIC: "mic_data",
    ch.SOURCE_SCAN: "scan_data",
    ch.SOURCE_ACCEL: "accel_data",
    ch.SOURCE_ACCEL_EVENT: "accel_event_data",
    ch.SOURCE_BATTERY: "battery_data",
}

_SOURCE_FLAG = {
    ch.SOURCE_MIC: protocol.FLAG_MIC,
    ch.SOURCE_SCAN: protocol.FLAG_SCAN,
    ch.SOURCE_ACCEL: protocol.FLAG_ACCEL,
    ch.SOURCE_ACCEL_EVENT: protocol.FLAG_ACCEL_EVENT,
    ch.SOURCE_BATTERY: protocol.FLAG_BATTERY,
}


class BadgeError(Exception):
    pass


class Sender:
    """Drains the TX byte stream in 20-byte slices.

    Pump modes:
      timer      - a repeating timer hands one slice per tick
      scheduler  - each step is requeued through the main-context scheduler
                   behind `queue_load` background tasks
      callback   - one slice per completed connection event
    """

    def __init__(self, loop: EventLoop, mode: str = "timer",
                 period_ns: int = 6_000_000, queue_load: int = 12,
                 on_give_up=None):
        if mode not in ("timer", "scheduler", "callback"):
            raise BadgeError(f"unknown sender mode {mode!r}")
        self.loop = loop
        self.mode = mode
        self.queue_load = queue_load
        self.endpoint = None
        self.on_give_up = on_give_up
        self._buf = bytearray()
        self._fails = 0
        self._sched_pending = False
        self.timer = Timer(loop, period_ns, self._pump_once)
        self.sliced_bytes = 0

    def attach(self, endpoint) -> None:
        self.endpoint = endpoint
        if self.mode == "callback":
            endpoint.on_tx_done = self._on_tx_done

    @property
    def backlog(self) -> int:
        return len(self._buf)

    def enqueue_frame(self, frame: bytes) -> None:
        was_empty = not self._buf
        self._buf += frame
        if self.mode == "timer":
            self.timer.start()
        elif self.mode == "scheduler":
            self._kick_scheduler()
        elif was_empty:
            self._pump_once()  # callback mode needs a first packet in flight

    def _kick_scheduler(self) -> None:
        if self._sched_pending or not self._buf:
            return
        self._sched_pending = True
        for _ in range(self.queue_load):
            self.loop.schedule(lambda: None)
        self.loop.schedule(self._sched_step)

    def _sched_step(self) -> None:
        self._sched_pending = False
        self._pump_once()
        self._kick_scheduler()

    def _on_tx_done(self, n_packets: int) -> None:
        self._pump_once()

    def _pump_once(self) -> None:
        if not self._buf:
            self.timer.stop()
            return
        if self.endpoint is None:
            return
        slice_ = bytes(self._buf[:20])
        if self.endpoint.try_send(slice_):
            del self._buf[: len(slice_)]
            self.sliced_bytes += len(slice_)
            self._fails = 0
            if not self._buf:
                self.timer.stop()
        else:
            self._fails += 1
            if self._fails >= SEND_RETRY_BUDGET:
                self._fails = 0
                self._buf.clear()
                self.timer.stop()
                if self.on_give_up is not None:
                    self.on_give_up()


class Badge:
    def __init__(self, loop: EventLoop, storage: VirtualStorage | None = None,
                 oscillator: OscillatorModel | None = None,
                 mac: bytes = b"\x02\x00\x00\x00\x00\x01",
                 sender_mode: str = "timer",
                 sender_period_ns: int = 6_000_000,
                 sender_queue_load: int = 12):
        self.loop = loop
        self.storage = storage or VirtualStorage()
        self.osc = oscillator or OscillatorModel()
        self.mac = bytes(mac)
        if len(self.mac) != 6:
            raise BadgeError("MAC must be 6 bytes")

        self.fs = Filesystem(self.storage)
        self.partitions = {
            src: self.fs.register_partition(
                PartitionConfig(partition_id=src + 1, size=size))
            for src, size in PARTITION_SIZES.items()
        }

        self.badge_id = 0
        self.group = 0
        self.timebase = Timebase()
        self.battery_volts: float | None = None

        self.running: dict[int, dict] = {}  # source -> active config
        self.streaming: set[int] = set()
        self._timers: dict[int, Timer] = {}
        self._mic_chunk = None  # open (timestamp, period, data) slot value

        self.chunk_fifo = ChunkFifo(CHUNK_FIFO_SLOTS)
        self._store_scheduled = False

        self.sender = Sender(loop, sender_mode, sender_period_ns,
                             sender_queue_load, on_give_up=self._on_send_give_up)
        self.link = None
        self.endpoint = None
        self._splitter = protocol.FrameSplitter()

        self.advertising_log: list[bytes] = []
        self.on_advertise = None
        self._adv_timer = Timer(loop, ADVERTISING_PERIOD_NS, self._advertise_tick)
        self._adv_timer.start()

        self.counters = {
            "chunks_closed": 0,
            "chunks_stored": 0,
            "store_errors": 0,
            "corrupted_skipped": 0,
            "frames_dropped": 0,
            "handler_errors": 0,
            "disconnects": 0,
        }

        # simulation-side sample sources, overridable per scenario
        self.sample_sources = {
            "mic": lambda t_ns: 128,
            "scan": lambda t_ns: [],
            "accel": lambda t_ns: 0,
            "accel_event": lambda t_ns: False,
            "battery": lambda t_ns: 853,  # ~3.0 V through the divider
        }
        self._accel_buf: list[int] = []
        self._accel_event_dead_until = -1

    # -- clock ----------------------------------------------------------

    def current_ticks(self) -> int:
        return self.osc.ticks_at(self.loop.now_ns)

    def badge_time_ms(self) -> int:
        ticks = self.current_ticks()
        if self.timebase.synced:
            return int(self.timebase.now_ms(ticks))
        return ticks * 1000 // NOMINAL_HZ  # uptime-based epoch

    def timestamp_now(self) -> ch.Timestamp:
        return ch.Timestamp.from_unix_ms(self.badge_time_ms())

    # -- link -----------------------------------------------------------

    def attach_link(self, link, endpoint) -> None:
        self.link = link
        self.endpoint = endpoint
        endpoint.on_rx = self._on_rx
        self.sender.attach(endpoint)

    def disconnect(self) -> None:
        self.counters["disconnects"] += 1
        self._splitter = protocol.FrameSplitter()
        if self.link is not None:
            self.link.disconnect()

    def _on_send_give_up(self) -> None:
        self.disconnect()

    def _on_rx(self, data: bytes) -> None:
        for frame in self._splitter.feed(data):
            self.loop.schedule(self._handle_frame, frame)

    # -- request handler --------------------------------------------------

    def _handle_frame(self, frame: bytes) -> None:
        try:
            req = protocol.decode_message("Request", frame)
        except CodecError:
            self.counters["frames_dropped"] += 1
            self.disconnect()
            return
        kind = next((k for k, v in req.items() if v is not None), None)
        handler = getattr(self, f"_req_{kind}", None)
        if handler is None:
            self.counters["handler_errors"] += 1
            self._send_response({"error": {"code": 1}})
            return
        try:
            handler(req[kind])
        except (BadgeError, CodecError, StorageError,
                ch.ChunkError) as exc:
            self.counters["handler_errors"] += 1
            self._send_response({"error": {"code": 2}})

    def _send_response(self, value: dict) -> None:
        self.sender.enqueue_frame(protocol.encode_response(value))

    def _status_flags(self) -> int:
        flags = protocol.FLAG_SYNCED if self.timebase.synced else 0
        for src in self.running:
            flags |= _SOURCE_FLAG[src]
        return flags

    def _req_status(self, body: dict) -> None:
        if body.get("assignment") is not None:
            self.badge_id = body["assignment"]["id"]
            self.group = body["assignment"]["group"]
        ts = body["timestamp"]
        received_ms = ts["seconds"] * 1000 + ts["ms"]
        ticks = self.current_ticks()
        if not self.timebase.synced or ticks != self.timebase.anchor_ticks:
            self.timebase.on_sync(ticks, received_ms)
        self._send_response({"status": {
            "synced": 1 if self.timebase.synced else 0,
            "status_flags": self._status_flags(),
            "battery_byte": self.battery_byte(),
            "id": self.badge_id,
            "group": self.group,
            "timestamp": self.timestamp_now().to_value(),
        }})

    def _req_start_generic(self, source: int, config: dict) -> None:
        if self.running.get(source) == config:
            self._send_response({"ack": {"ok": 1}})
            return  # unchanged parameters: ignored
        self.stop_source(source)
        self.start_source(source, config)
        self._send_response({"ack": {"ok": 1}})

    def _req_start_mic(self, body):
        self._sync_from(body["timestamp"])
        self._req_start_generic(ch.SOURCE_MIC, body["config"])

    def _req_start_scan(self, body):
        self._sync_from(body["timestamp"])
        self._req_start_generic(ch.SOURCE_SCAN, body["config"])

    def _req_start_accel(self, body):
        self._sync_from(body["timestamp"])
        self._req_start_generic(ch.SOURCE_ACCEL, body["config"])

    def _req_start_accel_event(self, body):
        self._sync_from(body["timestamp"])
        self._req_start_generic(ch.SOURCE_ACCEL_EVENT, body["config"])

    def _req_start_battery(self, body):
        self._sync_from(body["timestamp"])
        self._req_start_generic(ch.SOURCE_BATTERY, body["config"])

    def _sync_from(self, ts: dict) -> None:
        received_ms = ts["seconds"] * 1000 + ts["ms"]
        ticks = self.current_ticks()
        if not self.timebase.synced or ticks != self.timebase.anchor_ticks:
            self.timebase.on_sync(ticks, received_ms)

    def _req_stop(self, body):
        self.stop_source(body["source"])
        self._send_response({"ack": {"ok": 1}})

    def _req_stream_start(self, body):
        if body["source"] not in ch.ALL_SOURCES:
            raise BadgeError(f"bad source {body['source']}")
        self.streaming.add(body["source"])
        self._send_response({"ack": {"ok": 1}})

    def _req_stream_stop(self, body):
        self.streaming.discard(body["source"])
        self._send_response({"ack": {"ok": 1}})

    def _req_data(self, body):
        source = body["source"]
        if source not in ch.ALL_SOURCES:
            raise BadgeError(f"bad source {source}")
        since = ch.Timestamp(body["since"]["seconds"], body["since"]["ms"])
        field = _RESPONSE_FIELD_BY_SOURCE[source]
        for value in self.query_since(source, since):
            self._send_response({field: value})
        self._send_response({"data_end": {"source": source}})

    def _req_restart(self, body):
        if body["magic"] != protocol.RESTART_MAGIC:
            raise BadgeError("bad restart magic")
        self.restart()
        self._send_response({"ack": {"ok": 1}})

    def _req_identify(self, body):
        self._send_response({"ack": {"ok": 1}})

    def _req_selftest(self, body):
        self._send_response({"ack": {"ok": 1}})

    def restart(self) -> None:
        """Volatile state reset, as after a watchdog reboot."""
        for src in list(self.running):
            self.stop_source(src)
        self.streaming.clear()
        self.timebase = Timebase()
        self._mic_chunk = None
        self.chunk_fifo = ChunkFifo(CHUNK_FIFO_SLOTS)
        for p in self.partitions.values():
            p.recover()

    # -- battery ----------------------------------------------------------

    def battery_byte(self) -> int:
        if self.battery_volts is None:
            return 0
        return ch.battery_encode(self.battery_volts)

    # -- advertising --------------------------------------------------------

    def build_advertising_packet(self) -> bytes:
        pkt = DEVICE_NAME
        pkt += struct.pack("<H", self.badge_id)
        pkt += struct.pack("<B", self.group)
        pkt += self.mac
        pkt += struct.pack("<B", self.battery_byte())
        pkt += struct.pack("<B", self._status_flags())
        return pkt

    def _advertise_tick(self) -> None:
        pkt = self.build_advertising_packet()
        self.advertising_log.append(pkt)
        if len(self.advertising_log) > 512:
            del self.advertising_log[:256]
        if self.on_advertise is not None:
            self.on_advertise(pkt)

    # -- sampling pipelines ---------------------------------------------

    def start_source(self, source: int, config: dict | None = None) -> None:
        if source not in ch.ALL_SOURCES:
            raise BadgeError(f"bad source {source}")
        if source in self.running:
            self.stop_source(source)
        config = dict(config or DEFAULT_CONFIGS[source])
        if source == ch.SOURCE_MIC:
            period = config["avg_period_ms"] * MS
            timer = Timer(self.loop, period, self._mic_tick, config)
        elif source == ch.SOURCE_SCAN:
            if not (config["window_ms"] <= config["interval_ms"]
                    <= config["duration_s"] * 1000
                    <= config["period_s"] * 1000):
                raise BadgeError("scan config violates window<=interval<=duration<=period")
            timer = Timer(self.loop, config["period_s"] * NS,
                          self._scan_tick, config)
        elif source == ch.SOURCE_ACCEL:
            if config["datarate_hz"] not in (1, 10, 25, 50, 100, 200, 400):
                raise BadgeError(f"bad accel datarate {config['datarate_hz']}")
            timer = Timer(self.loop, config["fifo_read_period_ms"] * MS,
                          self._accel_tick, config)
        elif source == ch.SOURCE_ACCEL_EVENT:
            timer = Timer(self.loop, 100 * MS, self._accel_event_tick, config)
        else:
            timer = Timer(self.loop, config["read_period_s"] * NS,
                          self._battery_tick, config)
        self.running[source] = config
        self._timers[source] = timer
        timer.start()

    def stop_source(self, source: int) -> None:
        timer = self._timers.pop(source, None)
        if timer is not None:
            timer.stop()
        self.running.pop(source, None)
        if source == ch.SOURCE_MIC and self._mic_chunk is not None:
            self._close_mic_chunk()

    def _stream_point(self, source: int, value: int) -> None:
        if source in self.streaming and self.link is not None and self.link.connected:
            self._send_response({"stream_point": {
                "source": source,
                "timestamp": self.timestamp_now().to_value(),
                "value": value & 0xFFFF,
            }})

    def _mic_tick(self, config: dict) -> None:
        period_ms = config["avg_period_ms"]
        n = max(1, round(MIC_SAMPLE_HZ * period_ms / 1000))
        t0 = self.loop.now_ns - period_ms * MS
        step = period_ms * MS // n
        src = self.sample_sources["mic"]
        window = [src(t0 + i * step) for i in range(n)]
        point = ch.mic_average(window)
        if self._mic_chunk is None:
            slot = self.chunk_fifo.open_write()
            slot.value = ch.MicrophoneChunk(self.timestamp_now(), period_ms, [])
            slot.value._source = ch.SOURCE_MIC
            self._mic_chunk = slot
        self._mic_chunk.value.data.append(point)
        self._stream_point(ch.SOURCE_MIC, point)
        if len(self._mic_chunk.value.data) >= ch.MIC_CHUNK_POINTS:
            self._close_mic_chunk()

    def _close_mic_chunk(self) -> None:
        slot = self._mic_chunk
        self._mic_chunk = None
        if slot is None or not slot.value.data:
            if slot is not None:
                self.chunk_fifo.abandon_write(slot)
            return
        self.chunk_fifo.finalize_write(slot)
        self.counters["chunks_closed"] += 1
        self._schedule_store()

    def _scan_tick(self, config: dict) -> None:
        obs = self.sample_sources["scan"](self.loop.now_ns)
        agg = "max" if config["aggregation"] == 1 else "avg"
        devices = ch.scan_aggregate_and_sort(list(obs), agg)
        self._enqueue_chunk(ch.SOURCE_SCAN,
                            ch.ScanChunk(self.timestamp_now(), devices))
        self._stream_point(ch.SOURCE_SCAN, len(devices))

    def _accel_tick(self, config: dict) -> None:
        mag = int(self.sample_sources["accel"](self.loop.now_ns)) & 0xFFFF
        self._accel_buf.append(mag)
        self._stream_point(ch.SOURCE_ACCEL, mag)
        if len(self._accel_buf) >= 100:
            self._enqueue_chunk(ch.SOURCE_ACCEL,
                                ch.AccelChunk(self.timestamp_now(),
                                              self._accel_buf[:100]))
            self._accel_buf = self._accel_buf[100:]

    def _accel_event_tick(self, config: dict) -> None:
        if self.loop.now_ns < self._accel_event_dead_until:
            return
        if self.sample_sources["accel_event"](self.loop.now_ns):
            self._accel_event_dead_until = (
                self.loop.now_ns + config["dead_time_ms"] * MS)
            self._enqueue_chunk(ch.SOURCE_ACCEL_EVENT,
                                ch.AccelEvent(self.timestamp_now()))
            self._stream_point(ch.SOURCE_ACCEL_EVENT, 1)

    def _battery_tick(self, config: dict) -> None:
        adc = self.sample_sources["battery"](self.loop.now_ns)
        volts = ch.battery_from_adc(adc)
        self.battery_volts = ch.battery_ewma(self.battery_volts, volts,
                                             BATTERY_EWMA_ALPHA)
        self._enqueue_chunk(ch.SOURCE_BATTERY,
                            ch.BatteryChunk(self.timestamp_now(),
                                            self.battery_volts))
        self._stream_point(ch.SOURCE_BATTERY, self.battery_byte())

    def _enqueue_chunk(self, source: int, chunk) -> None:
        slot = self.chunk_fifo.open_write()
        chunk._source = source
        slot.value = chunk
        self.chunk_fifo.finalize_write(slot)
        self.counters["chunks_closed"] += 1
        self._schedule_store()

    # -- storer ------------------------------------------------------------

    def _schedule_store(self) -> None:
        if self._store_scheduled:
            return
        self._store_scheduled = True
        self.loop.schedule(self._store_step)

    def _store_step(self) -> None:
        self._store_scheduled = False
        slot = self.chunk_fifo.open_read()
        if slot is None:
            return
        chunk = slot.value
        try:
            self.store_chunk(chunk._source, chunk)
        except PowerLoss:
            self.counters["store_errors"] += 1
            self.counters["restarts"] = self.counters.get("restarts", 0) + 1
            self.restart()  # a power cut reboots the badge
            return
        except StorageError:
            self.counters["store_errors"] += 1
        finally:
            self.chunk_fifo.release(slot)
        if self.chunk_fifo.pending:
            self._schedule_store()

    def store_chunk(self, source: int, chunk) -> None:
        name, _cls = ch.CHUNK_MESSAGE_BY_SOURCE[source]
        payload = protocol.encode_message(name, chunk.to_value())
        self.partitions[source].store_element(payload)
        self.counters["chunks_stored"] += 1

    def query_since(self, source: int, since: ch.Timestamp):
        """Decoded chunk values for `source` with timestamp >= since, oldest
        first. Walks backward from the newest element to find the oldest
        qualifying chunk, then streams forward."""
        name, _cls = ch.CHUNK_MESSAGE_BY_SOURCE[source]
        partition = self.partitions[source]
        try:
            it = partition.iterator_latest()
        except EmptyPartition:
            return []
        since_ms = since.to_unix_ms()
        collected = []
        while True:
            try:
                value = protocol.decode_message(name, it.read())
                ts = value["timestamp"]
                if ts["seconds"] * 1000 + ts["ms"] < since_ms:
                    break
                collected.append(value)
            except (CorruptElement, CodecError):
                self.counters["corrupted_skipped"] += 1
            try:
                it.prev()
            except BeginReached:
                break
        collected.reverse()
        return collected
