"""End-to-end: HubSession against a simulated badge behind the socket bridge."""

from badgehub import HubSession, join_timestamp

BASE_MS = 1_700_000_000_000


def test_activate_sync_pull_mic(bridge):
    port = bridge(prestore_mic=5, base_unix_ms=BASE_MS)
    with HubSession(port=port) as hub:
        status = hub.activate(badge_id=17, group=4, now_ms=BASE_MS + 60_000,
                              sources=("mic",))
        assert status["synced"] == 1
        assert status["id"] == 17 and status["group"] == 4

        chunks = hub.pull_data("mic", since_ms=0)
    assert len(chunks) >= 5  # prestored, plus anything recorded since start
    stamps = [join_timestamp(c["timestamp"]) for c in chunks]
    assert stamps == sorted(stamps)
    assert stamps[0] == BASE_MS
    for c in chunks[:5]:
        assert c["sample_period_ms"] == 50
        assert len(c["data"]) == 112
        assert all(0 <= p <= 255 for p in c["data"])


def test_pull_since_filters(bridge):
    port = bridge(prestore_mic=5, base_unix_ms=BASE_MS)
    with HubSession(port=port) as hub:
        hub.status(now_ms=BASE_MS + 60_000)
        chunks = hub.pull_data("mic", since_ms=BASE_MS + 2 * 5600)
    assert [join_timestamp(c["timestamp"]) for c in chunks] == [
        BASE_MS + k * 5600 for k in (2, 3, 4)]


def test_pull_scan_chunks(bridge):
    port = bridge(prestore_scan=3, base_unix_ms=BASE_MS)
    with HubSession(port=port) as hub:
        hub.status(now_ms=BASE_MS)
        chunks = hub.pull_data("scan", since_ms=0)
    assert len(chunks) == 3
    for c in chunks:
        assert len(c["devices"]) <= 29
        for d in c["devices"]:
            assert 0 <= d["id"] < 32768 and -128 <= d["rssi"] <= 0


def test_stream_live_points(bridge):
    port = bridge()
    with HubSession(port=port) as hub:
        hub.activate(badge_id=1, group=0, now_ms=BASE_MS, sources=("mic",))
        points = hub.stream(10, source="mic")
    assert len(points) == 10
    assert all(p["source"] == 0 for p in points)
    stamps = [join_timestamp(p["timestamp"]) for p in points]
    assert stamps == sorted(stamps)
