"""Chunk data types and the sampling math that fills them."""

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from badgesim import chunks as ch


# ------------------------------------------------------------ timestamps


def test_timestamp_roundtrip_and_order():
    t = ch.Timestamp(1_700_000_000, 999)
    assert t.to_unix_ms() == 1_700_000_000_999
    assert ch.Timestamp.from_unix_ms(1_700_000_000_999) == t
    assert ch.Timestamp(1, 999) < ch.Timestamp(2, 0)
    assert ch.Timestamp.from_value(t.to_value()) == t
    with pytest.raises(Exception):
        ch.Timestamp(0, 1000)


# ----------------------------------------------------------- microphone


def test_mic_average_examples():
    # mean absolute deviation from midscale 128, round half to even
    assert ch.mic_average([128, 130, 126]) == 1   # (0+2+2)/3 = 4/3 -> 1
    assert ch.mic_average([128]) == 0
    assert ch.mic_average([0, 255]) == 128        # (128+127)/2 = 127.5 -> 128
    assert ch.mic_average([128, 131]) == 2        # 1.5 rounds to even 2
    assert ch.mic_average([128, 129]) == 0        # 0.5 rounds to even 0
    with pytest.raises(ch.ChunkError):
        ch.mic_average([])


@given(st.lists(st.integers(0, 255), min_size=1, max_size=200))
def test_mic_average_matches_fraction_oracle(window):
    expected = round(Fraction(sum(abs(s - 128) for s in window), len(window)))
    assert ch.mic_average(window) == min(expected, 255)
    assert 0 <= ch.mic_average(window) <= 255


# ----------------------------------------------------------------- scan


def sort_oracle(observations, aggregation):
    """Independent comparator-style oracle for aggregation + ordering."""
    agg = {}
    for dev_id, rssi in observations:
        agg.setdefault(dev_id, []).append(rssi)
    rows = []
    for dev_id, readings in agg.items():
        if aggregation == "max":
            rssi = max(readings)
        else:
            rssi = sum(readings) // len(readings)
        rows.append((dev_id, rssi, min(len(readings), 255)))
    beacons = [r for r in rows if r[0] >= 16000]
    badges = [r for r in rows if r[0] < 16000]
    beacons.sort(key=lambda r: -r[1])
    badges.sort(key=lambda r: -r[1])
    return (beacons + badges)[:29]


@given(st.lists(st.tuples(st.integers(0, 20000), st.integers(-110, 0)),
                max_size=120),
       st.sampled_from(["avg", "max"]))
def test_scan_sort_matches_oracle(observations, aggregation):
    got = ch.scan_aggregate_and_sort(observations, aggregation)
    expected = sort_oracle(observations, aggregation)
    assert [(d.id, d.rssi, d.count) for d in got] == expected
    assert len(got) <= 29


def test_scan_beacons_first_stable():
    obs = [(100, -50), (16001, -90), (200, -40), (16002, -90), (150, -50)]
    got = ch.scan_aggregate_and_sort(obs)
    assert [d.id for d in got] == [16001, 16002, 200, 100, 150]


def test_scan_truncates_to_29():
    obs = [(i, -i) for i in range(1, 60)]
    got = ch.scan_aggregate_and_sort(obs)
    assert len(got) == 29
    assert [d.id for d in got] == list(range(1, 30))


def test_scan_rejects_unknown_aggregation():
    with pytest.raises(ch.ChunkError):
        ch.scan_aggregate_and_sort([], "median")


# -------------------------------------------------------------- battery


def test_battery_conversion_grid():
    # 10-bit ADC of a 1/3 divider against the 1.2 V band gap
    assert ch.battery_from_adc(0) == 0.0
    assert ch.battery_from_adc(1023) == pytest.approx(3.596484375)
    v = ch.battery_from_adc(853)
    assert v == pytest.approx(853 / 1024 * 3.6)


def test_battery_encode_decode_grid():
    assert ch.battery_encode(1.00) == 0
    assert ch.battery_encode(0.50) == 0     # clipped below
    assert ch.battery_encode(2.55) == 155
    assert ch.battery_encode(3.55) == 255
    assert ch.battery_encode(9.99) == 255   # clipped above
    assert ch.battery_decode(155) == pytest.approx(2.55)
    for byte in range(256):
        assert ch.battery_encode(ch.battery_decode(byte)) == byte


def test_battery_ewma():
    assert ch.battery_ewma(None, 3.0, 0.1) == 3.0
    assert ch.battery_ewma(3.0, 2.0, 0.1) == pytest.approx(2.9)
    with pytest.raises(ch.ChunkError):
        ch.battery_ewma(3.0, 2.0, 0.0)


# ------------------------------------------------- chunk value round-trips


def test_chunk_value_roundtrips():
    rng = random.Random(5)
    mic = ch.MicrophoneChunk(ch.Timestamp(10, 1), 50,
                             [rng.randrange(256) for _ in range(112)])
    assert ch.MicrophoneChunk.from_value(mic.to_value()) == mic
    scan = ch.ScanChunk(ch.Timestamp(10, 2),
                        [ch.ScanDevice(1, -40, 3), ch.ScanDevice(2, -60, 1)])
    assert ch.ScanChunk.from_value(scan.to_value()) == scan
    acc = ch.AccelChunk(ch.Timestamp(10, 3), [1, 2, 3])
    assert ch.AccelChunk.from_value(acc.to_value()) == acc
    ev = ch.AccelEvent(ch.Timestamp(10, 4))
    assert ch.AccelEvent.from_value(ev.to_value()) == ev
    bat = ch.BatteryChunk(ch.Timestamp(10, 5), 2.5)
    assert ch.BatteryChunk.from_value(bat.to_value()) == bat


def test_source_to_message_mapping():
    assert ch.CHUNK_MESSAGE_BY_SOURCE[ch.SOURCE_MIC][0] == "MicrophoneChunk"
    assert set(ch.CHUNK_MESSAGE_BY_SOURCE) == set(ch.ALL_SOURCES)
