"""Clock synchronization model: exact slope smoothing with clamping."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from badgesim.timebase import (NOMINAL_HZ, NOMINAL_SLOPE, NotSynced,
                               Timebase, TimebaseError)


def test_first_sync_anchors_nominal_slope():
    tb = Timebase()
    assert not tb.synced
    with pytest.raises(NotSynced):
        tb.now_ms(0)
    assert tb.on_sync(32768, 1_000_000) is None
    assert tb.slope == NOMINAL_SLOPE
    assert tb.now_ms(32768) == 1_000_000
    assert tb.now_ms(32768 + NOMINAL_HZ) == 1_001_000


def test_prediction_error_recorded_before_update():
    tb = Timebase(alpha=Fraction(1, 2))
    tb.on_sync(0, 0)
    # real clock runs fast by 1%: 32768 ticks take only 990.099... ms
    err = tb.on_sync(NOMINAL_HZ, Fraction(100_000, 101))
    assert err == 1000 - Fraction(100_000, 101)  # predicted - received
    assert tb.abs_errors_ms == [abs(err)]


def test_repeat_tick_rejected():
    tb = Timebase()
    tb.on_sync(100, 50)
    with pytest.raises(TimebaseError):
        tb.on_sync(100, 60)


def test_constructor_validation():
    with pytest.raises(TimebaseError):
        Timebase(alpha=Fraction(3, 2))
    with pytest.raises(TimebaseError):
        Timebase(freq_dev_hz=NOMINAL_HZ)


def test_slope_bounds_closed_form():
    tb = Timebase(freq_dev_hz=Fraction(4))
    lo, hi = tb.slope_bounds()
    assert lo == Fraction(1000, 32772)
    assert hi == Fraction(1000, 32764)


def test_alpha_zero_is_constant_slope():
    """With alpha = 0 the slope never moves off nominal."""
    tb = Timebase(alpha=0)
    tb.on_sync(0, 0)
    for k in range(1, 20):
        tb.on_sync(k * 40_000, k * 40_000 * Fraction(1000, 32700))
        assert tb.slope == NOMINAL_SLOPE


def test_ewma_converges_to_clamped_true_slope():
    """Constant drift inside the clamp band: the EWMA slope converges
    geometrically to the true slope (closed-form check)."""
    true_hz = NOMINAL_HZ + 3  # inside the default +/-4 Hz band
    true_slope = Fraction(1000, true_hz)
    alpha = Fraction(1, 10)
    tb = Timebase(alpha=alpha)
    tb.on_sync(0, 0)
    for k in range(1, 50):
        ticks = k * true_hz  # one real second per sync
        tb.on_sync(ticks, k * 1000)
        # closed form: slope_k = true + (1-alpha)^k (nominal - true)
        expected = true_slope + (1 - alpha) ** k * (NOMINAL_SLOPE - true_slope)
        assert tb.slope == expected
    assert abs(tb.slope - true_slope) < abs(NOMINAL_SLOPE - true_slope) / 100


def test_clamp_engages_outside_band():
    """Drift past the configured deviation: raw slope is clamped, so the
    EWMA converges to the band edge, not the raw value."""
    true_hz = NOMINAL_HZ + 10  # outside the 4 Hz band
    alpha = Fraction(1, 2)
    tb = Timebase(alpha=alpha)
    lo, _ = tb.slope_bounds()
    tb.on_sync(0, 0)
    for k in range(1, 60):
        tb.on_sync(k * true_hz, k * 1000)
    assert abs(tb.slope - lo) < Fraction(1, 10**9)
    assert tb.slope >= lo


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(1, 10**6),
                          st.integers(-10**6, 10**6)),
                min_size=2, max_size=40),
       st.fractions(min_value=0, max_value=1))
def test_slope_always_within_bounds_after_two_syncs(steps, alpha):
    """Invariant: after any sync history the smoothed slope stays inside
    the convex hull of {nominal} and the clamp band."""
    tb = Timebase(alpha=alpha)
    ticks, ms = 0, Fraction(0)
    tb.on_sync(ticks, ms)
    lo, hi = tb.slope_bounds()
    for d_ticks, d_ms in steps:
        ticks += d_ticks
        ms += d_ms
        tb.on_sync(ticks, ms)
        assert min(lo, NOMINAL_SLOPE) <= tb.slope <= max(hi, NOMINAL_SLOPE)


def test_mae_and_max_error():
    tb = Timebase(alpha=0)
    with pytest.raises(TimebaseError):
        tb.mae_ms()
    tb.on_sync(0, 0)
    tb.on_sync(32768, 990)   # predicted 1000 -> error 10
    tb.on_sync(65536, 1996)  # predicted 1990 -> error -6 (anchor moved)
    assert tb.abs_errors_ms == [10, 6]
    assert tb.mae_ms() == 8
    assert tb.max_error_ms() == 10
