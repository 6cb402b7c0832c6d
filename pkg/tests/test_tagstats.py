import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from combqkd.events import poisson_times
from combqkd.tagstats import (DegenerateFitError, brute_force_histogram, car,
                              coincidence_histogram, count_coincidences, heralded_g2,
                              visibility_fit)

tag_lists = st.lists(st.integers(0, 50_000), max_size=1000).map(
    lambda x: np.sort(np.asarray(x, np.int64)))


def test_identical_streams_all_in_zero_bin(rng):
    t = np.sort(rng.choice(10**9, 500, replace=False))
    h = coincidence_histogram(t, t, 100, 0)
    assert h.count_at(0) == 500


def test_histogram_matches_brute_force_1000(rng):
    a = np.sort(rng.integers(0, 10**6, 1000))
    b = np.sort(rng.integers(0, 10**6, 1000))
    fast = coincidence_histogram(a, b, 200, 5000)
    slow = brute_force_histogram(a, b, 200, 5000)
    assert np.array_equal(fast.counts, slow.counts)


@given(tag_lists, tag_lists, st.integers(1, 500), st.integers(0, 3000))
def test_histogram_property(a, b, bin_ps, half):
    fast = coincidence_histogram(a, b, bin_ps, half)
    slow = brute_force_histogram(a, b, bin_ps, half)
    assert np.array_equal(fast.counts, slow.counts)


def test_accidental_rate_per_bin(rng):
    r, dur, w = 1e6, 10**12, 1000
    a = poisson_times(r, dur, rng)
    b = poisson_times(r, dur, rng)
    h = coincidence_histogram(a, b, w, 20_000)
    expected = r * r * 1.0 * w * 1e-12
    assert abs(h.counts.mean() - expected) < 5 * math.sqrt(expected / len(h.counts))


def test_car_independent_streams_near_one(rng):
    a = poisson_times(2e6, 10**12, rng)
    b = poisson_times(2e6, 10**12, rng)
    h = coincidence_histogram(a, b, 200, 20_000)
    acc = 4e12 * 200e-12
    assert abs(car(h) - 1.0) < 5 / math.sqrt(acc)


def test_car_infinite_without_accidentals():
    t = np.arange(100, dtype=np.int64) * 10**7
    assert car(coincidence_histogram(t, t, 200, 20_000)) == math.inf


@given(st.integers(0, 10**9))
def test_car_shift_invariant(shift):
    rng = np.random.default_rng(5)
    a = np.sort(rng.integers(0, 10**8, 3000))
    b = np.sort(np.concatenate([a[:1000] + 30, rng.integers(0, 10**8, 2000)]))
    c1 = car(coincidence_histogram(a, b, 200, 20_000))
    c2 = car(coincidence_histogram(a + shift, b + shift, 200, 20_000))
    assert c1 == c2


def test_g2_no_threefolds_is_zero():
    a = np.array([0, 10**6], np.int64)
    b = np.array([0], np.int64)
    c = np.array([10**6], np.int64)
    assert heralded_g2(a, b, c).g2 == 0.0


def test_g2_independent_streams_is_one(rng):
    dur = 10**11
    a, b, c = (poisson_times(r, dur, rng) for r in (4e6, 1e7, 1e7))
    g = heralded_g2(a, b, c, 10_000)
    # relative error is dominated by the threefold count
    assert abs(g.g2 - 1.0) < 5 / math.sqrt(g.n_abc)


def test_g2_symmetric_in_b_and_c(rng):
    a = poisson_times(5e6, 10**12, rng)
    b = np.sort(np.concatenate([a[::3] + 20, poisson_times(2e6, 10**12, rng)]))
    c = np.sort(np.concatenate([a[1::3] - 20, poisson_times(2e6, 10**12, rng)]))
    assert heralded_g2(a, b, c).g2 == heralded_g2(a, c, b).g2


def test_visibility_constant_counts_zero():
    phases = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    assert visibility_fit(phases, np.full(8, 50.0)).v_raw == pytest.approx(0.0, abs=1e-12)


def test_visibility_perfect_sinusoid():
    phases = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    fit = visibility_fit(phases, 100 * (1 + np.cos(phases)))
    assert fit.v_raw == pytest.approx(1.0, abs=1e-6)


def test_visibility_raw_and_corrected_pair():
    # background reproducing 0.749 raw / 0.91 corrected on a 100-count offset
    bg = 100 * (1 - 0.749 / 0.91)
    assert bg == pytest.approx(17.692, abs=1e-3)
    phases = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    fit = visibility_fit(phases, 100 * (1 + 0.749 * np.cos(phases)), bg)
    assert fit.v_raw == pytest.approx(0.749, abs=1e-9)
    assert fit.v_corrected == pytest.approx(0.91, abs=1e-9)


@given(st.floats(10, 1e4), st.floats(0.05, 0.99), st.floats(-3, 3))
def test_visibility_recovers_parameters(a, v, phi0):
    phases = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    counts = a * (1 + v * np.cos(phases + phi0))
    fit = visibility_fit(phases, counts)
    assert fit.offset == pytest.approx(a, rel=1e-3)
    assert fit.amplitude == pytest.approx(a * v, rel=1e-3)
    assert math.cos(fit.phase0 - phi0) == pytest.approx(1.0, abs=1e-6)


def test_visibility_needs_enough_phases():
    with pytest.raises(ValueError):
        visibility_fit([0, 1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        visibility_fit([0, 0.1, 0.2, 0.3], [1, 2, 3, 4])


def test_visibility_degenerate():
    phases = np.array([0.0, 2 * np.pi, 4 * np.pi, 6 * np.pi, np.pi, 3 * np.pi]) + 1e-7
    with pytest.raises((DegenerateFitError, ValueError)):
        visibility_fit(phases, np.ones(6))


def test_visibility_clamp_warns():
    phases = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit = visibility_fit(phases, 10 * (1 + np.cos(phases)), background=15.0)
    assert fit.v_corrected == 1.0 and fit.clamped
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


def test_count_coincidences_inclusive():
    assert count_coincidences([0], [100], -100, 100) == 1
    assert count_coincidences([0], [101], -100, 100) == 0
