import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from combqkd.detect import DetectorSpec, dead_time_filter, dead_time_throughput, detect
from combqkd.events import DARK, SIGNAL, PhotonStream

IDEAL = DetectorSpec(1.0, 0.0, 0.0, 0)


def photons(t):
    t = np.asarray(t, np.int64)
    n = len(t)
    return PhotonStream(t, np.arange(n), np.full(n, SIGNAL), np.full(n, 2))


def test_ideal_detector_is_identity(rng):
    t = np.sort(rng.integers(0, 10**9, 5000))
    tags = detect(photons(t), IDEAL, 0.001, rng)
    assert np.array_equal(tags.t, t)


def test_dark_count_rate(rng):
    spec = DetectorSpec(1.0, 0.0, 1000.0, 0)
    n = len(detect(PhotonStream.empty(), spec, 100.0, rng))
    assert abs(n - 1e5) < 5 * math.sqrt(1e5)


def test_dead_time_swallows_close_pair(rng):
    spec = DetectorSpec(1.0, 0.0, 0.0, 50_000)
    assert len(detect(photons([1000, 1010]), spec, 1e-6, rng)) == 1


@given(st.lists(st.integers(0, 10**7), max_size=300), st.integers(1, 200_000))
def test_min_spacing_at_least_dead_time(times, dead):
    t = np.sort(np.asarray(times, np.int64))
    kept = t[dead_time_filter(t, dead)]
    assert np.all(np.diff(kept) >= dead)


@given(st.lists(st.integers(0, 10**6), max_size=200), st.integers(0, 50_000))
def test_dead_time_matches_reference_loop(times, dead):
    t = np.sort(np.asarray(times, np.int64))
    keep, last = [], None
    for x in t:
        if last is None or dead <= 0 or x - last >= dead:
            keep.append(True)
            last = x
        else:
            keep.append(False)
    assert np.array_equal(dead_time_filter(t, dead), np.asarray(keep, bool))


def test_jitter_sigma(rng):
    spec = DetectorSpec(1.0, 35.0, 0.0, 0)
    t = np.arange(200_000, dtype=np.int64) * 1_000_000 + 10_000
    tags = detect(photons(t), spec, 0.3, rng)
    err = tags.t - t[tags.truth_pair]
    assert np.std(err) == pytest.approx(35.0, rel=0.05)


def test_dark_counts_uniform(rng):
    spec = DetectorSpec(1.0, 0.0, 20_000.0, 0)
    tags = detect(PhotonStream.empty(), spec, 1.0, rng)
    assert np.all(tags.origin == DARK)
    assert stats.kstest(tags.t / 1e12, "uniform").pvalue > 0.01


def test_efficiency(rng):
    spec = DetectorSpec(0.85, 0.0, 0.0, 0)
    n = 1_000_000
    k = len(detect(photons(np.arange(n) * 10), spec, 1e-3, rng))
    assert abs(k - 0.85 * n) < 5 * math.sqrt(n * 0.85 * 0.15)


def test_throughput_formula_against_simulation(rng):
    rate, dead = 5e6, 50_000
    t = np.sort(rng.integers(0, 10**12, int(rate)))
    kept = dead_time_filter(t, dead).sum()
    assert kept / len(t) == pytest.approx(dead_time_throughput(rate, dead), rel=0.01)


def test_spec_validation():
    with pytest.raises(ValueError):
        DetectorSpec(efficiency=1.2)
    with pytest.raises(ValueError):
        DetectorSpec(dark_rate_hz=-1)
