"""Monte Carlo pipeline: source -> optics -> detectors -> analysis.

Chip-side and demultiplexer losses and the basis-splitter port choice are
folded into pair emission (:func:`combqkd.source.emit_photons`); everything
downstream (user fibre, attenuators, Bob's splitter and delay line,
interferometers, detectors) runs photon by photon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect import TagStream, detect
from .events import LEAK, PhotonStream, duration_to_ps, merge, poisson_times
from .model import ArmSetup, LinkSetup
from .optics import (Attenuator, Fiber, FransonConfig, OpticalPath, beamsplit, delay,
                     franson_pair)
from .sift import (AliceDual, KeyReport, SiftConfig, SiftedKey, Transcript, alice_channels,
                   bob_z_measure, qber, sift)
from .source import emit_photons
from .tagstats import Histogram, car, coincidence_histogram, off_peak_mean

CAR_OFFSET_PS = 5000
CAR_HALF_RANGE_PS = 20000


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _arm_path(arm: ArmSetup) -> OpticalPath:
    elements = []
    if arm.fiber_km > 0:
        elements.append(Fiber(arm.fiber_km, arm.loss_db_per_km))
    if arm.attenuation_db + arm.extra_loss_db > 0:
        elements.append(Attenuator(arm.attenuation_db + arm.extra_loss_db))
    return OpticalPath(elements)


def _path_delay(path: OpticalPath) -> int:
    return sum(int(round(el.km * el.delay_ps_per_km)) for el in path.elements
               if isinstance(el, Fiber))


def _leak(setup: LinkSetup, fraction: float, dur_ps: int, rng) -> PhotonStream:
    rate = setup.leak_prefilter_rate(fraction)
    t = poisson_times(rate, dur_ps, rng) if rate > 0 else np.empty(0, np.int64)
    return PhotonStream.uncorrelated(t, LEAK, setup.mode_id)


def arm_photons(setup: LinkSetup, fraction: float, duration_s: float, rng):
    """Photons at the end of Bob's (signal) and Alice's (idler) arms.

    Returns (signal, idler, bob_delay_ps, alice_delay_ps).
    """
    eta = setup.arm_prefilter(fraction)
    sig, idl = emit_photons(setup.source, duration_s, setup.mode_id, eta, eta, rng)
    dur = duration_to_ps(duration_s)
    sig = merge(sig, _leak(setup, fraction, dur, rng))
    idl = merge(idl, _leak(setup, fraction, dur, rng))
    bob_path = _arm_path(setup.bob)
    alice_path = _arm_path(setup.alice)
    sig = bob_path.apply(sig, rng)
    idl = alice_path.apply(idl, rng)
    return sig, idl, _path_delay(bob_path), _path_delay(alice_path)


def _align(bob_tags: list[TagStream], alice_tags: list[TagStream], bob_delay: int,
           alice_delay: int):
    """Compensate the fixed fibre delay difference between the arms."""
    diff = alice_delay - bob_delay
    if diff > 0:
        bob_tags = [t.shifted(diff) for t in bob_tags]
    elif diff < 0:
        alice_tags = [t.shifted(-diff) for t in alice_tags]
    return bob_tags, alice_tags


@dataclass
class ZRun:
    alice: TagStream
    bob_short: TagStream
    bob_long: TagStream
    alice_key: SiftedKey
    bob_key: SiftedKey
    transcript: Transcript
    duration_s: float

    @property
    def qber(self) -> float:
        return qber(self.alice_key, self.bob_key)

    @property
    def raw_rate(self) -> float:
        return len(self.alice_key) / self.duration_s

    def car(self, window_ps: int = 200) -> float:
        h = coincidence_histogram(self.alice.t, self.bob_short.t, window_ps, CAR_HALF_RANGE_PS)
        return car(h, window_ps, CAR_OFFSET_PS)

    def report(self, visibility: float = math.nan, window_ps: int = 200) -> KeyReport:
        return KeyReport(self.raw_rate, self.qber, visibility, self.car(window_ps),
                         len(self.alice_key), self.duration_s)


def simulate_z(setup: LinkSetup, duration_s: float, seed_or_rng=0) -> ZRun:
    """Key generation in the Z basis for one link."""
    rng = as_rng(seed_or_rng)
    sig, idl, d_bob, d_alice = arm_photons(setup, setup.basis_split, duration_s, rng)
    short, long_ = beamsplit(sig, 0.5, rng)
    long_ = delay(long_, setup.tau_ps)
    det = setup.detector
    bob0 = detect(short, det.labelled("bob0"), duration_s, rng)
    bob1 = detect(long_, det.labelled("bob1"), duration_s, rng)
    alice = detect(idl, det.labelled("alice"), duration_s, rng)
    (bob0, bob1), (alice,) = _align([bob0, bob1], [alice], d_bob, d_alice)
    cfg = SiftConfig(setup.tau_ps, setup.match_window_ps, setup.basis_split)
    records = bob_z_measure(bob0, bob1)
    dual = alice_channels(alice, setup.tau_ps)
    a_key, b_key, tr = sift(dual, records, cfg)
    return ZRun(alice, bob0, bob1, a_key, b_key, tr, duration_s)


@dataclass
class PairRun:
    signal: TagStream
    idler: TagStream
    duration_s: float

    def histogram(self, bin_ps: int = 200, half_range_ps: int = CAR_HALF_RANGE_PS) -> Histogram:
        return coincidence_histogram(self.idler.t, self.signal.t, bin_ps, half_range_ps)


def simulate_direct(setup: LinkSetup, duration_s: float, seed_or_rng=0) -> PairRun:
    """Signal and idler straight onto one detector each (basis splitters bypassed)."""
    rng = as_rng(seed_or_rng)
    sig, idl, d_bob, d_alice = arm_photons(setup, 1.0, duration_s, rng)
    det = setup.detector
    s = detect(sig, det.labelled("signal"), duration_s, rng)
    i = detect(idl, det.labelled("idler"), duration_s, rng)
    (s,), (i,) = _align([s], [i], d_bob, d_alice)
    return PairRun(s, i, duration_s)


def simulate_franson(setup: LinkSetup, phase: float, duration_s: float, seed_or_rng=0,
                     fraction: float = 1.0) -> PairRun:
    """Both photons through unbalanced interferometers, one detector per side."""
    rng = as_rng(seed_or_rng)
    sig, idl, d_bob, d_alice = arm_photons(setup, fraction, duration_s, rng)
    cfg = FransonConfig(setup.tau_ps, phase, setup.pair.intrinsic_visibility)
    sig, idl = franson_pair(sig, idl, cfg, rng)
    det = setup.detector
    s = detect(sig, det.labelled("bob_x"), duration_s, rng)
    i = detect(idl, det.labelled("alice_x"), duration_s, rng)
    (s,), (i,) = _align([s], [i], d_bob, d_alice)
    return PairRun(s, i, duration_s)


@dataclass
class FransonCounts:
    central: int
    early: int
    late: int
    background: float  # accidental counts per window, from the off-peak region


def franson_counts(run: PairRun, tau_ps: int, window_ps: int = 200,
                   offset_ps: int = CAR_OFFSET_PS) -> FransonCounts:
    if tau_ps % window_ps:
        raise ValueError("tau must be a multiple of the counting window")
    half = max(CAR_HALF_RANGE_PS, offset_ps + 10 * window_ps)
    h = run.histogram(window_ps, half)
    return FransonCounts(h.count_at(0), h.count_at(-tau_ps), h.count_at(tau_ps),
                         off_peak_mean(h, window_ps, max(offset_ps, 2 * tau_ps)))


@dataclass
class HeraldRun:
    herald: TagStream
    b: TagStream
    c: TagStream
    duration_s: float


def simulate_heralded(setup: LinkSetup, duration_s: float, seed_or_rng=0) -> HeraldRun:
    """Signal heralds; idler goes through a 3 dB splitter onto two detectors."""
    rng = as_rng(seed_or_rng)
    sig, idl, d_bob, d_alice = arm_photons(setup, 1.0, duration_s, rng)
    ib, ic = beamsplit(idl, 0.5, rng)
    det = setup.detector
    a = detect(sig, det.labelled("herald"), duration_s, rng)
    b = detect(ib, det.labelled("idler_b"), duration_s, rng)
    c = detect(ic, det.labelled("idler_c"), duration_s, rng)
    (a,), (b, c) = _align([a], [b, c], d_bob, d_alice)
    return HeraldRun(a, b, c, duration_s)


def two_point_visibility(setup: LinkSetup, duration_s: float, seed_or_rng=0,
                         fraction: float = 1.0, window_ps: int = 200) -> float:
    """(C0 - Cpi) / (C0 + Cpi) of the central bin, background included."""
    rng = as_rng(seed_or_rng)
    c0 = franson_counts(simulate_franson(setup, 0.0, duration_s, rng, fraction),
                        setup.tau_ps, window_ps).central
    cpi = franson_counts(simulate_franson(setup, math.pi, duration_s, rng, fraction),
                         setup.tau_ps, window_ps).central
    if c0 + cpi == 0:
        return math.nan
    return (c0 - cpi) / (c0 + cpi)


__all__ = [
    "ZRun", "PairRun", "HeraldRun", "FransonCounts", "simulate_z", "simulate_direct",
    "simulate_franson", "simulate_heralded", "franson_counts", "two_point_visibility",
    "arm_photons", "as_rng", "AliceDual",
]
