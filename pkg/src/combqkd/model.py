"""Link description and closed-form rate model.

A link is one comb mode pair: signal photons to Bob, idler photons to
Alice. The closed-form expressions here predict the mean of what the Monte
Carlo pipeline in :mod:`combqkd.experiment` measures, and are what the
network planner uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .detect import DetectorSpec, dead_time_throughput
from .optics import FIBER_LOSS_DB_PER_KM, transmission
from .source import CombSource, leak_rate, pair_generation_rate
from .sift import CH_LIMIT, KeyReport, bisect

FACET_LOSS_DB = 3.5
DWDM_INSERTION_DB = 3.0
DETECTOR_EFFICIENCY = 0.85
# Detected singles and coincidences quoted for the source; their ratio is the
# end-to-end heralding efficiency of one arm.
ANCHOR_SINGLES_HZ = 2.5e6
ANCHOR_COINCIDENCES_HZ = 30e3


def fitted_collection_loss_db(facet_db: float = FACET_LOSS_DB,
                              dwdm_db: float = DWDM_INSERTION_DB,
                              detector_efficiency: float = DETECTOR_EFFICIENCY,
                              singles_hz: float = ANCHOR_SINGLES_HZ,
                              coincidences_hz: float = ANCHOR_COINCIDENCES_HZ) -> float:
    """Unattributed per-arm loss that makes the anchor ratio come out.

    coincidences / singles equals the other arm's total efficiency; whatever
    the known facet, filter and detector losses do not explain is lumped
    into a chip-side collection loss.
    """
    eta_total = coincidences_hz / singles_hz
    known = transmission(facet_db) * transmission(dwdm_db) * detector_efficiency
    return -10.0 * math.log10(eta_total / known)


COLLECTION_LOSS_DB = fitted_collection_loss_db()


@dataclass(frozen=True)
class ArmSetup:
    """Per-user segment after the demultiplexer."""

    fiber_km: float = 0.0
    attenuation_db: float = 0.0
    extra_loss_db: float = 0.0
    loss_db_per_km: float = FIBER_LOSS_DB_PER_KM

    def __post_init__(self):
        if min(self.fiber_km, self.attenuation_db, self.extra_loss_db) < 0:
            raise ValueError("arm lengths and losses must be non-negative")

    @property
    def loss_db(self) -> float:
        return self.fiber_km * self.loss_db_per_km + self.attenuation_db + self.extra_loss_db


@dataclass(frozen=True)
class LinkSetup:
    source: CombSource
    mode_id: int = 2
    facet_db: float = FACET_LOSS_DB
    collection_db: float = COLLECTION_LOSS_DB
    dwdm_insertion_db: float = DWDM_INSERTION_DB
    basis_split: float = 0.5
    alice: ArmSetup = field(default_factory=ArmSetup)
    bob: ArmSetup = field(default_factory=ArmSetup)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    tau_ps: int = 2000
    match_window_ps: int = 200
    with_leak: bool = True
    coupling_scale: float = 1.0

    @property
    def pair(self):
        return self.source.pair(self.mode_id)

    @property
    def pair_rate(self) -> float:
        return pair_generation_rate(self.source.pump_power_mw, self.pair.pgr_coefficient)

    @property
    def chip_transmission(self) -> float:
        return transmission(self.facet_db + self.collection_db) * self.coupling_scale

    def arm_prefilter(self, fraction: float) -> float:
        """Survival up to and including the basis splitter port."""
        return self.chip_transmission * transmission(self.dwdm_insertion_db) * fraction

    def leak_prefilter_rate(self, fraction: float) -> float:
        if not self.with_leak:
            return 0.0
        return (leak_rate(self.source, self.pair.extinction_db, self.facet_db)
                * self.coupling_scale * fraction)

    def with_power(self, power_mw: float) -> "LinkSetup":
        return replace(self, source=self.source.with_power(power_mw))


def window_capture(setup: LinkSetup, window_ps: int | None = None) -> float:
    """Probability a true pair's delay falls in the inclusive +/- w/2 window."""
    w = setup.match_window_ps if window_ps is None else window_ps
    sigma = math.sqrt(2.0 * setup.detector.jitter_sigma_ps ** 2 + 2.0 / 12.0)
    if sigma == 0:
        return 1.0
    return math.erf((w // 2 + 0.5) / (math.sqrt(2.0) * sigma))


def _effective_window_s(window_ps: int) -> float:
    return (2 * (window_ps // 2) + 1) * 1e-12


@dataclass
class ArmRates:
    incident: float  # photons/s reaching one detector (before efficiency)
    clicks: float  # pre-dead-time click rate
    measured: float  # after dead time
    live: float  # dead-time throughput


def _arm(setup: LinkSetup, photon_rate: float) -> ArmRates:
    d = setup.detector
    clicks = d.efficiency * photon_rate + d.dark_rate_hz
    live = dead_time_throughput(clicks, d.dead_time_ps)
    return ArmRates(photon_rate, clicks, clicks * live, live)


def _arm_efficiencies(setup: LinkSetup, fraction: float):
    eta_b = setup.arm_prefilter(fraction) * transmission(setup.bob.loss_db)
    eta_a = setup.arm_prefilter(fraction) * transmission(setup.alice.loss_db)
    leak_b = setup.leak_prefilter_rate(fraction) * transmission(setup.bob.loss_db)
    leak_a = setup.leak_prefilter_rate(fraction) * transmission(setup.alice.loss_db)
    return eta_a, eta_b, leak_a, leak_b


@dataclass
class ZPrediction:
    raw_rate: float
    qber: float
    true_rate: float
    accidental_rate: float
    alice_singles: float
    bob_singles: float


def predict_z(setup: LinkSetup) -> ZPrediction:
    """Expected sifted-key rate and QBER of the three-detector Z basis."""
    r = setup.pair_rate
    eff = setup.detector.efficiency
    eta_a, eta_b, leak_a, leak_b = _arm_efficiencies(setup, setup.basis_split)
    alice = _arm(setup, r * eta_a + leak_a)
    bob = _arm(setup, (r * eta_b + leak_b) / 2.0)
    mu_a = alice.measured
    mu_b = 2.0 * bob.measured
    w = _effective_window_s(setup.match_window_ps)
    f = window_capture(setup)
    coinc = r * eta_a * eta_b * eff * eff * alice.live * bob.live
    in_window = coinc * f
    no_other_a = math.exp(-2.0 * mu_a * w)
    no_other_b = math.exp(-2.0 * mu_b * w)
    true = in_window * no_other_a * no_other_b
    unpartnered = max(mu_b - in_window, 0.0)
    acc = unpartnered * 2.0 * mu_a * w * no_other_a * no_other_b
    raw = true + acc
    q = 0.5 * acc / raw if raw > 0 else math.nan
    return ZPrediction(raw, q, true, acc, mu_a, mu_b)


@dataclass
class DirectPrediction:
    signal_singles: float
    idler_singles: float
    coincidences: float
    accidentals: float

    @property
    def car(self) -> float:
        if self.accidentals == 0:
            return math.inf
        return (self.coincidences + self.accidentals) / self.accidentals


def predict_direct(setup: LinkSetup, window_ps: int | None = None) -> DirectPrediction:
    """Singles and coincidences with the basis splitters bypassed."""
    w_ps = setup.match_window_ps if window_ps is None else window_ps
    r = setup.pair_rate
    eff = setup.detector.efficiency
    eta_a, eta_b, leak_a, leak_b = _arm_efficiencies(setup, 1.0)
    idler = _arm(setup, r * eta_a + leak_a)
    signal = _arm(setup, r * eta_b + leak_b)
    coinc = r * eta_a * eta_b * eff * eff * idler.live * signal.live * window_capture(setup, w_ps)
    acc = signal.measured * idler.measured * _effective_window_s(w_ps)
    return DirectPrediction(signal.measured, idler.measured, coinc, acc)


@dataclass
class FransonPrediction:
    central_true: float  # phase-averaged
    side_true: float
    accidental: float
    v_raw: float
    v_intrinsic: float


def predict_franson(setup: LinkSetup, fraction: float = 1.0,
                    window_ps: int | None = None) -> FransonPrediction:
    """Central/side bin rates and raw visibility of the interferometer pair."""
    w_ps = setup.match_window_ps if window_ps is None else window_ps
    r = setup.pair_rate
    eff = setup.detector.efficiency
    eta_a, eta_b, leak_a, leak_b = _arm_efficiencies(setup, fraction)
    a = _arm(setup, (r * eta_a + leak_a) / 2.0)
    b = _arm(setup, (r * eta_b + leak_b) / 2.0)
    pairs = r * eta_a * eta_b * eff * eff * a.live * b.live * window_capture(setup, w_ps)
    central = pairs / 8.0
    acc = a.measured * b.measured * _effective_window_s(w_ps)
    v_int = setup.pair.intrinsic_visibility
    v_raw = v_int * central / (central + acc) if central + acc > 0 else 0.0
    return FransonPrediction(central, pairs / 16.0, acc, v_raw, v_int)


def predict_report(setup: LinkSetup) -> KeyReport:
    z = predict_z(setup)
    x = predict_franson(setup, 1.0 - setup.basis_split if setup.basis_split < 1 else 1.0)
    d = predict_direct(setup)
    return KeyReport(z.raw_rate, z.qber, x.v_raw, d.car)


def ch_crossing_power(setup: LinkSetup, lo_mw: float = 1e-3, hi_mw: float = 1.0,
                      fraction: float = 1.0) -> float:
    """Pump power where the predicted raw visibility falls to the CH limit."""
    def excess(p):
        return predict_franson(setup.with_power(p), fraction).v_raw - CH_LIMIT

    return bisect(excess, lo_mw, hi_mw, tol=1e-9)
