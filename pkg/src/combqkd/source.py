"""Microring pair source: comb mode table and Poisson pair emission.

Pairs are emitted independently on every signal/idler mode pair at a rate
that grows with the square of the on-chip pump power. Multi-pair events
inside a coincidence window come purely from Poisson clustering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import (IDLER, LEAK, SIGNAL, PhotonStream, duration_to_ps,
                     poisson_times)

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299_792_458.0

PUMP_WAVELENGTH_NM = 1557.0
FSR_THZ = 1.0
PUMP_Q_M = 1.24
# Brightest pair quoted for the device; pairs/s per mW^2 on chip.
PAPER_PGR_HZ_PER_MW2 = 20e9

# Ring geometry, kept for reference only (micrometres).
RING_RADIUS_UM = 13.91
BUS_WIDTH_UM = 0.48
RING_WIDTH_UM = 0.69
COUPLING_GAP_UM = 0.48
FILM_THICKNESS_UM = 0.4

ENERGY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CombMode:
    index: int
    wavelength_nm: float
    loaded_q: float  # millions

    def __post_init__(self):
        if self.loaded_q <= 0:
            raise ValueError(f"loaded Q must be positive (mode {self.index})")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be positive")


@dataclass(frozen=True)
class ModePair:
    """Signal (+m) and idler (-m) resonances plus their calibration."""

    signal: CombMode
    idler: CombMode
    pgr_coefficient: float  # pairs/s per mW^2
    extinction_db: float = 100.0
    intrinsic_visibility: float = 0.91

    def __post_init__(self):
        if self.signal.index == 0 or self.signal.index != -self.idler.index:
            raise ValueError("mode pair must be symmetric about the pump (signal=+m, idler=-m)")
        if self.pgr_coefficient < 0:
            raise ValueError("pair generation coefficient must be non-negative")
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise ValueError("intrinsic visibility must lie in [0, 1]")
        if self.extinction_db < 0:
            raise ValueError("extinction must be non-negative")

    @property
    def id(self) -> int:
        return abs(self.signal.index)

    def energy_mismatch(self, pump_wavelength_nm: float) -> float:
        """Relative violation of 2/lp = 1/ls + 1/li."""
        two_p = 2.0 / pump_wavelength_nm
        return abs(two_p - 1.0 / self.signal.wavelength_nm - 1.0 / self.idler.wavelength_nm) / two_p

    def conserves_energy(self, pump_wavelength_nm: float, tol: float = ENERGY_TOLERANCE) -> bool:
        return self.energy_mismatch(pump_wavelength_nm) <= tol


@dataclass
class CombSource:
    pump_wavelength_nm: float
    pump_power_mw: float
    mode_pairs: list[ModePair]
    rng_seed: int = 0

    def __post_init__(self):
        if self.pump_power_mw < 0:
            raise ValueError("pump power must be non-negative")
        if not self.mode_pairs:
            raise ValueError("a source needs at least one mode pair")
        ids = [p.id for p in self.mode_pairs]
        if len(set(ids)) != len(ids):
            raise ValueError("mode pair indices must be unique")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def pair(self, mode_id: int) -> ModePair:
        for p in self.mode_pairs:
            if p.id == mode_id:
                return p
        raise KeyError(f"no mode pair with index {mode_id}")

    def with_power(self, power_mw: float) -> "CombSource":
        return CombSource(self.pump_wavelength_nm, power_mw, self.mode_pairs, self.rng_seed)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


@dataclass
class PairStream:
    """Emitted pairs, merged over mode pairs and sorted by time."""

    t: np.ndarray
    mode: np.ndarray
    pair_id: np.ndarray = field(default=None)

    def __post_init__(self):
        self.t = np.asarray(self.t, np.int64)
        self.mode = np.asarray(self.mode, np.int16)
        if self.pair_id is None:
            self.pair_id = np.arange(len(self.t), dtype=np.int64)

    def __len__(self):
        return len(self.t)

    def for_mode(self, mode_id: int) -> "PairStream":
        m = self.mode == mode_id
        return PairStream(self.t[m], self.mode[m], self.pair_id[m])

    def to_photons(self) -> tuple[PhotonStream, PhotonStream]:
        """Split each pair into its signal and idler photons."""
        n = len(self.t)
        sig = PhotonStream(self.t, self.pair_id, np.full(n, SIGNAL, np.int8), self.mode)
        idl = PhotonStream(self.t.copy(), self.pair_id.copy(), np.full(n, IDLER, np.int8),
                           self.mode.copy())
        return sig, idl


def mode_wavelength_nm(index: int, pump_wavelength_nm: float = PUMP_WAVELENGTH_NM,
                       fsr_thz: float = FSR_THZ) -> float:
    """Wavelength of the resonance ``index`` free spectral ranges from the pump."""
    nu_p = LIGHT_SPEED / (pump_wavelength_nm * 1e-9)
    nu = nu_p + index * fsr_thz * 1e12
    if nu <= 0:
        raise ValueError(f"mode {index} lies below zero frequency")
    return LIGHT_SPEED / nu * 1e9


def pair_generation_rate(power_mw: float, coeff: float) -> float:
    """Pair rate in Hz for on-chip pump power ``power_mw`` and coefficient in Hz/mW^2."""
    if power_mw < 0 or coeff < 0:
        raise ValueError("pump power and coefficient must be non-negative")
    return coeff * power_mw * power_mw


def photon_flux(power_mw: float, wavelength_nm: float) -> float:
    """Photons per second carried by ``power_mw`` of light at ``wavelength_nm``."""
    if power_mw < 0:
        raise ValueError("power must be non-negative")
    return power_mw * 1e-3 * wavelength_nm * 1e-9 / (PLANCK * LIGHT_SPEED)


def q_scaled_coefficient(q_signal: float, q_idler: float, ref_coeff: float,
                         ref_q_product: float, exponent: float = 1.0) -> float:
    """Scale a reference coefficient by the signal/idler loaded-Q product."""
    return ref_coeff * (q_signal * q_idler / ref_q_product) ** exponent


def build_mode_pairs(entries, pump_wavelength_nm: float = PUMP_WAVELENGTH_NM,
                     fsr_thz: float = FSR_THZ, reference_mode: int = 2,
                     reference_coeff: float | None = None,
                     q_exponent: float = 1.0) -> list[ModePair]:
    """Turn calibration rows into ModePair objects.

    Each row is a mapping with ``index``, ``q_signal_m``, ``q_idler_m`` and
    optionally ``pgr_hz_per_mw2``, ``extinction_db``, ``intrinsic_visibility``.
    Rows without an explicit coefficient are scaled from ``reference_mode``.
    """
    rows = {int(e["index"]): e for e in entries}
    ref = rows.get(reference_mode)
    if reference_coeff is None and ref is not None:
        reference_coeff = ref.get("pgr_hz_per_mw2")
    ref_q = ref["q_signal_m"] * ref["q_idler_m"] if ref is not None else 1.0
    pairs = []
    for m, e in sorted(rows.items()):
        coeff = e.get("pgr_hz_per_mw2")
        if coeff is None:
            if reference_coeff is None:
                raise ValueError(f"mode {m}: no coefficient and no reference to scale from")
            coeff = q_scaled_coefficient(e["q_signal_m"], e["q_idler_m"], reference_coeff,
                                         ref_q, q_exponent)
        sig = CombMode(m, mode_wavelength_nm(m, pump_wavelength_nm, fsr_thz), e["q_signal_m"])
        idl = CombMode(-m, mode_wavelength_nm(-m, pump_wavelength_nm, fsr_thz), e["q_idler_m"])
        kwargs = {}
        if "extinction_db" in e:
            kwargs["extinction_db"] = e["extinction_db"]
        if "intrinsic_visibility" in e:
            kwargs["intrinsic_visibility"] = e["intrinsic_visibility"]
        pairs.append(ModePair(sig, idl, float(coeff), **kwargs))
    return pairs


def _resolve_rng(source: CombSource, rng):
    return source.rng() if rng is None else rng


def emit_pairs(source: CombSource, duration_s: float,
               rng: np.random.Generator | None = None) -> PairStream:
    """Poisson pair emission on every mode pair, merged and time sorted."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    dur = duration_to_ps(duration_s)
    rng = _resolve_rng(source, rng)
    ts, modes = [], []
    for p in source.mode_pairs:
        t = poisson_times(pair_generation_rate(source.pump_power_mw, p.pgr_coefficient), dur, rng)
        ts.append(t)
        modes.append(np.full(len(t), p.id, np.int16))
    t = np.concatenate(ts)
    mode = np.concatenate(modes)
    order = np.argsort(t, kind="stable")
    return PairStream(t[order], mode[order])


def emit_photons(source: CombSource, duration_s: float, mode_id: int,
                 eta_signal: float, eta_idler: float,
                 rng: np.random.Generator | None = None) -> tuple[PhotonStream, PhotonStream]:
    """Signal and idler photons of one mode pair after fixed survival odds.

    Statistically identical to ``emit_pairs`` followed by independent
    attenuation of each arm, but only surviving photons are ever drawn:
    a thinned Poisson process splits into independent Poisson processes
    for "both survive", "signal only" and "idler only".
    """
    for eta in (eta_signal, eta_idler):
        if not 0.0 <= eta <= 1.0:
            raise ValueError("survival probabilities must lie in [0, 1]")
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    dur = duration_to_ps(duration_s)
    rng = _resolve_rng(source, rng)
    rate = pair_generation_rate(source.pump_power_mw, source.pair(mode_id).pgr_coefficient)
    p_both = eta_signal * eta_idler
    p_sig = eta_signal * (1 - eta_idler)
    p_idl = (1 - eta_signal) * eta_idler
    p_any = p_both + p_sig + p_idl
    t = poisson_times(rate * p_any, dur, rng)
    if len(t) == 0:
        return PhotonStream.empty(), PhotonStream.empty()
    u = rng.random(len(t)) * p_any
    has_sig = u < p_both + p_sig
    has_idl = (u < p_both) | (u >= p_both + p_sig)
    pid = np.arange(len(t), dtype=np.int64) + (np.int64(mode_id) << 40)
    n_s, n_i = int(has_sig.sum()), int(has_idl.sum())
    sig = PhotonStream(t[has_sig], pid[has_sig], np.full(n_s, SIGNAL, np.int8),
                       np.full(n_s, mode_id, np.int16))
    idl = PhotonStream(t[has_idl], pid[has_idl], np.full(n_i, IDLER, np.int8),
                       np.full(n_i, mode_id, np.int16))
    return sig, idl


def leak_rate(source: CombSource, extinction_db: float, extra_loss_db: float = 0.0) -> float:
    """Pump photons/s reaching a channel through a filter of given extinction."""
    if extinction_db < 0 or extra_loss_db < 0:
        raise ValueError("extinction and loss must be non-negative")
    if np.isinf(extinction_db):
        return 0.0
    flux = photon_flux(source.pump_power_mw, source.pump_wavelength_nm)
    return flux * 10.0 ** (-(extinction_db + extra_loss_db) / 10.0)


def pump_leak_stream(source: CombSource, extinction_db: float, duration_s: float,
                     rng: np.random.Generator | None = None, extra_loss_db: float = 0.0,
                     mode: int = 0) -> PhotonStream:
    """Poisson stream of residual pump photons leaking through a channel filter.

    ``extinction_db=inf`` yields an empty stream.
    """
    rate = leak_rate(source, extinction_db, extra_loss_db)
    dur = duration_to_ps(duration_s)
    rng = _resolve_rng(source, rng)
    t = poisson_times(rate, dur, rng) if rate > 0 else np.empty(0, np.int64)
    return PhotonStream.uncorrelated(t, LEAK, mode)


DEFAULT_MODE_TABLE = (
    [
        {"index": 1, "q_signal_m": 0.67, "q_idler_m": 0.39, "extinction_db": 100.0,
         "intrinsic_visibility": 0.73},
        {"index": 2, "q_signal_m": 1.05, "q_idler_m": 1.00, "extinction_db": 120.0,
         "intrinsic_visibility": 0.91, "pgr_hz_per_mw2": 18e9},
    ]
    + [{"index": m, "q_signal_m": 1.0, "q_idler_m": 1.0, "extinction_db": 120.0,
        "intrinsic_visibility": 0.91} for m in range(3, 21)]
)


def default_source(power_mw: float = 0.108, seed: int = 0) -> CombSource:
    """Source built from the shipped calibration table (20 mode pairs)."""
    return CombSource(PUMP_WAVELENGTH_NM, power_mw, build_mode_pairs(DEFAULT_MODE_TABLE), seed)


__all__ = [
    "CombMode", "ModePair", "CombSource", "PairStream", "pair_generation_rate",
    "emit_pairs", "emit_photons", "pump_leak_stream", "leak_rate", "photon_flux",
    "mode_wavelength_nm", "build_mode_pairs", "default_source", "DEFAULT_MODE_TABLE",
]
