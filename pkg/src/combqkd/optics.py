"""Passive optical elements acting on photon streams.

Every element is a pure transformer given a numpy Generator. Survival is
decided independently per photon except inside the Franson interferometer,
where the two photons of a pair are routed jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import LEAK, PhotonStream, merge

FIBER_LOSS_DB_PER_KM = 0.2
# Group delay of standard single-mode fibre, group index about 1.468.
FIBER_DELAY_PS_PER_KM = 4.9e6
DEFAULT_TAU_PS = 2000


def transmission(db: float) -> float:
    if db < 0:
        raise ValueError(f"loss must be non-negative, got {db} dB")
    return 10.0 ** (-db / 10.0)


def attenuate(stream: PhotonStream, db: float, rng: np.random.Generator) -> PhotonStream:
    """Keep each photon with probability 10^(-db/10)."""
    p = transmission(db)
    if p == 1.0 or len(stream) == 0:
        return stream
    return stream.select(rng.random(len(stream)) < p)


def delay(stream: PhotonStream, delay_ps: int) -> PhotonStream:
    if delay_ps < 0:
        raise ValueError("delays must be non-negative")
    return stream.shifted(int(delay_ps))


def fiber(stream: PhotonStream, km: float, rng: np.random.Generator,
          loss_db_per_km: float = FIBER_LOSS_DB_PER_KM,
          delay_ps_per_km: float = FIBER_DELAY_PS_PER_KM) -> PhotonStream:
    """Propagate through ``km`` of fibre: loss, then a fixed group delay."""
    if km < 0:
        raise ValueError("fibre length must be non-negative")
    if km == 0:
        return stream
    out = attenuate(stream, loss_db_per_km * km, rng)
    return delay(out, int(round(km * delay_ps_per_km)))


def fiber_loss_db(km: float, loss_db_per_km: float = FIBER_LOSS_DB_PER_KM) -> float:
    return km * loss_db_per_km


def equivalent_fiber_km(db: float, loss_db_per_km: float = FIBER_LOSS_DB_PER_KM) -> float:
    return db / loss_db_per_km


def beamsplit(stream: PhotonStream, ratio: float,
              rng: np.random.Generator) -> tuple[PhotonStream, PhotonStream]:
    """Route each photon to output A with probability ``ratio``, else to B."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("splitter ratio must lie strictly between 0 and 1")
    to_a = rng.random(len(stream)) < ratio
    return stream.select(to_a), stream.select(~to_a)


@dataclass
class DemuxResult:
    channels: dict[str, PhotonStream]
    unrouted: int = 0


def dwdm_demux(stream: PhotonStream, channel_map: dict, insertion_db: float,
               rng: np.random.Generator,
               leak_extinction_db: dict[str, float] | None = None) -> DemuxResult:
    """Split a stream into named wavelength channels.

    ``channel_map`` maps ``(mode_id, member)`` to a channel name. Routed
    photons pay the insertion loss. Residual pump photons (member LEAK) land
    in channel ``c`` with probability 10^(-extinction_c/10) and are dropped
    otherwise. Photons with no mapping are dropped and counted.
    """
    p_pass = transmission(insertion_db)
    names = sorted(set(channel_map.values()))
    out = {}
    routed = np.zeros(len(stream), bool)
    for name in names:
        keys = [k for k, v in channel_map.items() if v == name]
        m = np.zeros(len(stream), bool)
        for mode, member in keys:
            m |= (stream.mode == mode) & (stream.member == member)
        routed |= m
        out[name] = stream.select(m)
    is_leak = stream.member == LEAK
    unrouted = int(np.count_nonzero(~routed & ~is_leak))
    if p_pass < 1.0:
        out = {k: attenuate(v, insertion_db, rng) for k, v in out.items()}
    if leak_extinction_db and is_leak.any():
        leak = stream.select(is_leak)
        probs = np.array([transmission(leak_extinction_db.get(n, np.inf)) for n in names])
        if probs.sum() > 1.0:
            raise ValueError("channel leak probabilities exceed one")
        edges = np.cumsum(probs)
        u = rng.random(len(leak))
        slot = np.searchsorted(edges, u, side="right")
        for j, name in enumerate(names):
            hit = leak.select(slot == j)
            if len(hit):
                out[name] = merge(out[name], hit)
    return DemuxResult(out, unrouted)


@dataclass(frozen=True)
class FransonConfig:
    """Unbalanced interferometer pair settings.

    ``phase`` is the combined signal+idler phase. Only balanced 50/50
    couplers are modelled.
    """

    tau_ps: int = DEFAULT_TAU_PS
    phase: float = 0.0
    intrinsic_visibility: float = 0.91
    splitter_ratio: float = 0.5

    def __post_init__(self):
        if self.tau_ps <= 0:
            raise ValueError("interferometer delay must be positive")
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise ValueError("intrinsic visibility must lie in [0, 1]")
        if self.splitter_ratio != 0.5:
            raise ValueError("only 50/50 couplers are supported")


LOST, SHORT, LONG = 0, 1, 2


def franson_joint_table(visibility: float, phase: float) -> np.ndarray:
    """3x3 joint probabilities over (signal, idler) in {lost, short, long}.

    Each photon leaves the monitored output port with probability 1/2 and
    picks either arm with probability 1/4, independent of phase. Only the
    same-arm outcomes (short-short, long-long) interfere, giving side bins
    of 1/16 each and a central bin of (1 + V cos phase)/8.
    """
    vc = visibility * np.cos(phase)
    same = (1.0 + vc) / 16.0
    cross = 1.0 / 16.0
    one_lost = 1.0 / 8.0 - vc / 16.0
    both_lost = 1.0 / 4.0 + vc / 8.0
    table = np.array([
        [both_lost, one_lost, one_lost],
        [one_lost, same, cross],
        [one_lost, cross, same],
    ])
    return table


def franson_pair(signal: PhotonStream, idler: PhotonStream, cfg: FransonConfig,
                 rng: np.random.Generator) -> tuple[PhotonStream, PhotonStream]:
    """Pass signal and idler through their interferometers.

    Photons whose partner is present are routed jointly from
    ``franson_joint_table``; everything else (leak, dark, orphaned photons)
    chooses its port and arm independently.
    """
    tau = np.int64(cfg.tau_ps)
    s_ids = np.where(signal.pair >= 0, signal.pair, -1)
    i_ids = np.where(idler.pair >= 0, idler.pair, -1)
    _, s_idx, i_idx = np.intersect1d(s_ids[s_ids >= 0], i_ids[i_ids >= 0],
                                     assume_unique=True, return_indices=True)
    s_pos = np.flatnonzero(s_ids >= 0)[s_idx]
    i_pos = np.flatnonzero(i_ids >= 0)[i_idx]

    s_state = _independent_arms(len(signal), rng)
    i_state = _independent_arms(len(idler), rng)
    if len(s_pos):
        table = franson_joint_table(cfg.intrinsic_visibility, cfg.phase).ravel()
        cells = rng.choice(9, size=len(s_pos), p=table / table.sum())
        s_state[s_pos] = cells // 3
        i_state[i_pos] = cells % 3
    return _apply_arms(signal, s_state, tau), _apply_arms(idler, i_state, tau)


def _independent_arms(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(3, size=n, p=[0.5, 0.25, 0.25]).astype(np.int8)


def _apply_arms(stream: PhotonStream, state: np.ndarray, tau: np.int64) -> PhotonStream:
    keep = state != LOST
    out = stream.select(keep)
    t = out.t + np.where(state[keep] == LONG, tau, np.int64(0))
    order = np.argsort(t, kind="stable")
    return PhotonStream(t[order], out.pair[order], out.member[order], out.mode[order])


# Path elements -------------------------------------------------------------

@dataclass(frozen=True)
class Attenuator:
    db: float

    def __post_init__(self):
        if self.db < 0:
            raise ValueError("attenuation must be non-negative")

    def apply(self, stream, rng):
        return attenuate(stream, self.db, rng)


@dataclass(frozen=True)
class Fiber:
    km: float
    loss_db_per_km: float = FIBER_LOSS_DB_PER_KM
    delay_ps_per_km: float = FIBER_DELAY_PS_PER_KM

    def __post_init__(self):
        if self.km < 0:
            raise ValueError("fibre length must be non-negative")

    def apply(self, stream, rng):
        return fiber(stream, self.km, rng, self.loss_db_per_km, self.delay_ps_per_km)


@dataclass(frozen=True)
class Dwdm:
    """Single-channel pass-through: keeps mapped photons and leaks pump."""

    passband: frozenset
    insertion_db: float = 3.0
    extinction_db: float = 100.0

    def apply(self, stream, rng):
        cmap = {k: "out" for k in self.passband}
        res = dwdm_demux(stream, cmap, self.insertion_db, rng, {"out": self.extinction_db})
        return res.channels.get("out", PhotonStream.empty())


@dataclass(frozen=True)
class Splitter:
    """Keeps output port A of a splitter with ``ratio`` into A."""

    ratio: float

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("splitter ratio must lie strictly between 0 and 1")

    def apply(self, stream, rng):
        return beamsplit(stream, self.ratio, rng)[0]


@dataclass(frozen=True)
class Delay:
    ps: int

    def apply(self, stream, rng):
        return delay(stream, self.ps)


@dataclass
class OpticalPath:
    elements: list = field(default_factory=list)

    def apply(self, stream: PhotonStream, rng: np.random.Generator) -> PhotonStream:
        for el in self.elements:
            stream = el.apply(stream, rng)
        return stream

    def loss_db(self) -> float:
        """Total deterministic loss of the chain (splitters count their port share)."""
        total = 0.0
        for el in self.elements:
            if isinstance(el, Attenuator):
                total += el.db
            elif isinstance(el, Fiber):
                total += el.km * el.loss_db_per_km
            elif isinstance(el, Dwdm):
                total += el.insertion_db
            elif isinstance(el, Splitter):
                total += -10.0 * np.log10(el.ratio)
        return total
