"""Single-photon detector model producing time tags."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .events import DARK, PhotonStream, duration_to_ps, poisson_times


@dataclass(frozen=True)
class DetectorSpec:
    """SNSPD parameters. Times in picoseconds, rates in Hz."""

    efficiency: float = 0.85
    jitter_sigma_ps: float = 35.0
    dark_rate_hz: float = 500.0
    dead_time_ps: int = 50_000
    id: str = "det"

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.jitter_sigma_ps < 0 or self.dark_rate_hz < 0 or self.dead_time_ps < 0:
            raise ValueError("jitter, dark rate and dead time must be non-negative")

    def labelled(self, name: str) -> "DetectorSpec":
        return DetectorSpec(self.efficiency, self.jitter_sigma_ps, self.dark_rate_hz,
                            self.dead_time_ps, name)


@dataclass
class TagStream:
    """Detector clicks. ``truth_pair``/``origin`` are diagnostics only."""

    t: np.ndarray
    detector: str = "det"
    truth_pair: np.ndarray | None = None
    origin: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, np.int64)
        n = len(self.t)
        if self.truth_pair is None:
            self.truth_pair = np.full(n, -1, np.int64)
        if self.origin is None:
            self.origin = np.full(n, -1, np.int8)

    def __len__(self):
        return len(self.t)

    def shifted(self, ps: int) -> "TagStream":
        return TagStream(self.t + np.int64(ps), self.detector, self.truth_pair, self.origin)


@njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.zeros(t.shape[0], np.bool_)
    last = np.int64(-1)
    first = True
    for k in range(t.shape[0]):
        if first or t[k] - last >= dead:
            keep[k] = True
            last = t[k]
            first = False
    return keep


def dead_time_filter(t: np.ndarray, dead_ps: int) -> np.ndarray:
    """Boolean mask of clicks accepted by a non-paralysable dead time."""
    if dead_ps <= 0 or len(t) == 0:
        return np.ones(len(t), bool)
    return _dead_time_mask(np.ascontiguousarray(t, np.int64), np.int64(dead_ps))


def detect(stream: PhotonStream, spec: DetectorSpec, duration_s: float,
           rng: np.random.Generator) -> TagStream:
    """Efficiency, Gaussian jitter, dark counts and dead time, in that order.

    Jittered times are rounded to integer ps and clipped at zero. Clicks
    arriving within ``dead_time_ps`` of the previous accepted click are lost.
    """
    dur = duration_to_ps(duration_s)
    n = len(stream)
    if spec.efficiency < 1.0 and n:
        stream = stream.select(rng.random(n) < spec.efficiency)
    t = stream.t
    if spec.jitter_sigma_ps > 0 and len(t):
        t = t + np.rint(rng.normal(0.0, spec.jitter_sigma_ps, len(t))).astype(np.int64)
        np.maximum(t, 0, out=t)
    pair = stream.pair
    origin = stream.member
    if spec.dark_rate_hz > 0:
        dark = poisson_times(spec.dark_rate_hz, dur, rng)
        t = np.concatenate([t, dark])
        pair = np.concatenate([pair, np.full(len(dark), -1, np.int64)])
        origin = np.concatenate([origin, np.full(len(dark), DARK, np.int8)])
    order = np.argsort(t, kind="stable")
    t, pair, origin = t[order], pair[order], origin[order]
    keep = dead_time_filter(t, spec.dead_time_ps)
    return TagStream(t[keep], spec.id, pair[keep], origin[keep])


def dead_time_throughput(rate_hz: float, dead_ps: float) -> float:
    """Fraction of incident clicks kept by a non-paralysable dead time."""
    return 1.0 / (1.0 + rate_hz * dead_ps * 1e-12)
