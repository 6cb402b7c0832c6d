"""Photon event streams shared by the source, optics and detector stages.

A stream is a set of parallel numpy columns sorted by time. Times are
integer picoseconds held in ``int64``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGNAL = 0
IDLER = 1
LEAK = 2
DARK = 3

MEMBER_NAMES = {SIGNAL: "signal", IDLER: "idler", LEAK: "leak", DARK: "dark"}

PS_PER_S = 10**12
# Largest simulated span that still fits the int64 picosecond timeline.
MAX_DURATION_S = np.iinfo(np.int64).max / PS_PER_S / 2


def duration_to_ps(duration_s: float) -> int:
    """Convert a duration in seconds to integer picoseconds, refusing overflow."""
    if not np.isfinite(duration_s) or duration_s < 0:
        raise ValueError(f"duration must be finite and non-negative, got {duration_s}")
    if duration_s > MAX_DURATION_S:
        raise OverflowError(
            f"duration {duration_s} s exceeds the int64 picosecond timeline "
            f"({MAX_DURATION_S:.3g} s)"
        )
    return int(round(duration_s * PS_PER_S))


@dataclass
class PhotonStream:
    """Column store of photon events.

    ``pair`` links the two members of one emitted pair (-1 for uncorrelated
    light); ``member`` is one of SIGNAL, IDLER, LEAK, DARK; ``mode`` is the
    mode-pair index (0 for light not belonging to a mode pair).
    """

    t: np.ndarray
    pair: np.ndarray
    member: np.ndarray
    mode: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        n = len(self.t)
        self.pair = np.asarray(self.pair, dtype=np.int64)
        self.member = np.asarray(self.member, dtype=np.int8)
        self.mode = np.asarray(self.mode, dtype=np.int16)
        if not (len(self.pair) == len(self.member) == len(self.mode) == n):
            raise ValueError("stream columns must have equal length")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls) -> "PhotonStream":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64),
                   np.empty(0, np.int8), np.empty(0, np.int16))

    @classmethod
    def uncorrelated(cls, t: np.ndarray, member: int, mode: int = 0) -> "PhotonStream":
        n = len(t)
        return cls(t, np.full(n, -1, np.int64), np.full(n, member, np.int8),
                   np.full(n, mode, np.int16))

    def select(self, mask) -> "PhotonStream":
        return PhotonStream(self.t[mask], self.pair[mask], self.member[mask], self.mode[mask])

    def shifted(self, delay_ps: int) -> "PhotonStream":
        return PhotonStream(self.t + np.int64(delay_ps), self.pair, self.member, self.mode)

    def is_sorted(self) -> bool:
        return bool(np.all(self.t[1:] >= self.t[:-1]))

    def equals(self, other: "PhotonStream") -> bool:
        return (np.array_equal(self.t, other.t) and np.array_equal(self.pair, other.pair)
                and np.array_equal(self.member, other.member)
                and np.array_equal(self.mode, other.mode))


def merge(*streams: PhotonStream) -> PhotonStream:
    """Time-ordered union of several streams (stable for equal timestamps)."""
    streams = [s for s in streams if len(s)]
    if not streams:
        return PhotonStream.empty()
    if len(streams) == 1:
        return streams[0]
    t = np.concatenate([s.t for s in streams])
    order = np.argsort(t, kind="stable")
    return PhotonStream(
        t[order],
        np.concatenate([s.pair for s in streams])[order],
        np.concatenate([s.member for s in streams])[order],
        np.concatenate([s.mode for s in streams])[order],
    )


def poisson_times(rate_hz: float, duration_ps: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted event times of a homogeneous Poisson process on [0, duration).

    The count is drawn first and the ordered times come from normalised
    cumulative exponential spacings, which avoids a sort.
    """
    if rate_hz < 0:
        raise ValueError("rate must be non-negative")
    mean = rate_hz * duration_ps / PS_PER_S
    n = int(rng.poisson(mean)) if mean > 0 else 0
    if n == 0:
        return np.empty(0, np.int64)
    gaps = rng.standard_exponential(n + 1)
    cum = np.cumsum(gaps)
    t = np.floor(cum[:-1] * (duration_ps / cum[-1])).astype(np.int64)
    return t
