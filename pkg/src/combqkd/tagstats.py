"""Correlation statistics over time-tag arrays.

All functions take plain sorted ``int64`` arrays of picosecond tags.
Coincidences count every (a, b) pairing inside the window, not only the
first match.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_WINDOW_PS = 200


class DegenerateFitError(ValueError):
    """Raised when the sinusoid normal equations are singular."""


def _as_sorted(t, name) -> np.ndarray:
    t = np.asarray(getattr(t, "t", t), dtype=np.int64)
    if len(t) > 1 and np.any(t[1:] < t[:-1]):
        raise ValueError(f"{name} tags are not sorted")
    return t


def _window_bounds(a: np.ndarray, b: np.ndarray, lo: int, hi: int):
    start = np.searchsorted(b, a + lo, side="left")
    end = np.searchsorted(b, a + hi, side="right")
    return start, end


def count_coincidences(a, b, lo_ps: int, hi_ps: int) -> int:
    """Number of pairs with lo <= tb - ta <= hi."""
    a = _as_sorted(a, "first")
    b = _as_sorted(b, "second")
    start, end = _window_bounds(a, b, lo_ps, hi_ps)
    return int(np.sum(end - start))


def coincidences_per_tag(a, b, lo_ps: int, hi_ps: int) -> np.ndarray:
    a = _as_sorted(a, "first")
    b = _as_sorted(b, "second")
    start, end = _window_bounds(a, b, lo_ps, hi_ps)
    return end - start


@dataclass
class Histogram:
    """Start-stop histogram of tb - ta.

    Bin ``k`` (k = -K..K) holds delays with floor((d + w//2) / w) == k, so the
    zero bin is centred on zero delay.
    """

    bin_width: int
    origin: int
    counts: np.ndarray
    n_a: int
    n_b: int

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")

    @property
    def half_bins(self) -> int:
        return (len(self.counts) - 1) // 2

    @property
    def centers(self) -> np.ndarray:
        return np.arange(-self.half_bins, self.half_bins + 1, dtype=np.int64) * self.bin_width

    def count_at(self, delay_ps: int) -> int:
        k = (delay_ps + self.bin_width // 2) // self.bin_width
        return int(self.counts[k + self.half_bins])


def _bin_index(d: np.ndarray, bin_ps: int) -> np.ndarray:
    return (d + bin_ps // 2) // bin_ps


def coincidence_histogram(tags_a, tags_b, bin_ps: int, half_range_ps: int) -> Histogram:
    """Histogram of all pairwise delays within +/- ``half_range_ps``.

    Uses a sorted sweep: for each tag in A the matching B tags form a
    contiguous run, so the loop runs over run offsets rather than over tags.
    """
    if bin_ps <= 0:
        raise ValueError("bin width must be positive")
    a = _as_sorted(tags_a, "first")
    b = _as_sorted(tags_b, "second")
    k_max = half_range_ps // bin_ps
    lo = -k_max * bin_ps - bin_ps // 2
    hi = k_max * bin_ps + (bin_ps - bin_ps // 2) - 1
    counts = np.zeros(2 * k_max + 1, np.int64)
    start, end = _window_bounds(a, b, lo, hi)
    width = end - start
    longest = int(width.max()) if len(width) else 0
    for j in range(longest):
        sel = width > j
        d = b[start[sel] + j] - a[sel]
        counts += np.bincount(_bin_index(d, bin_ps) + k_max, minlength=len(counts))
    return Histogram(int(bin_ps), int(lo), counts, len(a), len(b))


def brute_force_histogram(tags_a, tags_b, bin_ps: int, half_range_ps: int) -> Histogram:
    """O(n^2) reference for ``coincidence_histogram``."""
    a = np.asarray(tags_a, np.int64)
    b = np.asarray(tags_b, np.int64)
    k_max = half_range_ps // bin_ps
    counts = np.zeros(2 * k_max + 1, np.int64)
    for ta in a:
        for tb in b:
            k = (int(tb) - int(ta) + bin_ps // 2) // bin_ps
            if -k_max <= k <= k_max:
                counts[k + k_max] += 1
    return Histogram(int(bin_ps), -k_max * bin_ps - bin_ps // 2, counts, len(a), len(b))


def off_peak_mean(hist: Histogram, window_ps: int, offset_ps: int) -> float:
    """Mean counts per ``window_ps`` of delay in the region |d| >= offset."""
    c = hist.centers
    off = np.abs(c) >= offset_ps
    if not off.any():
        raise ValueError("histogram has no off-peak region beyond the offset")
    return float(hist.counts[off].mean()) * _bins_in_window(hist, window_ps)


def _bins_in_window(hist: Histogram, window_ps: int) -> int:
    c = hist.centers
    return int(np.count_nonzero(np.abs(c) <= window_ps / 2 - hist.bin_width / 2 + 1e-9)) or 1


def peak_counts(hist: Histogram, window_ps: int) -> int:
    c = hist.centers
    inside = np.abs(c) <= window_ps / 2 - hist.bin_width / 2 + 1e-9
    if not inside.any():
        inside = c == 0
    return int(hist.counts[inside].sum())


def car(hist: Histogram, window_ps: int = DEFAULT_WINDOW_PS, offset_ps: int = 5000) -> float:
    """Coincidence-to-accidental ratio.

    Peak counts within +/- window/2 over the mean counts of equal-width
    windows at |delay| >= ``offset_ps``. Returns ``inf`` when the off-peak
    region holds no counts and the peak does, ``nan`` when both are empty.
    """
    if window_ps / 2 > hist.half_bins * hist.bin_width + hist.bin_width / 2:
        raise ValueError("window exceeds histogram range")
    peak = peak_counts(hist, window_ps)
    acc = off_peak_mean(hist, window_ps, offset_ps)
    if acc == 0:
        return math.inf if peak > 0 else math.nan
    return peak / acc


@dataclass
class G2Result:
    g2: float
    n_abc: int
    n_a: int
    n_ab: int
    n_ac: int
    defined: bool = True
    trace_delays: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def purity(self) -> float:
        return 1.0 - self.g2


def _threefold(a, b, c, h, shift_c=0) -> int:
    nb = coincidences_per_tag(a, b, -h, h)
    has = nb > 0
    nc = coincidences_per_tag(a[has], c, shift_c - h, shift_c + h)
    return int(np.sum(nb[has] * nc))


def heralded_g2(tags_herald, tags_b, tags_c, window_ps: int = DEFAULT_WINDOW_PS,
                trace_delays=None) -> G2Result:
    """Heralded g2(0) = N_ABC * N_A / (N_AB * N_AC).

    Coincidences fall within +/- window/2 of the herald. ``trace_delays``
    optionally scans the C-detector window away from zero delay; the
    resulting trace shows the anti-bunching dip at zero.
    """
    a = _as_sorted(tags_herald, "herald")
    b = _as_sorted(tags_b, "B")
    c = _as_sorted(tags_c, "C")
    h = window_ps // 2
    n_a = len(a)
    n_ab = count_coincidences(a, b, -h, h)
    n_ac = count_coincidences(a, c, -h, h)
    n_abc = _threefold(a, b, c, h)
    defined = n_ab * n_ac > 0
    g2 = n_abc * n_a / (n_ab * n_ac) if defined else math.nan
    res = G2Result(g2, n_abc, n_a, n_ab, n_ac, defined)
    if trace_delays is not None:
        delays = np.asarray(trace_delays, np.int64)
        vals = []
        for d in delays:
            n_ac_d = count_coincidences(a, c, int(d) - h, int(d) + h)
            n_abc_d = _threefold(a, b, c, h, int(d))
            vals.append(n_abc_d * n_a / (n_ab * n_ac_d) if n_ab * n_ac_d > 0 else math.nan)
        res.trace_delays = delays
        res.trace = np.asarray(vals)
    return res


@dataclass
class VisibilityFit:
    """Least-squares fit of counts = offset + amplitude * cos(phase + phase0)."""

    amplitude: float
    offset: float
    phase0: float
    v_raw: float
    v_corrected: float | None
    residual: float
    background: float | None = None
    clamped: bool = False


def _clamp_unit(v: float) -> tuple[float, bool]:
    if v < 0.0:
        return 0.0, True
    if v > 1.0:
        return 1.0, True
    return v, False


def visibility_fit(phases, counts, background: float | None = None) -> VisibilityFit:
    """Fit a sinusoid to central-bin counts versus interferometer phase.

    ``background`` (accidental counts per point) enables the corrected
    visibility amplitude / (offset - background).
    """
    phi = np.asarray(phases, float)
    y = np.asarray(counts, float)
    if phi.shape != y.shape:
        raise ValueError("phases and counts must have equal length")
    distinct = np.unique(np.round(np.mod(phi, 2 * np.pi), 12))
    if len(distinct) < 4:
        raise ValueError("need at least four distinct phases")
    if np.ptp(phi) < np.pi - 1e-12:
        raise ValueError("phases must span at least pi")
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    normal = design.T @ design
    if np.linalg.cond(normal) > 1e12:
        raise DegenerateFitError("singular normal equations for sinusoid fit")
    coef = np.linalg.solve(normal, design.T @ y)
    offset, cc, ss = coef
    amp = float(np.hypot(cc, ss))
    phase0 = float(np.arctan2(-ss, cc))
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    clamped = False
    if offset <= 0:
        v_raw, clamped = (0.0 if amp == 0 else 1.0), amp != 0
    else:
        v_raw, clamped = _clamp_unit(amp / offset)
    v_corr = None
    if background is not None:
        denom = offset - background
        if denom <= 0:
            v_corr, c2 = 1.0, True
        else:
            v_corr, c2 = _clamp_unit(amp / denom)
        clamped = clamped or c2
    if clamped:
        warnings.warn("visibility fit left [0, 1]; value clamped", RuntimeWarning, stacklevel=2)
    return VisibilityFit(amp, float(offset), phase0, v_raw, v_corr, resid, background, clamped)
