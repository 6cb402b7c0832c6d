"""Three-detector asymmetric time-bin sifting.

Bob splits his signal photons onto a short-path detector (bit 0) and a
long-path detector delayed by ``tau`` (bit 1). Alice has a single detector
and duplicates each click into an electronically delayed copy. Bob
announces only his click times; Alice looks for zero-delay coincidences on
either of her channels and returns the indices of Bob's clicks she could
match unambiguously. Both keep one bit per matched click.

Matching rule: a Bob click and an Alice detection are paired when the Bob
click sees exactly one Alice candidate (over both channels) within
+/- match_window/2 and that Alice detection sees exactly one Bob candidate.
Anything else is discarded and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CLASSICAL_LIMIT = 0.5
CH_LIMIT = 1.0 / math.sqrt(2.0)

INSECURE = "insecure"
ABOVE_CLASSICAL = "above-classical"
ABOVE_CH = "above-CH"


@dataclass(frozen=True)
class SiftConfig:
    tau_ps: int = 2000
    match_window_ps: int = 200
    basis_split: float = 0.5
    classical_threshold: float = CLASSICAL_LIMIT
    ch_threshold: float = CH_LIMIT

    def __post_init__(self):
        if self.match_window_ps <= 0:
            raise ValueError("match window must be positive")
        if self.tau_ps <= 2 * self.match_window_ps:
            raise ValueError("tau must exceed twice the match window")
        if not 0.0 < self.basis_split <= 1.0:
            raise ValueError("basis split must lie in (0, 1]")
        if self.classical_threshold != CLASSICAL_LIMIT or self.ch_threshold != CH_LIMIT:
            raise ValueError("security thresholds are fixed constants")

    @property
    def half_window(self) -> int:
        return self.match_window_ps // 2


@dataclass
class BobRecords:
    """Bob's Z-basis clicks. ``bit`` never leaves Bob."""

    t: np.ndarray
    bit: np.ndarray

    def __len__(self):
        return len(self.t)


@dataclass
class AliceDual:
    """Alice's clicks and their tau-delayed copies, tagged 0 and 1."""

    t: np.ndarray
    tau_ps: int

    @property
    def ch0(self) -> np.ndarray:
        return self.t

    @property
    def ch1(self) -> np.ndarray:
        return self.t + np.int64(self.tau_ps)

    def __len__(self):
        return 2 * len(self.t)

    def labelled(self) -> tuple[np.ndarray, np.ndarray]:
        """All channel tags in time order with their channel label."""
        t = np.concatenate([self.ch0, self.ch1])
        ch = np.concatenate([np.zeros(len(self.t), np.int8), np.ones(len(self.t), np.int8)])
        order = np.argsort(t, kind="stable")
        return t[order], ch[order]


@dataclass
class SiftedKey:
    owner: str
    bits: np.ndarray
    times: np.ndarray

    def __len__(self):
        return len(self.bits)


@dataclass
class Transcript:
    """Classical-channel messages. Only times and indices ever appear."""

    messages: list[tuple[str, object]] = field(default_factory=list)
    discarded_ambiguous: int = 0
    discarded_multi: int = 0
    unmatched: int = 0

    def send(self, kind: str, payload) -> None:
        if kind not in ("BASIS", "TIME", "MATCH"):
            raise ValueError(f"unknown message type {kind}")
        self.messages.append((kind, payload))

    def lines(self):
        for kind, payload in self.messages:
            if kind == "TIME":
                for t in payload:
                    yield f"TIME {int(t)}"
            elif kind == "MATCH":
                yield "MATCH " + " ".join(str(int(i)) for i in payload)
            else:
                yield f"BASIS {payload}"

    def serialize(self) -> str:
        return "\n".join(self.lines()) + "\n"

    @staticmethod
    def parse(text: str) -> "Transcript":
        tr = Transcript()
        times: list[int] = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            kind, _, rest = line.partition(" ")
            if kind == "TIME":
                times.append(int(rest))
                continue
            if times:
                tr.send("TIME", np.asarray(times, np.int64))
                times = []
            if kind == "MATCH":
                tr.send("MATCH", np.asarray([int(x) for x in rest.split()], np.int64))
            elif kind == "BASIS":
                tr.send("BASIS", rest.strip())
            else:
                raise ValueError(f"line {n}: unknown message {kind!r}")
        if times:
            tr.send("TIME", np.asarray(times, np.int64))
        return tr


def bob_z_measure(tags_short, tags_long) -> BobRecords:
    """Merge Bob's two Z detectors into time-ordered records (bit = detector)."""
    ts = np.asarray(getattr(tags_short, "t", tags_short), np.int64)
    tl = np.asarray(getattr(tags_long, "t", tags_long), np.int64)
    t = np.concatenate([ts, tl])
    bit = np.concatenate([np.zeros(len(ts), np.int8), np.ones(len(tl), np.int8)])
    order = np.argsort(t, kind="stable")
    return BobRecords(t[order], bit[order])


def alice_channels(idler_tags, tau_ps: int) -> AliceDual:
    t = np.asarray(getattr(idler_tags, "t", idler_tags), np.int64)
    return AliceDual(np.sort(t, kind="stable"), int(tau_ps))


def _candidates(centres: np.ndarray, tags: np.ndarray, h: int):
    lo = np.searchsorted(tags, centres - h, side="left")
    hi = np.searchsorted(tags, centres + h, side="right")
    return lo, hi - lo


class Bob:
    def __init__(self, records: BobRecords):
        self.records = records

    def announce(self, transcript: Transcript) -> None:
        transcript.send("BASIS", "Z")
        transcript.send("TIME", self.records.t.copy())

    def finish(self, transcript: Transcript) -> SiftedKey:
        matched = _last_payload(transcript, "MATCH")
        return SiftedKey("bob", self.records.bit[matched].copy(), self.records.t[matched].copy())


class Alice:
    def __init__(self, dual: AliceDual, cfg: SiftConfig):
        self.dual = dual
        self.cfg = cfg
        self.stats: dict[str, int] = {}

    def respond(self, transcript: Transcript) -> SiftedKey:
        bob_t = _last_payload(transcript, "TIME")
        h = self.cfg.half_window
        a0 = self.dual.ch0
        a1 = self.dual.ch1
        # Bob-side candidate counts on each channel.
        s0, n0 = _candidates(bob_t, a0, h)
        s1, n1 = _candidates(bob_t, a1, h)
        # Alice-side: Bob clicks near each detection, over both channels.
        _, m0 = _candidates(a0, bob_t, h)
        _, m1 = _candidates(a1, bob_t, h)
        alice_load = m0 + m1
        total = n0 + n1
        single = total == 1
        chan = np.where(n0 == 1, 0, 1)
        a_idx = np.where(n0 == 1, s0, s1)
        ok = single.copy()
        ok[single] = alice_load[a_idx[single]] == 1
        matched = np.flatnonzero(ok)
        self.stats = {
            "ambiguous": int(np.count_nonzero((n0 > 0) & (n1 > 0))),
            "multi": int(np.count_nonzero(single & ~ok) + np.count_nonzero(
                (total > 1) & ~((n0 > 0) & (n1 > 0)))),
            "unmatched": int(np.count_nonzero(total == 0)),
        }
        transcript.discarded_ambiguous = self.stats["ambiguous"]
        transcript.discarded_multi = self.stats["multi"]
        transcript.unmatched = self.stats["unmatched"]
        transcript.send("MATCH", matched)
        bits = chan[matched].astype(np.int8)
        return SiftedKey("alice", bits, a0[a_idx[matched]].copy())


def _last_payload(transcript: Transcript, kind: str):
    for k, payload in reversed(transcript.messages):
        if k == kind:
            return payload
    raise ValueError(f"transcript holds no {kind} message")


def sift(alice_dual: AliceDual, bob_records: BobRecords,
         cfg: SiftConfig) -> tuple[SiftedKey, SiftedKey, Transcript]:
    """Run the sifting exchange sequentially."""
    tr = Transcript()
    bob = Bob(bob_records)
    alice = Alice(alice_dual, cfg)
    bob.announce(tr)
    a_key = alice.respond(tr)
    b_key = bob.finish(tr)
    return a_key, b_key, tr


def brute_force_sift(alice_t: np.ndarray, tau_ps: int, bob_t: np.ndarray, bob_bit: np.ndarray,
                     match_window_ps: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All-pairs reference matcher. Returns (bob indices, alice bits, bob bits)."""
    h = match_window_ps // 2
    a = np.asarray(alice_t, np.int64)
    b = np.asarray(bob_t, np.int64)
    c0 = np.abs(b[:, None] - a[None, :]) <= h
    c1 = np.abs(b[:, None] - (a[None, :] + tau_ps)) <= h
    per_bob = c0.sum(1) + c1.sum(1)
    per_alice = c0.sum(0) + c1.sum(0)
    idx, abits = [], []
    for i in range(len(b)):
        if per_bob[i] != 1:
            continue
        j0 = np.flatnonzero(c0[i])
        j = j0[0] if len(j0) else np.flatnonzero(c1[i])[0]
        if per_alice[j] != 1:
            continue
        idx.append(i)
        abits.append(0 if len(j0) else 1)
    idx = np.asarray(idx, np.int64)
    return idx, np.asarray(abits, np.int8), np.asarray(bob_bit, np.int8)[idx]


def qber(alice_key, bob_key) -> float:
    a = np.asarray(getattr(alice_key, "bits", alice_key))
    b = np.asarray(getattr(bob_key, "bits", bob_key))
    if len(a) != len(b):
        raise ValueError("keys differ in length")
    if len(a) == 0:
        return math.nan
    return float(np.count_nonzero(a != b)) / len(a)


def binary_entropy(x):
    """H(x) in bits, with H(0) = H(1) = 0."""
    arr = np.asarray(x, float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("binary entropy is defined on [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1 - arr) * np.log2(1 - arr)
    h = np.where((arr == 0) | (arr == 1), 0.0, h)
    return float(h) if np.ndim(h) == 0 else h


def shannon_fraction(x):
    """max(0, 1 - 2 H(x))."""
    f = np.maximum(0.0, 1.0 - 2.0 * np.asarray(binary_entropy(x)))
    return float(f) if np.ndim(f) == 0 else f


def bisect(fn, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of ``fn`` on [lo, hi] by bisection; endpoints must bracket a sign change."""
    f_lo = fn(lo)
    f_hi = fn(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError("interval does not bracket a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid == 0 or hi - lo < tol:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shannon_limit_qber(tol: float = 1e-12) -> float:
    """Error rate at which 1 - 2H(x) reaches zero."""
    return bisect(lambda x: 1.0 - 2.0 * binary_entropy(x), 1e-6, 0.5, tol)


def security_monitor(visibility: float) -> str:
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if visibility > CH_LIMIT:
        return ABOVE_CH
    if visibility > CLASSICAL_LIMIT:
        return ABOVE_CLASSICAL
    return INSECURE


@dataclass
class KeyReport:
    raw_rate: float
    qber: float
    visibility: float = math.nan
    car: float = math.nan
    n_bits: int = 0
    duration_s: float = 0.0

    @property
    def shannon_fraction(self) -> float:
        if math.isnan(self.qber):
            return 0.0
        return shannon_fraction(self.qber)

    @property
    def status(self) -> str:
        if math.isnan(self.visibility):
            return "unmonitored"
        return security_monitor(min(1.0, max(0.0, self.visibility)))

    @property
    def secure(self) -> bool:
        return self.status == ABOVE_CH

    @property
    def secure_rate(self) -> float:
        return self.raw_rate * self.shannon_fraction if self.secure else 0.0
