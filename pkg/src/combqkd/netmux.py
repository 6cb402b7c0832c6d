"""Assign comb mode pairs to user links and total up the key rates."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .model import ArmSetup, LinkSetup, predict_report
from .sift import KeyReport
from .source import ModePair

POLICIES = ("best-rate-first", "round-robin", "max-min")


@dataclass(frozen=True)
class UserLink:
    alice: str
    bob: str
    alice_km: float = 0.0
    bob_km: float = 0.0
    alice_extra_db: float = 0.0
    bob_extra_db: float = 0.0

    def __post_init__(self):
        if min(self.alice_km, self.bob_km, self.alice_extra_db, self.bob_extra_db) < 0:
            raise ValueError(f"link {self.label}: lengths and losses must be non-negative")

    @property
    def label(self) -> str:
        return f"{self.alice}-{self.bob}"


def link_setup(pair: ModePair, link: UserLink, calibration: LinkSetup) -> LinkSetup:
    """The calibration template specialised to one mode pair and one user link."""
    loss = calibration.alice.loss_db_per_km
    return replace(
        calibration, mode_id=pair.id,
        alice=ArmSetup(link.alice_km, 0.0, link.alice_extra_db, loss),
        bob=ArmSetup(link.bob_km, 0.0, link.bob_extra_db, loss),
    )


def predict_link_rate(pair: ModePair, link: UserLink, calibration: LinkSetup) -> KeyReport:
    return predict_report(link_setup(pair, link, calibration))


@dataclass
class Assignment:
    pair: ModePair
    link: UserLink
    report: KeyReport


@dataclass
class Allocation:
    policy: str
    assignments: list[Assignment] = field(default_factory=list)

    @property
    def aggregate_rate(self) -> float:
        return float(sum(a.report.raw_rate for a in self.assignments))

    @property
    def min_rate(self) -> float:
        if not self.assignments:
            return 0.0
        return min(a.report.raw_rate for a in self.assignments)

    def mapping(self) -> dict[int, str]:
        return {a.pair.id: a.link.label for a in self.assignments}


def rate_matrix(mode_pairs, links, calibration: LinkSetup):
    """Predicted reports and raw rates, indexed [pair, link]."""
    reports = [[predict_link_rate(p, lk, calibration) for lk in links] for p in mode_pairs]
    rates = np.array([[r.raw_rate for r in row] for row in reports], float)
    return reports, rates.reshape(len(mode_pairs), len(links))


def _greedy(rates: np.ndarray) -> list[tuple[int, int]]:
    # Pairs and links both sorted by their best predicted rate, then matched
    # in that order; exact for the total when rates factor per pair and link.
    pair_order = np.argsort(-rates.max(axis=1), kind="stable")
    link_order = np.argsort(-rates.max(axis=0), kind="stable")
    return [(int(p), int(lk)) for p, lk in zip(pair_order, link_order)]


def _round_robin(rates: np.ndarray) -> list[tuple[int, int]]:
    return [(i, i) for i in range(rates.shape[1])]


def _bottleneck(rates: np.ndarray) -> list[tuple[int, int]]:
    """Assignment maximising the smallest link rate (exact)."""
    n_pairs, n_links = rates.shape
    levels = np.unique(rates)
    lo, hi = 0, len(levels) - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        ok = csr_matrix((rates >= levels[mid]).astype(np.int8).T)
        match = maximum_bipartite_matching(ok, perm_type="column")
        if np.all(match >= 0):
            best = match
            lo = mid + 1
        else:
            hi = mid - 1
    return [(int(best[k]), k) for k in range(n_links)]


def allocate(mode_pairs, links, policy: str = "best-rate-first",
             calibration: LinkSetup | None = None) -> Allocation:
    """Give each user link its own mode pair."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    mode_pairs = list(mode_pairs)
    links = list(links)
    if len(links) > len(mode_pairs):
        raise ValueError(f"{len(links)} links but only {len(mode_pairs)} mode pairs")
    if not links:
        return Allocation(policy)
    if calibration is None:
        raise ValueError("a calibration is needed to predict link rates")
    reports, rates = rate_matrix(mode_pairs, links, calibration)
    pick = {"best-rate-first": _greedy, "round-robin": _round_robin,
            "max-min": _bottleneck}[policy](rates)
    out = Allocation(policy)
    for p, lk in sorted(pick, key=lambda x: x[1]):
        out.assignments.append(Assignment(mode_pairs[p], links[lk], reports[p][lk]))
    return out


def default_network(n_links: int = 20) -> list[UserLink]:
    """Desk-scale network: one user pair per comb mode pair, no added fibre."""
    return [UserLink(f"A{k}", f"B{k}") for k in range(1, n_links + 1)]


__all__ = ["UserLink", "Assignment", "Allocation", "POLICIES", "allocate",
           "predict_link_rate", "link_setup", "rate_matrix", "default_network"]
