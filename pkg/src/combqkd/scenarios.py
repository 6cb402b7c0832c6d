"""Figure scenarios: each returns one table of simulated (and predicted) values.

Every sweep point draws from its own generator seeded with ``seed ^ index``
so a point's numbers do not depend on which other points ran or in which
order, and points can be farmed out to worker processes.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .experiment import (franson_counts, simulate_direct, simulate_franson, simulate_heralded,
                         simulate_z)
from .model import (ArmSetup, LinkSetup, ch_crossing_power, predict_direct, predict_franson,
                    predict_z)
from .netmux import UserLink, allocate, link_setup
from .otp import KeyBuffer, error_stats, sample_asset, transfer_schedule, xor_codec
from .sift import CH_LIMIT, KeyReport, security_monitor
from .tagstats import car, heralded_g2, visibility_fit

SCENARIOS = (
    "singles-vs-power", "coincidences-car", "visibility-vs-power", "purity-vs-power",
    "key-vs-power", "key-vs-attenuation", "stability", "deployed-fiber", "encrypt-demo",
    "network-plan",
)

# Photon events one scenario may simulate, shared evenly by its sweep points.
EVENTS_PER_SCENARIO = 10_000_000
CAR_WINDOW_PS = 200


@dataclass
class Table:
    scenario: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, val in self.meta.items():
            buf.write(f"# {key}={_fmt(val)}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [dict(zip(self.columns, [_jsonable(v) for v in r])) for r in self.rows]
        doc = {"meta": {k: _jsonable(v) for k, v in self.meta.items()},
               "columns": self.columns, "rows": rows}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"

    def write(self, out_dir, fmt: str = "csv") -> Path:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown output format {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.scenario}.{fmt}"
        path.write_text(self.to_csv() if fmt == "csv" else self.to_json())
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".8g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(seed ^ index)


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def event_rate(setup: LinkSetup, fraction: float = 1.0) -> float:
    """Photons per second the pipeline will push through both arms (upper bound)."""
    return 2.0 * (setup.pair_rate * setup.arm_prefilter(fraction)
                  + setup.leak_prefilter_rate(fraction))


def budget_duration(setup: LinkSetup, wanted_s: float, fraction: float = 1.0,
                    budget: float = EVENTS_PER_SCENARIO) -> float:
    rate = event_rate(setup, fraction)
    if rate <= 0:
        return wanted_s
    return min(wanted_s, budget / rate)


def _share(cfg: RunConfig, points) -> float:
    return cfg.sweep.max_events / max(len(points), 1)


def _header(cfg: RunConfig, scenario: str, **extra) -> dict:
    meta = {
        "scenario": scenario,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "dark_rate_hz": cfg.detector.dark_rate_hz,
        "window_ps": cfg.link.match_window_ps,
    }
    meta.update(extra)
    return meta


# --- per-point workers (module level so they pickle) -----------------------

def _singles_point(cfg, i, budget, power):
    setup = cfg.link_setup(power)
    dur = budget_duration(setup, cfg.sweep.duration_s, budget=budget)
    run = simulate_direct(setup, dur, point_rng(cfg.seed, i))
    pred = predict_direct(setup)
    return [power, dur, len(run.signal.t) / dur, len(run.idler.t) / dur,
            pred.signal_singles, pred.idler_singles]


def _car_point(cfg, i, budget, mode, power):
    setup = cfg.link_setup(power, mode_id=mode)
    dur = budget_duration(setup, cfg.sweep.duration_s, budget=budget)
    run = simulate_direct(setup, dur, point_rng(cfg.seed, i))
    h = run.histogram(CAR_WINDOW_PS)
    c = car(h, CAR_WINDOW_PS)
    pred = predict_direct(setup, CAR_WINDOW_PS)
    return [mode, power, dur, h.count_at(0) / dur, c, pred.coincidences, pred.car]


def _visibility_point(cfg, i, budget, mode, power):
    setup = cfg.link_setup(power, mode_id=mode)
    n = cfg.sweep.phase_steps
    phases = 2.0 * np.pi * np.arange(n) / n
    dur = budget_duration(setup, cfg.sweep.visibility_duration_s, budget=budget / n)
    rng = point_rng(cfg.seed, i)
    counts, background = [], []
    for ph in phases:
        fc = franson_counts(simulate_franson(setup, float(ph), dur, rng), setup.tau_ps,
                            setup.match_window_ps)
        counts.append(fc.central)
        background.append(fc.background)
    fit = visibility_fit(phases, counts, float(np.mean(background)))
    pred = predict_franson(setup)
    v = min(1.0, max(0.0, fit.v_raw))
    return [mode, power, dur, fit.v_raw, fit.v_corrected, pred.v_raw, security_monitor(v)]


def _purity_point(cfg, i, budget, power):
    setup = cfg.link_setup(power)
    dur = budget_duration(setup, cfg.sweep.g2_duration_s, budget=budget)
    run = simulate_heralded(setup, dur, point_rng(cfg.seed, i))
    g = heralded_g2(run.herald.t, run.b.t, run.c.t, cfg.sweep.g2_window_ps)
    return [power, dur, g.g2, g.purity, g.n_abc, g.n_ab, g.n_ac, g.n_a]


def _key_point(cfg, i, budget, setup: LinkSetup, label, wanted_s):
    dur = budget_duration(setup, wanted_s, setup.basis_split, budget)
    run = simulate_z(setup, dur, point_rng(cfg.seed, i))
    pred = predict_z(setup)
    return [label, dur, run.raw_rate, run.qber, len(run.alice_key), pred.raw_rate, pred.qber]


# --- scenarios ---------------------------------------------------------------

def singles_vs_power(cfg: RunConfig, jobs: int = 1) -> Table:
    powers = cfg.sweep.power_mw
    tasks = [(cfg, i, _share(cfg, powers), p) for i, p in enumerate(powers)]
    cols = ["power_mw", "duration_s", "signal_singles_hz", "idler_singles_hz",
            "predicted_signal_hz", "predicted_idler_hz"]
    return Table("singles-vs-power", cols, _map(_singles_point, tasks, jobs),
                 _header(cfg, "singles-vs-power", mode=cfg.link.mode_id))


def coincidences_car(cfg: RunConfig, jobs: int = 1) -> Table:
    modes = sorted({1, cfg.link.mode_id})
    points = [(m, p) for m in modes for p in cfg.sweep.power_mw]
    tasks = [(cfg, i, _share(cfg, points), m, p) for i, (m, p) in enumerate(points)]
    cols = ["mode", "power_mw", "duration_s", "coincidences_hz", "car",
            "predicted_coincidences_hz", "predicted_car"]
    return Table("coincidences-car", cols, _map(_car_point, tasks, jobs),
                 _header(cfg, "coincidences-car", car_window_ps=CAR_WINDOW_PS))


def visibility_vs_power(cfg: RunConfig, jobs: int = 1) -> Table:
    modes = sorted({1, cfg.link.mode_id})
    points = [(m, p) for m in modes for p in cfg.sweep.power_mw]
    tasks = [(cfg, i, _share(cfg, points), m, p) for i, (m, p) in enumerate(points)]
    cols = ["mode", "power_mw", "duration_s", "v_raw", "v_corrected", "predicted_v_raw",
            "status"]
    meta = _header(cfg, "visibility-vs-power", phase_steps=cfg.sweep.phase_steps)
    for m in modes:
        meta[f"ch_crossing_mode{m}_mw"] = _crossing(cfg.link_setup(mode_id=m))
    return Table("visibility-vs-power", cols, _map(_visibility_point, tasks, jobs), meta)


def _crossing(setup: LinkSetup) -> float:
    lo, hi = 1e-3, 2.0
    v_lo = predict_franson(setup.with_power(lo)).v_raw
    v_hi = predict_franson(setup.with_power(hi)).v_raw
    if (v_lo - CH_LIMIT) * (v_hi - CH_LIMIT) > 0:
        return math.nan
    return ch_crossing_power(setup, lo, hi)


def purity_vs_power(cfg: RunConfig, jobs: int = 1) -> Table:
    powers = cfg.sweep.power_mw
    tasks = [(cfg, i, _share(cfg, powers), p) for i, p in enumerate(powers)]
    cols = ["power_mw", "duration_s", "g2", "purity", "n_abc", "n_ab", "n_ac", "n_a"]
    return Table("purity-vs-power", cols, _map(_purity_point, tasks, jobs),
                 _header(cfg, "purity-vs-power", g2_window_ps=cfg.sweep.g2_window_ps))


_KEY_COLS = ["duration_s", "raw_key_bps", "qber", "n_bits", "predicted_key_bps",
             "predicted_qber"]


def key_vs_power(cfg: RunConfig, jobs: int = 1) -> Table:
    powers = cfg.sweep.power_mw
    tasks = [(cfg, i, _share(cfg, powers), cfg.link_setup(p), p, cfg.sweep.duration_s)
             for i, p in enumerate(powers)]
    return Table("key-vs-power", ["power_mw"] + _KEY_COLS, _map(_key_point, tasks, jobs),
                 _header(cfg, "key-vs-power", mode=cfg.link.mode_id))


def key_vs_attenuation(cfg: RunConfig, jobs: int = 1) -> Table:
    per_km = cfg.link.fiber_loss_db_per_km
    atts = cfg.sweep.attenuation_db
    tasks = [(cfg, i, _share(cfg, atts), cfg.link_setup(alice=ArmSetup(0.0, a, 0.0, per_km)), a,
              cfg.sweep.duration_s)
             for i, a in enumerate(atts)]
    cols = ["attenuation_db"] + _KEY_COLS
    t = Table("key-vs-attenuation", cols, _map(_key_point, tasks, jobs),
              _header(cfg, "key-vs-attenuation", mode=cfg.link.mode_id,
                      power_mw=cfg.source.power_mw))
    t.columns.insert(1, "equivalent_km")
    for r in t.rows:
        r.insert(1, r[0] / per_km if per_km > 0 else math.nan)
    return t


def drift_factor(t_s: float, time_constant_s: float, realign_at_s) -> float:
    """Coupling efficiency relative to freshly aligned, at time t."""
    last = max([0.0] + [r for r in realign_at_s if r <= t_s])
    if time_constant_s <= 0:
        return 1.0
    return math.exp(-(t_s - last) / time_constant_s)


def stability(cfg: RunConfig, jobs: int = 1) -> Table:
    st = cfg.stability
    n = int(round(st.total_s / st.sample_interval_s))
    base = cfg.link_setup()
    tasks = []
    for i in range(n):
        t = (i + 1) * st.sample_interval_s
        scale = drift_factor(t, st.drift_time_constant_s, st.realign_at_s)
        tasks.append((cfg, i, cfg.sweep.max_events / n, replace(base, coupling_scale=scale), t,
                      st.integration_s))
    rows = _map(_key_point, tasks, jobs)
    for r, task in zip(rows, tasks):
        r.insert(1, task[3].coupling_scale)
    cols = ["time_s", "coupling_scale"] + _KEY_COLS
    return Table("stability", cols, rows,
                 _header(cfg, "stability", sample_interval_s=st.sample_interval_s))


def deployed_fiber(cfg: RunConfig, jobs: int = 1) -> Table:
    d = cfg.deployed
    per_km = cfg.link.fiber_loss_db_per_km
    tasks = []
    for i, k in enumerate(d.loops):
        arm = ArmSetup(k * d.loop_km, 0.0, k * d.connector_loss_db_per_loop, per_km)
        tasks.append((cfg, i, _share(cfg, d.loops), cfg.link_setup(mode_id=d.mode_id, alice=arm), k,
                      cfg.sweep.duration_s))
    rows = _map(_key_point, tasks, jobs)
    for r, task in zip(rows, tasks):
        r[1:1] = [task[4] * d.loop_km, task[3].alice.loss_db]
    cols = ["loops", "fiber_km", "arm_loss_db"] + _KEY_COLS
    return Table("deployed-fiber", cols, rows, _header(cfg, "deployed-fiber", mode=d.mode_id))


def collect_key(setup: LinkSetup, n_bits: int, rng, chunk_s: float, max_chunks: int = 10_000):
    """Run the Z link in chunks until both parties hold ``n_bits`` bits."""
    a_parts, b_parts, total, elapsed = [], [], 0, 0.0
    for _ in range(max_chunks):
        if total >= n_bits:
            break
        run = simulate_z(setup, chunk_s, rng)
        a_parts.append(run.alice_key.bits)
        b_parts.append(run.bob_key.bits)
        total += len(run.alice_key)
        elapsed += chunk_s
    else:
        raise RuntimeError(f"collected only {total} of {n_bits} key bits")
    return np.concatenate(a_parts), np.concatenate(b_parts), elapsed


def encrypt_demo(cfg: RunConfig, jobs: int = 1) -> Table:
    e = cfg.encrypt
    per_km = cfg.link.fiber_loss_db_per_km
    setup = cfg.link_setup(e.power_mw, alice=ArmSetup(e.link_km, 0.0, 0.0, per_km))
    asset = sample_asset(e.payload_bytes)
    n_bits = 8 * len(asset)
    chunk = budget_duration(setup, 1.0, setup.basis_split, cfg.sweep.max_events / 10)
    a_bits, b_bits, elapsed = collect_key(setup, n_bits, point_rng(cfg.seed, 0), chunk)
    key_rate = len(a_bits) / elapsed
    qber = float(np.mean(a_bits[:n_bits] != b_bits[:n_bits])) if n_bits else math.nan
    cipher = xor_codec(asset, KeyBuffer(a_bits))
    same = xor_codec(cipher, KeyBuffer(a_bits)) == asset
    received = xor_codec(cipher, KeyBuffer(b_bits))
    stats = error_stats(asset, received)
    cols = ["payload_bytes", "key_bits_used", "simulated_s", "key_rate_bps", "qber",
            "bit_error_fraction", "byte_error_fraction", "identical_key_roundtrip",
            "schedule_s", "schedule_21kB_s"]
    row = [len(asset), n_bits, elapsed, key_rate, qber, stats["bit_error_fraction"],
           stats["byte_error_fraction"], same, transfer_schedule(len(asset), key_rate),
           transfer_schedule(21_000, key_rate)]
    return Table("encrypt-demo", cols, [row],
                 _header(cfg, "encrypt-demo", link_km=e.link_km, power_mw=e.power_mw))


def _validate_link(cfg, i, budget, setup, wanted_s):
    dur = budget_duration(setup, wanted_s, setup.basis_split, budget)
    run = simulate_z(setup, dur, point_rng(cfg.seed, i))
    return run.raw_rate, run.qber, dur


def network_plan(cfg: RunConfig, jobs: int = 1) -> Table:
    net = cfg.network
    links = [UserLink(lk.alice, lk.bob, lk.alice_km, lk.bob_km, lk.alice_extra_db,
                      lk.bob_extra_db) for lk in net.links]
    calibration = cfg.link_setup()
    plan = allocate(calibration.source.mode_pairs, links, net.policy, calibration)
    cols = ["mode", "link", "alice_km", "bob_km", "predicted_key_bps", "predicted_qber",
            "predicted_visibility", "status"]
    rows = []
    for a in plan.assignments:
        r: KeyReport = a.report
        rows.append([a.pair.id, a.link.label, a.link.alice_km, a.link.bob_km, r.raw_rate,
                     r.qber, r.visibility, r.status])
    if net.validate_duration_s > 0:
        share = _share(cfg, plan.assignments)
        tasks = [(cfg, i, share, link_setup(a.pair, a.link, calibration), net.validate_duration_s)
                 for i, a in enumerate(plan.assignments)]
        for row, (rate, q, dur) in zip(rows, _map(_validate_link, tasks, jobs)):
            row += [rate, q, dur]
        cols += ["simulated_key_bps", "simulated_qber", "simulated_s"]
    meta = _header(cfg, "network-plan", policy=net.policy,
                   aggregate_key_bps=plan.aggregate_rate, links=len(links),
                   power_mw=cfg.source.power_mw)
    return Table("network-plan", cols, rows, meta)


_RUNNERS = {
    "singles-vs-power": singles_vs_power,
    "coincidences-car": coincidences_car,
    "visibility-vs-power": visibility_vs_power,
    "purity-vs-power": purity_vs_power,
    "key-vs-power": key_vs_power,
    "key-vs-attenuation": key_vs_attenuation,
    "stability": stability,
    "deployed-fiber": deployed_fiber,
    "encrypt-demo": encrypt_demo,
    "network-plan": network_plan,
}


def run_figure(scenario: str, cfg: RunConfig, jobs: int = 1) -> Table:
    if scenario not in _RUNNERS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {list(SCENARIOS)}")
    return _RUNNERS[scenario](cfg, jobs)


__all__ = ["SCENARIOS", "Table", "run_figure", "point_rng", "budget_duration",
           "drift_factor", "collect_key", "EVENTS_PER_SCENARIO"]
