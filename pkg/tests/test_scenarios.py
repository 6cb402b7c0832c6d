import json
from dataclasses import replace

import numpy as np
import pytest

from combqkd.config import RunConfig
from combqkd.scenarios import (SCENARIOS, Table, budget_duration, drift_factor, event_rate,
                               run_figure)

pytestmark = pytest.mark.filterwarnings("ignore:visibility fit left")

SMALL = replace(RunConfig(seed=7), sweep=replace(RunConfig().sweep, max_events=1_000_000))


@pytest.fixture(scope="module")
def tables():
    return {s: run_figure(s, SMALL) for s in SCENARIOS}


def test_unknown_scenario():
    with pytest.raises(ValueError):
        run_figure("fig9", SMALL)


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_header_records_provenance(tables, scenario):
    t = tables[scenario]
    assert t.meta["config_sha256"] == SMALL.sha256()
    assert t.meta["seed"] == 7
    assert t.meta["dark_rate_hz"] == 500.0 and t.meta["window_ps"] == 200
    csv = t.to_csv().splitlines()
    assert csv[0] == f"# scenario={scenario}"
    assert csv[len(t.meta)] == ",".join(t.columns)
    assert len(csv) == len(t.meta) + 1 + len(t.rows)


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_json_round_trip(tables, scenario):
    doc = json.loads(tables[scenario].to_json())
    assert doc["columns"] == tables[scenario].columns
    assert len(doc["rows"]) == len(tables[scenario].rows)


def test_write_names_file_after_scenario(tables, tmp_path):
    path = tables["stability"].write(tmp_path, "json")
    assert path.name == "stability.json" and path.exists()
    with pytest.raises(ValueError):
        tables["stability"].write(tmp_path, "xml")


def test_stability_has_500_rows(tables):
    t = tables["stability"]
    assert len(t.rows) == 500
    assert t.column("time_s")[-1] == pytest.approx(10_000.0)


def test_stability_realignment_restores_coupling(tables):
    t = tables["stability"]
    scale = dict(zip(t.column("time_s"), t.column("coupling_scale")))
    assert scale[4980.0] < scale[5000.0] == 1.0
    assert drift_factor(100.0, 0.0, []) == 1.0


def test_attenuation_prediction_monotone(tables):
    t = tables["key-vs-attenuation"]
    assert np.all(np.diff(t.column("predicted_key_bps")) <= 0)
    assert t.column("equivalent_km") == [a / 0.2 for a in t.column("attenuation_db")]


def test_deployed_rate_falls_with_loops(tables):
    t = tables["deployed-fiber"]
    assert np.all(np.diff(t.column("predicted_key_bps")) < 0)
    assert t.column("fiber_km")[0] == pytest.approx(2.05)


def test_singles_follow_prediction(tables):
    t = tables["singles-vs-power"]
    for meas, pred, dur in zip(t.column("signal_singles_hz"), t.column("predicted_signal_hz"),
                               t.column("duration_s")):
        assert abs(meas - pred) * dur < 5 * np.sqrt(pred * dur) + 0.01 * pred * dur


def test_network_plan_twenty_links(tables):
    t = tables["network-plan"]
    assert len(t.rows) == 20
    assert t.meta["aggregate_key_bps"] == pytest.approx(sum(t.column("predicted_key_bps")))


def test_encrypt_demo_round_trip(tables):
    t = tables["encrypt-demo"]
    assert t.column("identical_key_roundtrip") == [True]
    assert t.column("key_bits_used") == [8 * 1024]


def test_event_budget_respected():
    cfg = RunConfig()
    setup = cfg.link_setup(0.3)
    d = budget_duration(setup, 10.0, budget=1e6)
    assert event_rate(setup) * d == pytest.approx(1e6)
    assert budget_duration(setup, 1e-6, budget=1e6) == 1e-6


def test_same_seed_same_bytes():
    a = run_figure("key-vs-power", SMALL).to_csv()
    assert a == run_figure("key-vs-power", SMALL).to_csv()
    assert a != run_figure("key-vs-power", replace(SMALL, seed=8)).to_csv()


def test_parallel_matches_serial():
    assert (run_figure("deployed-fiber", SMALL, jobs=2).to_csv()
            == run_figure("deployed-fiber", SMALL).to_csv())


def test_network_validation_columns():
    net = replace(SMALL.network, links=SMALL.network.links[:3], validate_duration_s=0.05)
    t = run_figure("network-plan", replace(SMALL, network=net))
    assert "simulated_key_bps" in t.columns and len(t.rows) == 3
