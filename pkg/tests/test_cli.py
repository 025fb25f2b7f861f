import json

import numpy as np
import pytest

from conftest import randomized_reduction_data
from msm_timing import causal
from msm_timing.cli import main
from msm_timing.data import Dataset, write_dataset
from msm_timing.io import load_fit_document, read_table
from msm_timing.simlab import Effect, scenario, simulate_dataset

PIPE = {"treatment_covariates": ["L"], "censoring_covariates": ["L"], "blocks": ["g1", "g2"], "percentiles": []}


def _write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def stratified(tmp_path_factory):
    d = tmp_path_factory.mktemp("strat")
    sim = simulate_dataset(scenario("2", n=900, seed=17))
    labels = np.array(["north", "south", "west"])[np.arange(sim.n) % 3]
    ds = Dataset.from_baseline(sim.a_star, sim.delta_a, sim.t_star, sim.delta_t, sim.seg_values,
                               covariate_names=["L"], t_max=sim.t_max, strata=list(labels))
    write_dataset(ds, d / "data.csv")
    cfg = _write_json(d / "config.json", {"pipeline": PIPE, "schema": {"covariates": ["L"]}})
    out = d / "fit"
    assert main(["fit", "--data", str(d / "data.csv"), "--config", cfg, "--strata", "stratum", "--out", str(out)]) == 0
    return d, cfg, out


@pytest.fixture(scope="module")
def single(tmp_path_factory):
    d = tmp_path_factory.mktemp("single")
    write_dataset(simulate_dataset(scenario("2", n=400, seed=3)), d / "data.csv")
    cfg = _write_json(d / "config.json", {"pipeline": PIPE, "schema": {"covariates": ["L"]}})
    return d, cfg


def test_three_strata_give_three_fit_blocks(stratified):
    _, _, out = stratified
    doc = json.loads((out / "fit.json").read_text())
    assert sorted(b["stratum"] for b in doc["strata"]) == ["north", "south", "west"]
    for name in ("weight_models.json", "weight_diagnostics.txt", "manifest.json"):
        assert (out / name).is_file()
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "fit" and "numpy" in man["versions"]


def test_predict_writes_curve_blocks_and_round_trips(stratified, tmp_path):
    _, _, out = stratified
    fit_path = str(out / "fit.json")
    code = main(["predict", "--fit", fit_path, "--a-list", "0,8,24,inf", "--t0", "52",
                 "--interval", "0,4", "--interval", "8,12", "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_table(tmp_path / "curves.csv")
    assert header == ["stratum", "a", "t", "survival"]
    blocks = {(r[0], r[1]) for r in rows}
    assert len(blocks) == 12 and {a for _, a in blocks} == {0.0, 8.0, 24.0, float("inf")}
    _, fits = load_fit_document(fit_path)
    for (label, a) in blocks:
        t = np.array([r[2] for r in rows if (r[0], r[1]) == (label, a)])
        s = np.array([r[3] for r in rows if (r[0], r[1]) == (label, a)])
        curve = causal.survival_curve(fits[label], a)
        assert np.array_equal(t, curve.grid) and np.array_equal(s, curve.survival)
    _, theta = read_table(tmp_path / "theta.csv")
    for label in ("north", "south", "west"):
        a = [r[1] for r in theta if r[0] == label]
        th = np.array([r[2] for r in theta if r[0] == label])
        assert np.all(np.diff(a) > 0) and np.all((th > 0) & (th <= 1))
    _, iv = read_table(tmp_path / "intervals.csv")
    assert len(iv) == 6 and all(0 <= r[4] <= 1 for r in iv)
    _, diff = read_table(tmp_path / "interval_contrasts.csv")
    by = {(r[0], r[1]): r[4] for r in iv}
    for r in diff:
        assert r[6] == by[(r[0], 0.0)] - by[(r[0], 8.0)]


def test_contrast_command(stratified, tmp_path):
    _, _, out = stratified
    assert main(["contrast", "--fit", str(out / "fit.json"), "--a-list", "0,8,inf", "--reference", "inf",
                 "--t0", "52", "--out", str(tmp_path)]) == 0
    header, rows = read_table(tmp_path / "contrasts.csv")
    assert header == ["stratum", "a", "a_reference", "t0", "difference", "ratio"]
    assert len(rows) == 6 and all(r[5] > 0 for r in rows)


def test_fit_weights_command(single, tmp_path):
    d, cfg = single
    assert main(["fit-weights", "--data", str(d / "data.csv"), "--config", cfg, "--out", str(tmp_path),
                 "--truncate-weights", "0.99"]) == 0
    report = (tmp_path / "weight_diagnostics.txt").read_text()
    assert "w1: n=" in report and "truncation: 0.99" in report


def test_bootstrap_serial_equals_parallel(single, tmp_path):
    d, cfg = single
    base = ["bootstrap", "--data", str(d / "data.csv"), "--config", cfg, "--seed", "7", "--replicates", "6",
            "--a-list", "0,8"]
    assert main([*base, "--out", str(tmp_path / "s")]) == 0
    assert main([*base, "--workers", "2", "--out", str(tmp_path / "p")]) == 0
    serial = (tmp_path / "s" / "bootstrap.csv").read_bytes()
    assert serial == (tmp_path / "p" / "bootstrap.csv").read_bytes()
    header, rows = read_table(tmp_path / "s" / "bootstrap.csv")
    assert header == ["functional", "estimate", "se", "ci_lo", "ci_hi", "n_failed"] and len(rows) == 2


def test_missing_data_file_exits_2(tmp_path):
    missing = tmp_path / "nope.csv"
    assert main(["fit", "--data", str(missing), "--out", str(tmp_path)]) == 2
    err = json.loads((tmp_path / "error.json").read_text())
    assert str(missing) in err["message"]


def test_bad_config_exits_2(single, tmp_path):
    d, _ = single
    flat = _write_json(tmp_path / "flat.json", {"treatment_covariates": ["L"]})
    assert main(["fit", "--data", str(d / "data.csv"), "--config", flat, "--out", str(tmp_path)]) == 2


def test_t0_beyond_t_max_exits_2(stratified, tmp_path):
    _, _, out = stratified
    assert main(["predict", "--fit", str(out / "fit.json"), "--t0", "100", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exits_1(tmp_path):
    # every risk set is fully treated, so the initiation column is aliased
    write_dataset(randomized_reduction_data(n=200, seed=1), tmp_path / "data.csv")
    cfg = _write_json(tmp_path / "c.json", {"pipeline": {"blocks": ["g1"], "intercept": True}})
    assert main(["fit", "--data", str(tmp_path / "data.csv"), "--config", cfg, "--out", str(tmp_path)]) == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "SingularInformationError" and "init" in err["message"]


def test_null_covariate_free_fit(tmp_path):
    sim = scenario("1", n=3000, seed=12, g1=Effect(), death_coef=0.0, lambda_inf=0.02)
    write_dataset(simulate_dataset(sim), tmp_path / "data.csv")
    cfg = _write_json(tmp_path / "c.json", {"pipeline": {"blocks": ["g1", "g2"], "percentiles": []},
                                            "schema": {"covariates": ["L"]}})
    assert main(["fit", "--data", str(tmp_path / "data.csv"), "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    block = doc["strata"][0]
    beta = np.array(list(block["structural"]["beta"].values()))
    assert np.all(np.abs(beta) < 0.3)
    diag = block["structural"]["weight_diagnostics"]
    for fam in ("w1", "w2", "wc"):
        assert diag[fam]["min"] == diag[fam]["max"] == 1.0


def test_simulate_smoke_and_determinism(tmp_path):
    args = ["simulate", "--scenario", "1", "--runs", "10", "--replicates", "20", "--seed", "3"]
    cfg = _write_json(tmp_path / "c.json", {"simulation": {"n": 200}})
    assert main([*args, "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    rep = (tmp_path / "a" / "sim_report.csv").read_bytes()
    assert rep == (tmp_path / "b" / "sim_report.csv").read_bytes()
    header, rows = read_table(tmp_path / "a" / "sim_report.csv")
    assert len(rows) == 4
    for r in rows:
        assert all(v is not None and v == v for v in r)
    assert (tmp_path / "a" / "sim_summary.json").is_file()


def test_invalid_scenario_exits_2(tmp_path):
    assert main(["simulate", "--scenario", "9", "--out", str(tmp_path)]) == 2


def test_unknown_subcommand_exits_2(capsys):
    assert main(["bogus"]) == 2
