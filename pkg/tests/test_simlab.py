import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from msm_timing.simlab import (
    Effect, SimConfig, StudyPlan, _aggregate, _invert_post, _post_cumhaz, estimator_config, run_study, scenario,
    simulate_dataset, simulate_regime, true_mortality,
)

NULL = dict(lambda_inf=0.05, g1=Effect(), death_coef=0.0)


def test_true_mortality_null_closed_form():
    cfg = SimConfig(**NULL)
    for a in (0.0, 10.0, 40.0, np.inf):
        assert true_mortality(cfg, a, 52.0) == pytest.approx(1 - np.exp(-2.6), abs=1e-12)
    assert abs(true_mortality(cfg, 0.0, 52.0) - 0.9257) < 5e-5


def test_true_mortality_constant_g1_closed_form():
    cfg = SimConfig(**{**NULL, "g1": Effect("constant", -0.5)})
    expected = 1 - np.exp(-0.05 * 10 - 0.05 * np.exp(-0.5) * 42)
    assert true_mortality(cfg, 10.0, 52.0) == pytest.approx(expected, abs=1e-12)
    assert abs(true_mortality(cfg, 10.0, 52.0) - 0.8303) < 5e-5


def test_true_mortality_at_zero():
    assert true_mortality(scenario("2"), 8.0, 0.0) == 0.0


def test_true_mortality_mixes_over_confounder():
    cfg = scenario("1", lambda_inf=0.05)
    lo = true_mortality(SimConfig(**{**cfg.to_dict(), "confounder_p": 0.0}), 8.0, 52.0)
    hi = true_mortality(SimConfig(**{**cfg.to_dict(), "confounder_p": 1.0}), 8.0, 52.0)
    assert true_mortality(cfg, 8.0, 52.0) == pytest.approx(0.5 * (lo + hi), abs=1e-15)


def test_null_effect_death_times_are_exponential():
    cfg = SimConfig(n=5000, lambda_inf=0.05, g1=Effect(), death_coef=0.0, censoring_rate=0.0, t_max=1e9, seed=3)
    ds = simulate_dataset(cfg)
    assert ds.delta_t.all()
    assert stats.kstest(ds.t_star, "expon", args=(0, 1 / 0.05)).pvalue > 0.01


def test_initiators_near_ten_match_closed_form():
    cfg = SimConfig(n=150_000, lambda_inf=0.05, g1=Effect("constant", -0.5), death_coef=0.0, gamma=0.0,
                    censoring_rate=0.0, t_max=78.0, seed=8)
    ds = simulate_dataset(cfg)
    sel = ds.delta_a & (ds.a_star >= 9.5) & (ds.a_star <= 10.5)
    died = ds.delta_t[sel] & (ds.t_star[sel] <= 52.0)
    # initiators survived to initiation: F_10(52) = 1 - S_inf(10) * (1 - P(die by 52 | alive at 10))
    s_before = np.exp(-0.05 * 10.0)
    p = true_mortality(cfg, 10.0, 52.0)
    q = 1 - (1 - p) / s_before
    se = s_before * np.sqrt(q * (1 - q) / sel.sum())
    assert sel.sum() > 1000
    assert abs(1 - s_before * (1 - died.mean()) - p) < 3 * se


@pytest.mark.parametrize("cfg", [
    scenario("1", n=5000, seed=1),
    scenario("2", n=5000, seed=2, lambda_inf=0.03),
    scenario("1", n=5000, seed=3, g2=Effect("linear", 0.2, -0.01), g3=Effect("linear", 0.0, 0.0005)),
])
@pytest.mark.parametrize("a", [0.0, 8.0, 24.0, np.inf])
def test_generator_matches_truth(cfg, a):
    t = simulate_regime(cfg, a)
    p = true_mortality(cfg, a, 52.0)
    se = np.sqrt(p * (1 - p) / cfg.n)
    assert abs(np.mean(t <= 52.0) - p) < 3 * se


@given(st.floats(0.01, 0.2), st.floats(-2, 2), st.floats(-0.1, 0.1), st.floats(0.0, 5.0))
def test_inversion_is_exact(rate, alpha, kappa, r):
    d = _invert_post(rate, alpha, np.array(kappa), r)
    if np.isfinite(d):
        assert _post_cumhaz(rate, alpha, np.array(kappa), d) == pytest.approx(r, rel=1e-9, abs=1e-12)
    else:
        # a decaying hazard whose total mass stays below r
        assert kappa < 0 and rate * np.exp(alpha) / -kappa <= r * (1 + 1e-12)


def test_fixed_seed_is_bit_identical():
    a, b = simulate_dataset(scenario("2", n=300, seed=5)), simulate_dataset(scenario("2", n=300, seed=5))
    for name in ("a_star", "delta_a", "t_star", "delta_t"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.t_star, simulate_dataset(scenario("2", n=300, seed=6)).t_star)


def test_hidden_confounder_is_withheld():
    assert simulate_dataset(scenario("3", n=50)).covariate_names == ()
    assert simulate_dataset(scenario("2", n=50)).covariate_names == ("L",)
    assert estimator_config(scenario("3"), "weighted").treatment_covariates == ()
    assert estimator_config(scenario("2"), "unweighted").weighted is False


def test_effect_and_config_errors():
    with pytest.raises(ValueError):
        Effect("spline")
    with pytest.raises(ValueError):
        Effect("constant", 0.0, 1.0)
    with pytest.raises(ValueError):
        Effect.parse("fast")
    with pytest.raises(ValueError):
        scenario("4")
    with pytest.raises(ValueError):
        SimConfig(n=0)
    with pytest.raises(ValueError):
        SimConfig(lambda_inf=0.0)
    with pytest.raises(ValueError):
        SimConfig.from_dict({"bogus": 1})
    assert Effect.parse(-0.5) == Effect("constant", -0.5)
    assert Effect.parse({"kind": "linear", "slope": 0.1}) == Effect("linear", 0.0, 0.1)


@pytest.fixture(scope="module")
def small_study():
    return run_study(scenario("1", n=300, seed=21), StudyPlan(runs=12))


def test_aggregation_is_order_invariant(small_study):
    shuffled = list(reversed(small_study.runs))
    again = _aggregate(small_study.config, small_study.plan, shuffled)
    cols, _ = small_study.table()
    assert repr([[r[c] for c in cols] for r in again]) == repr(small_study.table()[1])


def test_report_columns_and_ranges(small_study):
    cols, rows = small_study.table()
    assert len(rows) == 4
    for r in small_study.rows:
        assert r["n_runs"] + r["n_failed"] == 12
        assert np.isnan(r["coverage"]) and r["n_covered_runs"] == 0


def test_randomized_weighted_and_unweighted_agree(small_study):
    for f in ("mortality(a=0,t0=52)", "mortality(a=8,t0=52)"):
        w, u = small_study.row("weighted", f), small_study.row("unweighted", f)
        diffs = [r["results"]["weighted"][f][0] - r["results"]["unweighted"][f][0] for r in small_study.runs]
        assert abs(np.mean(diffs)) < max(w["mc_se"], u["mc_se"])


def test_coverage_within_unit_interval():
    rep = run_study(scenario("1", n=200, seed=4), StudyPlan(runs=3, replicates=10, estimators=("weighted",)))
    for r in rep.rows:
        assert 0.0 <= r["coverage"] <= 1.0 and r["n_covered_runs"] == 3
