import math

import numpy as np
import pytest

from compound_evalues import ConfigError, DataError
from compound_evalues.procedures import ProcedureResult
from compound_evalues.simbench import (
    CUI_DELTA,
    METHODS,
    RESULT_COLUMNS,
    Scenario,
    TestingProblem,
    default_scenarios,
    estimate_fdr_power,
    fit_shared,
    generate_scenario_data,
    plot_data_rows,
    run_method,
    run_study,
    write_results_csv,
)


def tiny_scenario(**kw):
    base = dict(
        K=40,
        n=5,
        n_nulls=32,
        xi=5.0,
        variance_mode="uniform",
        alpha=0.1,
        reps=2,
        seed=42,
    )
    base.update(kw)
    return Scenario(**base)


class TestScenario:
    def test_validation(self):
        with pytest.raises(ConfigError):
            tiny_scenario(n_nulls=99)
        with pytest.raises(ConfigError):
            tiny_scenario(alpha=1.2)
        with pytest.raises(ConfigError):
            tiny_scenario(variance_mode="weird")

    def test_lam(self):
        s = tiny_scenario(xi=4.0, n=4)
        assert s.lam == pytest.approx(2.0)


class TestGeneration:
    def test_deterministic_given_seed_and_rep(self):
        s = tiny_scenario()
        a = generate_scenario_data(s, 3)
        b = generate_scenario_data(s, 3)
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(a.true_sigma2, b.true_sigma2)

    def test_reps_differ(self):
        s = tiny_scenario()
        a = generate_scenario_data(s, 0)
        b = generate_scenario_data(s, 1)
        assert not np.array_equal(a.data, b.data)

    def test_zero_effect_is_distributionally_null(self):
        s = tiny_scenario(xi=0.0)
        prob = generate_scenario_data(s, 0)
        assert np.all(prob.true_lambda == 0.0)
        assert prob.null_mask.sum() == s.n_nulls  # configured truth unchanged

    def test_constant_mode_concentrates(self):
        s = tiny_scenario(variance_mode="constant", n=200, K=60)
        prob = generate_scenario_data(s, 0)
        assert np.all(np.abs(prob.sigma_hat2 - 1.0) < 0.6)
        assert np.all(prob.true_sigma2 == 1.0)

    def test_null_mask_prefix(self):
        s = tiny_scenario()
        prob = generate_scenario_data(s, 0)
        assert prob.null_mask[: s.n_nulls].all()
        assert not prob.null_mask[s.n_nulls :].any()


class TestTestingProblem:
    def test_summary_identity_validated(self):
        with pytest.raises(DataError):
            TestingProblem.from_summaries([1.0], [3.0], [2.0], 5)
        prob = TestingProblem.from_summaries([1.0], [3.0], [2.5], 5)
        assert prob.summary(0).sigma_hat2 == 2.5

    def test_from_data_moments(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(7, 6))
        prob = TestingProblem.from_data(x)
        assert prob.s2 == pytest.approx(np.mean(x**2, axis=1))
        assert prob.sigma_hat2 == pytest.approx(np.var(x, axis=1, ddof=1))


class TestRunMethod:
    def test_constant_variance_oracles_identical(self):
        s = tiny_scenario(variance_mode="constant", reps=3)
        for rep in range(3):
            prob = generate_scenario_data(s, rep)
            a = run_method("z_oracle", prob, s)
            b = run_method("eb_oracle", prob, s)
            assert a.rejected == b.rejected

    def test_ttest_is_scale_invariant(self):
        s = tiny_scenario()
        prob = generate_scenario_data(s, 0)
        scaled = TestingProblem.from_data(
            3.0 * prob.data,
            null_mask=prob.null_mask,
            true_sigma2=9.0 * prob.true_sigma2,
            true_lambda=prob.true_lambda,
        )
        a = run_method("ttest", prob, s)
        b = run_method("ttest", scaled, s)
        assert a.rejected == b.rejected

    def test_cui_skip_matches_exact(self):
        s = tiny_scenario(K=60, n_nulls=48)
        for rep in range(2):
            prob = generate_scenario_data(s, rep)
            fitted = fit_shared(prob, s)
            fast = run_method("cui", prob, s, fitted)
            exact = run_method("cui", prob, s, fitted, cui_exact=True)
            assert fast.rejected == exact.rejected

    def test_cui_needs_room_for_delta(self):
        s = tiny_scenario(alpha=CUI_DELTA / 2)
        prob = generate_scenario_data(s, 0)
        with pytest.raises(ConfigError):
            run_method("cui", prob, s)

    def test_unknown_method(self):
        s = tiny_scenario()
        prob = generate_scenario_data(s, 0)
        with pytest.raises(ConfigError):
            run_method("magic", prob, s)

    def test_all_null_fdr_control(self):
        s = tiny_scenario(K=40, n_nulls=40, xi=0.0, n=10, reps=1)
        fdps = {m: [] for m in METHODS}
        for rep in range(60):
            prob = generate_scenario_data(s, rep)
            fitted = fit_shared(prob, s)
            for m in METHODS:
                r = run_method(m, prob, s, fitted)
                fdps[m].append(r.F / max(r.R, 1))
        for m, vals in fdps.items():
            arr = np.array(vals)
            se = arr.std(ddof=1) / math.sqrt(arr.size)
            assert arr.mean() <= s.alpha + 3 * se + 1e-12, m


class TestEstimateFdrPower:
    def test_hand_count(self):
        s = tiny_scenario(K=4, n_nulls=2, reps=1)
        res = ProcedureResult(rejected=frozenset({1, 3}), R=2, k_star=2, F=1)
        mr = estimate_fdr_power([res], s, method="demo")
        assert mr.fdr_hat == pytest.approx(0.5)
        assert mr.power_hat == pytest.approx(0.5)
        assert mr.se_fdr == 0.0 and mr.se_power == 0.0

    def test_perfect_and_empty(self):
        s = tiny_scenario(K=4, n_nulls=2, reps=1)
        perfect = ProcedureResult(rejected=frozenset({3, 4}), R=2, k_star=2, F=0)
        mr = estimate_fdr_power([perfect], s)
        assert mr.fdr_hat == 0.0 and mr.power_hat == 1.0
        empty = ProcedureResult(rejected=frozenset(), R=0, k_star=0, F=0)
        mr = estimate_fdr_power([empty], s)
        assert mr.fdr_hat == 0.0 and mr.power_hat == 0.0  # 0/0 = 0

    def test_requires_truth(self):
        s = tiny_scenario()
        res = ProcedureResult(rejected=frozenset({1}), R=1, k_star=1, F=None)
        with pytest.raises(ConfigError):
            estimate_fdr_power([res], s)

    def test_requires_non_nulls(self):
        s = tiny_scenario(n_nulls=40, K=40, xi=0.0)
        res = ProcedureResult(rejected=frozenset(), R=0, k_star=0, F=0)
        with pytest.raises(ConfigError):
            estimate_fdr_power([res], s)


class TestRunStudy:
    def test_smoke_run_schema(self, tmp_path):
        rows = run_study([tiny_scenario(reps=1)], threads=1)
        assert len(rows) == len(METHODS)
        assert all(set(RESULT_COLUMNS) <= set(r) for r in rows)
        path = tmp_path / "results.csv"
        write_results_csv(rows, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(RESULT_COLUMNS)

    def test_deterministic_csv(self, tmp_path):
        scenarios = [tiny_scenario(reps=2)]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        write_results_csv(run_study(scenarios, threads=1), a)
        write_results_csv(run_study(scenarios, threads=2), b)
        assert a.read_bytes() == b.read_bytes()

    def test_se_shrinks_with_reps(self):
        base = tiny_scenario(K=30, n_nulls=24, xi=4.0, reps=40, seed=5)
        double = tiny_scenario(K=30, n_nulls=24, xi=4.0, reps=80, seed=5)
        rows_a = run_study([base], threads=2)
        rows_b = run_study([double], threads=2)
        se_a = next(r["power_se"] for r in rows_a if r["method"] == "eb")
        se_b = next(r["power_se"] for r in rows_b if r["method"] == "eb")
        assert 0.4 <= se_b / se_a <= 1.0  # about 1/sqrt(2)

    def test_plot_data_projection(self):
        rows = run_study([tiny_scenario(reps=1)], threads=1)
        panel = plot_data_rows(rows)
        assert set(panel[0]) == {"n", "variance_mode", "xi", "method", "power", "power_se"}


class TestDefaultScenarios:
    def test_desk_scale_grid(self):
        scenarios = default_scenarios(xis=(2.0, 4.0))
        assert len(scenarios) == 8
        assert all(s.K == 500 and s.reps == 50 and s.n_nulls == 450 for s in scenarios)

    def test_full_scale_flag(self):
        scenarios = default_scenarios(xis=(2.0,), full_scale=True)
        assert all(s.K == 2000 and s.reps == 200 and s.n_nulls == 1800 for s in scenarios)
