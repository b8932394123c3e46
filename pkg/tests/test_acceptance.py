"""Acceptance suite: every criterion prints one PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines as they
complete. The simulation study (criteria 1-2) runs once at desk scale
(K=500, 50 replications per scenario) and is shared between the two
criteria.
"""

import itertools
import math
import time

import numpy as np
import pytest

from compound_evalues import (
    EVector,
    MergeSpec,
    ProcedureResult,
    PVector,
    derandomize,
    ebh,
    estimate_compound_budget,
    implied_compound_evalues,
    merge_pvalues,
    npmle_certificate,
    npmle_fit,
)
from compound_evalues.mixtures import (
    DiscreteMixture,
    build_localization,
    chisq_scale_cdf,
    default_variance_grid,
    dkw_radius,
    odp_evalues,
)
from compound_evalues.simbench import METHODS, Scenario, generate_scenario_data, run_study

BASE_SEED = 20240801


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[ACCEPTANCE {num}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def desk_scenarios():
    scenarios = []
    index = 0
    for n in (5, 10):
        for mode in ("constant", "uniform"):
            for xi in (2.0, 4.0, 6.0):
                scenarios.append(
                    Scenario(
                        K=500,
                        n=n,
                        n_nulls=450,
                        xi=xi,
                        variance_mode=mode,
                        alpha=0.1,
                        reps=50,
                        seed=BASE_SEED + 1000 * index,
                    )
                )
                index += 1
    scenarios.append(
        Scenario(
            K=500,
            n=5,
            n_nulls=450,
            xi=5.0,
            variance_mode="uniform",
            alpha=0.1,
            reps=50,
            seed=BASE_SEED + 1000 * index,
        )
    )
    return scenarios


@pytest.fixture(scope="module")
def study():
    start = time.time()
    rows = run_study(desk_scenarios(), threads=None)
    elapsed = time.time() - start
    return rows, elapsed


def _row(rows, n, mode, xi, method):
    for r in rows:
        if r["n"] == n and r["variance_mode"] == mode and r["xi"] == xi and r["method"] == method:
            return r
    raise KeyError((n, mode, xi, method))


def test_criterion_1_fdr_control(study):
    rows, elapsed = study
    worst = max(r["fdr"] - (0.1 + 3.0 * r["fdr_se"]) for r in rows)
    ok = worst <= 0.0 and elapsed <= 600.0
    report(
        1,
        "FDR control across the desk-scale grid",
        ok,
        f"max FDR excess {worst:+.4f}, study wall time {elapsed:.0f}s",
    )


def test_criterion_2_power_ordering(study):
    rows, _ = study
    details = []
    ok = True
    for xi in (4.0, 5.0):
        r = {m: _row(rows, 5, "uniform", xi, m) for m in METHODS}

        def pooled(a, b):
            return math.sqrt(r[a]["power_se"] ** 2 + r[b]["power_se"] ** 2)

        gaps = [
            r["eb"]["power"] - r["cui"]["power"] - 2.0 * pooled("eb", "cui"),
            r["cui"]["power"] - r["ui"]["power"] - 2.0 * pooled("cui", "ui"),
            r["cui"]["power"] - r["ttest"]["power"] - 2.0 * pooled("cui", "ttest"),
        ]
        oracle_gap = abs(r["eb"]["power"] - r["eb_oracle"]["power"])
        oracle_tol = 0.02 + 2.0 * pooled("eb", "eb_oracle")
        ok = ok and all(g > 0 for g in gaps) and oracle_gap <= oracle_tol
        details.append(
            f"xi={xi:g}: eb={r['eb']['power']:.3f} cui={r['cui']['power']:.3f} "
            f"ui={r['ui']['power']:.3f} t={r['ttest']['power']:.3f} "
            f"|eb-oracle|={oracle_gap:.4f}<={oracle_tol:.4f}"
        )
    report(2, "power ordering and oracle tracking", ok, "; ".join(details))


def test_criterion_3_universality_round_trip():
    start = time.time()
    failures = 0
    cases = 0
    for K in range(1, 7):
        for alpha in (0.05, 0.1, 0.5):
            for bits in itertools.product([0, 1], repeat=K):
                rejected = frozenset(i + 1 for i, b in enumerate(bits) if b)
                res = ProcedureResult(
                    rejected=rejected, R=len(rejected), k_star=len(rejected)
                )
                evec = implied_compound_evalues(res, K, alpha)
                cases += 1
                if ebh(evec, alpha).rejected != rejected:
                    failures += 1
    elapsed = time.time() - start
    ok = failures == 0 and elapsed < 1.0
    report(
        3,
        "e-BH inversion reproduces every rejection set",
        ok,
        f"{cases} cases, {failures} failures, {elapsed:.2f}s",
    )


def _all_null_scenario(K, n, seed):
    return Scenario(
        K=K,
        n=n,
        n_nulls=K,
        xi=0.0,
        variance_mode="uniform",
        alpha=0.1,
        reps=1,
        seed=seed,
    )


def test_criterion_4_compound_budget_suite():
    reps = 10_000
    lam = 0.8
    alpha = 0.1
    results = {}

    def budget(name, K, n, construction, seed):
        sc = _all_null_scenario(K, n, seed)
        est = estimate_compound_budget(
            lambda rep: generate_scenario_data(sc, rep), construction, reps
        )
        results[name] = est
        return est.mean_budget <= 1.0 + 3.0 * est.std_error

    def lr_values(pr):
        sigma = np.sqrt(pr.true_sigma2)
        return np.exp(lam * pr.data.sum(axis=1) / sigma - 0.5 * pr.n * lam**2)

    def lr_construction(pr):
        return EVector(lr_values(pr), null_mask=pr.null_mask)

    def odp_construction(pr):
        atoms, counts = np.unique(pr.true_sigma2, return_counts=True)
        w = counts / counts.sum()
        nulls = [
            (lambda s2: (lambda x: float(np.exp(np.sum(-0.5 * np.log(2 * np.pi * s2) - x**2 / (2 * s2))))))(s2)
            for s2 in pr.true_sigma2
        ]
        alts = [
            (lambda s2: (lambda x: float(np.exp(np.sum(-0.5 * np.log(2 * np.pi * s2) - (x - lam * np.sqrt(s2)) ** 2 / (2 * s2))))))(s2)
            for s2 in pr.true_sigma2
        ]
        evec = odp_evalues([pr.data[k] for k in range(pr.K)], nulls, alts)
        return EVector(evec.values, null_mask=pr.null_mask)

    def sos_construction(pr):
        return EVector(pr.K * pr.s2 / pr.sigma_hat2.sum(), null_mask=pr.null_mask)

    def implied_construction(pr):
        res = ebh(lr_construction(pr), alpha)
        out = implied_compound_evalues(res, pr.K, alpha)
        return EVector(out.values, null_mask=pr.null_mask)

    call_counter = itertools.count()

    def derandomized_construction(pr):
        # three randomized e-BH runs (each thresholds E/U_l at the level
        # alpha), inverted to implied compound e-values and averaged; the
        # uniforms come from a stream independent of the data
        rng = np.random.Generator(
            np.random.Philox(key=np.array([888, next(call_counter)], dtype=np.uint64))
        )
        evals = lr_construction(pr)
        runs = []
        for _ in range(3):
            u = rng.uniform()
            res = ebh(EVector(evals.values / u), alpha)
            runs.append((implied_compound_evalues(res, pr.K, alpha), 1.0 / 3.0))
        combined = derandomize(runs)
        return EVector(combined.values, null_mask=pr.null_mask)

    # the second-moment construction carries an O(1/((n-1)K)) upward bias
    # (exact mean (n-1)/n * (1 + K/(K(n-1)-2))), so K must be large enough
    # for that bias to sit below the 3*SE resolution of 10^4 replications
    checks = {
        "exact_lr": budget("exact_lr", 6, 8, lr_construction, 1),
        "odp": budget("odp", 4, 6, odp_construction, 2),
        "sum_of_squares": budget("sum_of_squares", 200, 10, sos_construction, 3),
        "implied_ebh": budget("implied_ebh", 8, 8, implied_construction, 4),
        "derandomized": budget("derandomized", 8, 8, derandomized_construction, 5),
    }

    const_est = estimate_compound_budget(
        lambda rep: generate_scenario_data(_all_null_scenario(5, 6, 6), rep),
        lambda pr: EVector(np.ones(pr.K), null_mask=pr.null_mask),
        200,
    )
    checks["constant"] = const_est.mean_budget == 1.0 and const_est.std_error == 0.0

    ok = all(checks.values())
    detail = ", ".join(
        f"{k}={results[k].mean_budget:.4f}±{results[k].std_error:.4f}" for k in results
    )
    report(4, "compound budget suite at 10^4 replications", ok, detail)


def test_criterion_5_npmle_quality():
    rng = np.random.default_rng(BASE_SEED)
    K, nu = 2000, 4
    atoms = np.array([0.7, 1.6])
    true_w = np.array([0.5, 0.5])
    sigma2 = np.where(np.arange(K) % 2 == 0, atoms[0], atoms[1])
    sample = sigma2 * rng.chisquare(nu, K) / nu
    grid = default_variance_grid()
    start = time.time()
    g = npmle_fit(sample, nu, grid)
    elapsed = time.time() - start
    loglik, gap = npmle_certificate(g, sample, nu)
    true_g = DiscreteMixture(atoms, true_w)
    ll_true, _ = npmle_certificate(true_g, sample, nu)
    ts = np.linspace(1.0, 1.3, 61)  # neighborhood of the atoms' midpoint 1.15
    sup_diff = float(np.max(np.abs(g.cdf(ts) - true_g.cdf(ts))))
    ok = gap <= 1e-6 and loglik >= ll_true and sup_diff <= 0.05 and elapsed <= 30.0
    report(
        5,
        "NPMLE quality on the two-point mixture",
        ok,
        f"gap={gap:.2e}, ll-ll_true={loglik - ll_true:+.3f}, "
        f"sup CDF diff={sup_diff:.4f}, {elapsed:.1f}s",
    )


def test_criterion_6_localization_coverage():
    rng = np.random.default_rng(BASE_SEED + 1)
    K, nu, delta, reps = 2000, 4, 0.01, 1000
    atoms = np.array([0.7, 1.6])
    sigma2 = np.where(np.arange(K) % 2 == 0, atoms[0], atoms[1])
    weights = np.array([0.5, 0.5])
    radius = dkw_radius(K, delta)
    formula = math.sqrt((1.0 + math.log(2.0 / delta)) / (2.0 * K))
    loc = build_localization(np.linspace(0.5, 2.0, K), delta)
    hits = 0
    ranks = np.arange(1, K + 1)
    for _ in range(reps):
        sample = np.sort(sigma2 * rng.chisquare(nu, K) / nu)
        cdf = chisq_scale_cdf(sample[:, None], atoms[None, :], nu) @ weights
        ks = max(float(np.max(ranks / K - cdf)), float(np.max(cdf - (ranks - 1) / K)))
        hits += ks <= radius
    coverage = hits / reps
    se = math.sqrt(max(coverage * (1 - coverage), 1e-12) / reps)
    ok = coverage >= 0.99 - 3.0 * se and abs(loc.radius - formula) <= 1e-9
    report(
        6,
        "localization coverage and band radius",
        ok,
        f"coverage={coverage:.4f} (needs >= {0.99 - 3 * se:.4f}), radius diff="
        f"{abs(loc.radius - formula):.1e}",
    )


def test_criterion_7_clt_evalue_asymptotics():
    lam = 0.5
    n, reps, chunk = 10_000, 10_000, 500
    rng = np.random.default_rng(BASE_SEED + 2)

    def evalues(mean_shift):
        out = np.empty(reps)
        done = 0
        while done < reps:
            m = min(chunk, reps - done)
            x = rng.exponential(1.0, (m, n)) - 1.0 + mean_shift
            xbar = x.mean(axis=1)
            s = np.sqrt(np.mean(x**2, axis=1))
            out[done : done + m] = np.exp(lam * math.sqrt(n) * xbar / s - lam**2 / 2)
            done += m
        return out

    null_mean = float(np.mean(evalues(0.0)))
    alt_median = float(np.median(evalues(0.5)))
    ok = null_mean <= 1.05 and alt_median > 1e3
    report(
        7,
        "tilted studentized statistic is asymptotically valid and powerful",
        ok,
        f"null mean={null_mean:.4f} (<=1.05), alt median={alt_median:.2e} (>1e3)",
    )


def test_criterion_8_merging_validity():
    rng = np.random.default_rng(BASE_SEED + 3)
    K, reps = 10, 10_000
    z = rng.standard_normal((reps, K))
    evals = np.exp(z - 0.5)  # exact e-values from an independent experiment
    pvals = rng.uniform(size=(reps, K))
    merged = {"twice_mean": np.empty(reps), "geometric": np.empty(reps)}
    specs = {"twice_mean": MergeSpec.twice_mean(), "geometric": MergeSpec.geometric()}
    for r in range(reps):
        p = PVector(pvals[r])
        e = EVector(evals[r])
        for kind, spec in specs.items():
            merged[kind][r] = merge_pvalues(p, e, spec)
    ok = True
    details = []
    for kind in merged:
        for alpha in (0.05, 0.1):
            freq = float(np.mean(merged[kind] <= alpha))
            se = math.sqrt(max(freq * (1 - freq), 1e-12) / reps)
            ok = ok and freq <= alpha + 3.0 * se
            details.append(f"{kind}@{alpha:g}: {freq:.4f}")
    report(8, "e-weighted p-merging is valid under the global null", ok, ", ".join(details))


def test_criterion_9_odp_neyman_pearson():
    rng = np.random.default_rng(BASE_SEED + 4)
    points = 8
    instances_ok = 0
    for _ in range(20):
        p1 = rng.dirichlet(np.ones(points))
        p2 = rng.dirichlet(np.ones(points))
        q1 = rng.dirichlet(np.ones(points))
        q2 = rng.dirichlet(np.ones(points))
        # the shared statistic evaluated at each outcome point (both
        # hypotheses see the same mixture ratio)
        stat = np.array(
            [
                odp_evalues(
                    [x, x],
                    [lambda y: p1[y], lambda y: p2[y]],
                    [lambda y: q1[y], lambda y: q2[y]],
                ).values[0]
                for x in range(points)
            ]
        )
        dominated = False
        for c in np.unique(stat):
            thr = stat >= c
            fp_thr = float((p1 + p2) @ thr)
            tp_thr = float((q1 + q2) @ thr)
            for bits in itertools.product([0, 1], repeat=points):
                phi = np.array(bits, dtype=float)
                fp = float((p1 + p2) @ phi)
                tp = float((q1 + q2) @ phi)
                if fp <= fp_thr + 1e-12 and tp > tp_thr + 1e-9:
                    dominated = True
                    break
            if dominated:
                break
        instances_ok += not dominated
    ok = instances_ok == 20
    report(
        9,
        "thresholding the discovery statistic is undominated",
        ok,
        f"{instances_ok}/20 instances",
    )
