"""Simultaneous t-test benchmark: data generation, six methods, FDR/power.

Each scenario draws K groups of n normal observations; a fixed fraction of
groups has mean zero (nulls) and the rest are shifted by xi / sqrt(n) times
their standard deviation. Six e-value constructions feed the e-BH procedure:
two oracles (true per-group variance; true empirical variance distribution),
the NPMLE-based empirical Bayes plug-in, compound universal inference,
a t-statistic e-value, and plain universal inference.

Note: the "ttest" method here is the noncentral-over-central t density
ratio of the t-statistic (noncentrality xi). It is an exact e-value and a
measurable function of the t-statistic alone, standing in for the
scale-invariant constructions studied elsewhere in the literature, whose
exact form may differ.

Replications are seeded with a counter-based generator keyed by
(seed, replication), so parallel and serial runs agree bit for bit.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import nct as _noncentral_t, t as _student_t

from ._extmath import tree_mean
from .core import EVector
from .errors import ConfigError, DataError
from .mixtures import (
    CuiSolver,
    DiscreteMixture,
    SummaryStats,
    _mean_scale_loglik_grid,
    _scale_loglik_grid,
    build_localization,
    default_variance_grid,
    npmle_fit,
)
from .procedures import ProcedureResult, ebh

__all__ = [
    "METHODS",
    "CUI_DELTA",
    "Scenario",
    "MethodResult",
    "TestingProblem",
    "SharedFit",
    "generate_scenario_data",
    "fit_shared",
    "run_method",
    "estimate_fdr_power",
    "run_study",
    "default_scenarios",
    "write_results_csv",
    "plot_data_rows",
    "RESULT_COLUMNS",
]

METHODS = ("z_oracle", "eb_oracle", "eb", "cui", "ttest", "ui")
CUI_DELTA = 0.01  # localization level; CUI applies e-BH at alpha - CUI_DELTA

RESULT_COLUMNS = [
    "scenario_id",
    "K",
    "n",
    "variance_mode",
    "xi",
    "alpha",
    "method",
    "fdr",
    "fdr_se",
    "power",
    "power_se",
]


@dataclass(frozen=True)
class Scenario:
    """One simulation setting of the simultaneous t-test study."""

    K: int
    n: int
    n_nulls: int
    xi: float
    variance_mode: str
    alpha: float
    reps: int
    seed: int

    def __post_init__(self):
        if self.K < 1 or self.n < 2:
            raise ConfigError("need K >= 1 and n >= 2")
        if not 0 <= self.n_nulls <= self.K:
            raise ConfigError("n_nulls must lie in 0..K")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.variance_mode not in {"constant", "uniform"}:
            raise ConfigError("variance_mode must be 'constant' or 'uniform'")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    @property
    def scenario_id(self) -> str:
        return f"K{self.K}_n{self.n}_{self.variance_mode}_xi{self.xi:g}"

    @property
    def lam(self) -> float:
        return self.xi / float(np.sqrt(self.n))


@dataclass(frozen=True)
class MethodResult:
    """FDR and power estimates with standard errors for one method."""

    method: str
    fdr_hat: float
    power_hat: float
    se_fdr: float
    se_power: float

    def __post_init__(self):
        if not (0.0 <= self.fdr_hat <= 1.0 and 0.0 <= self.power_hat <= 1.0):
            raise ConfigError("estimates must lie in [0, 1]")
        if self.se_fdr < 0 or self.se_power < 0:
            raise ConfigError("standard errors cannot be negative")


@dataclass(frozen=True)
class TestingProblem:
    """K x n data matrix with per-group summaries and (optionally) the truth."""

    __test__ = False  # keep pytest from collecting this as a test class

    data: Optional[np.ndarray]
    xbar: np.ndarray
    s2: np.ndarray
    sigma_hat2: np.ndarray
    n: int
    null_mask: Optional[np.ndarray] = None
    true_sigma2: Optional[np.ndarray] = None
    true_lambda: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.xbar.size

    def summary(self, k: int) -> SummaryStats:
        return SummaryStats(
            xbar=float(self.xbar[k]),
            s2=float(self.s2[k]),
            sigma_hat2=float(self.sigma_hat2[k]),
            n=self.n,
        )

    @staticmethod
    def from_data(data, null_mask=None, true_sigma2=None, true_lambda=None) -> "TestingProblem":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] < 2:
            raise DataError("data must be a K x n matrix with n >= 2")
        if np.isnan(data).any():
            raise DataError("data contains NaN")
        n = data.shape[1]
        xbar = data.mean(axis=1)
        s2 = np.mean(data**2, axis=1)
        sigma_hat2 = np.sum((data - xbar[:, None]) ** 2, axis=1) / (n - 1)
        return TestingProblem(
            data=data,
            xbar=xbar,
            s2=s2,
            sigma_hat2=sigma_hat2,
            n=n,
            null_mask=None if null_mask is None else np.asarray(null_mask, bool),
            true_sigma2=None if true_sigma2 is None else np.asarray(true_sigma2, float),
            true_lambda=None if true_lambda is None else np.asarray(true_lambda, float),
        )

    @staticmethod
    def from_summaries(xbar, s2, sigma_hat2, n: int) -> "TestingProblem":
        xbar = np.asarray(xbar, float)
        s2 = np.asarray(s2, float)
        sigma_hat2 = np.asarray(sigma_hat2, float)
        prob = TestingProblem(
            data=None, xbar=xbar, s2=s2, sigma_hat2=sigma_hat2, n=int(n)
        )
        for k in range(prob.K):
            prob.summary(k)  # validates the moment identity row by row
        return prob


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    key = np.array([seed, rep], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_scenario_data(s: Scenario, rep: int) -> TestingProblem:
    """Simulate one replication; deterministic given (scenario seed, rep)."""
    rng = _rep_rng(s.seed, rep)
    if s.variance_mode == "constant":
        sigma2 = np.ones(s.K)
    else:
        sigma2 = rng.uniform(0.5, 2.0, s.K)
    null_mask = np.zeros(s.K, dtype=bool)
    null_mask[: s.n_nulls] = True
    lam = np.where(null_mask, 0.0, s.lam)
    sigma = np.sqrt(sigma2)
    data = (lam * sigma)[:, None] + sigma[:, None] * rng.standard_normal((s.K, s.n))
    return TestingProblem.from_data(
        data, null_mask=null_mask, true_sigma2=sigma2, true_lambda=lam
    )


@dataclass
class SharedFit:
    """Per-replication artifacts shared by the data-driven methods."""

    grid: np.ndarray
    g_hat: DiscreteMixture
    solver: CuiSolver
    sumx: np.ndarray
    sumsq: np.ndarray
    log_scale_grid: np.ndarray = field(repr=False)  # K x B null log-likelihoods


def fit_shared(problem: TestingProblem, s: Scenario, grid: Optional[np.ndarray] = None) -> SharedFit:
    """Fit the NPMLE and the localization once; both are reused by methods."""
    if grid is None:
        grid = default_variance_grid()
    nu = problem.n - 1
    g_hat = npmle_fit(problem.sigma_hat2, nu, grid)
    loc = build_localization(problem.sigma_hat2, CUI_DELTA)
    solver = CuiSolver(loc, grid, nu)
    if problem.data is None:
        raise DataError("shared fit needs the raw data matrix")
    sumx = problem.data.sum(axis=1)
    sumsq = problem.n * problem.s2
    log_scale_grid = _scale_loglik_grid(sumsq[:, None], problem.n, grid[None, :])
    return SharedFit(
        grid=grid,
        g_hat=g_hat,
        solver=solver,
        sumx=sumx,
        sumsq=sumsq,
        log_scale_grid=log_scale_grid,
    )


def _mixture_log_num(problem: TestingProblem, lam: float, atoms, weights, sumx, sumsq):
    logw = np.log(weights)
    ll = _mean_scale_loglik_grid(
        sumsq[:, None], sumx[:, None], problem.n, lam, atoms[None, :]
    )
    return logsumexp(ll + logw[None, :], axis=1)


def _mixture_log_den(problem: TestingProblem, atoms, weights, sumsq):
    logw = np.log(weights)
    ll = _scale_loglik_grid(sumsq[:, None], problem.n, atoms[None, :])
    return logsumexp(ll + logw[None, :], axis=1)


def _true_mixture(problem: TestingProblem):
    atoms, counts = np.unique(problem.true_sigma2, return_counts=True)
    return atoms, counts / counts.sum()


def _cui_log_denominators(fitted: SharedFit, skip_log_threshold=None, log_num=None):
    """Exact band-constrained LP denominators, optionally skipping
    hypotheses whose e-value provably stays below a rejectability cutoff.

    When skipping, the returned entry is a lower bound on the true log
    denominator (hence an upper bound on the e-value); any e-BH rejection
    set at the cutoff level is unchanged because e-values below 1/alpha can
    neither be rejected nor shift the rejection threshold.
    """
    logC = fitted.log_scale_grid
    K = logC.shape[0]
    out = np.empty(K)
    pref = fitted.solver.feasible_weights(prefer=fitted.g_hat.weights)
    pos = pref > 0
    log_den_lb = logsumexp(logC[:, pos] + np.log(pref[pos])[None, :], axis=1)
    if skip_log_threshold is None or log_num is None:
        need = np.ones(K, dtype=bool)
    else:
        need = (log_num - log_den_lb) >= skip_log_threshold
    out[:] = log_den_lb
    order = np.argsort(fitted.sumsq[need])
    idx = np.flatnonzero(need)[order]  # sorted objectives keep warm starts close
    for k in idx:
        out[k] = fitted.solver.log_denominator(logC[k])
    return out


def _method_evalues(
    method: str,
    problem: TestingProblem,
    s: Scenario,
    fitted: Optional[SharedFit],
    cui_exact: bool = False,
) -> np.ndarray:
    lam = s.lam
    n = problem.n
    if problem.data is not None:
        sumx = problem.data.sum(axis=1)
    else:
        sumx = problem.n * problem.xbar
    sumsq = n * problem.s2
    if method == "z_oracle":
        if problem.true_sigma2 is None:
            raise ConfigError("z_oracle needs the true per-group variances")
        sigma = np.sqrt(problem.true_sigma2)
        log_e = lam * sumx / sigma - 0.5 * n * lam**2
    elif method == "eb_oracle":
        if problem.true_sigma2 is None:
            raise ConfigError("eb_oracle needs the true variances")
        atoms, weights = _true_mixture(problem)
        log_e = _mixture_log_num(problem, lam, atoms, weights, sumx, sumsq) - _mixture_log_den(
            problem, atoms, weights, sumsq
        )
    elif method in {"eb", "ui", "cui"}:
        if fitted is None:
            raise ConfigError(f"{method} needs the shared per-replication fit")
        keep = fitted.g_hat.weights > 0
        atoms = fitted.g_hat.support[keep]
        weights = fitted.g_hat.weights[keep]
        log_num = _mixture_log_num(problem, lam, atoms, weights, sumx, sumsq)
        if method == "eb":
            log_e = log_num - _mixture_log_den(problem, atoms, weights, sumsq)
        elif method == "ui":
            log_e = log_num - fitted.log_scale_grid.max(axis=1)
        else:
            level = s.alpha - CUI_DELTA
            if level <= 0.0:
                raise ConfigError("cui needs alpha above the localization delta")
            # skip margin sits below e-BH's boundary tolerance, so a skipped
            # upper bound can never reach the rejection threshold
            thresh = None if cui_exact else -np.log(level) - 1e-9
            log_den = _cui_log_denominators(
                fitted, skip_log_threshold=thresh, log_num=log_num
            )
            log_e = log_num - log_den
    elif method == "ttest":
        if (problem.sigma_hat2 <= 0).any():
            raise DataError("degenerate group: zero sample variance")
        t_stat = np.sqrt(n) * problem.xbar / np.sqrt(problem.sigma_hat2)
        nu = n - 1
        log_e = _noncentral_t.logpdf(t_stat, nu, s.xi) - _student_t.logpdf(t_stat, nu)
    else:
        raise ConfigError(f"unknown method {method!r}")
    with np.errstate(over="ignore"):
        return np.exp(log_e)


def run_method(
    method: str,
    problem: TestingProblem,
    s: Scenario,
    fitted: Optional[SharedFit] = None,
    cui_exact: bool = False,
) -> ProcedureResult:
    """Compute one method's e-values and apply e-BH.

    CUI tests at level alpha - delta to pay for the localization failure
    probability. For speed, CUI skips the exact LP for hypotheses whose
    e-value upper bound already rules out rejection; pass ``cui_exact`` to
    force exact LP solves everywhere (identical rejection sets).
    """
    if method in {"eb", "ui", "cui"} and fitted is None:
        fitted = fit_shared(problem, s)
    values = _method_evalues(method, problem, s, fitted, cui_exact=cui_exact)
    evec = EVector(values, null_mask=problem.null_mask)
    level = s.alpha - CUI_DELTA if method == "cui" else s.alpha
    return ebh(evec, level)


def _counts_to_result(method: str, Rs, Fs, s: Scenario) -> MethodResult:
    Rs = np.asarray(Rs, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    n_alt = s.K - s.n_nulls
    if n_alt <= 0:
        raise ConfigError("power is undefined without non-null hypotheses")
    fdp = Fs / np.maximum(Rs, 1.0)  # 0/0 = 0 convention
    tpp = (Rs - Fs) / n_alt
    reps = Rs.size
    se = lambda x: float(np.std(x, ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return MethodResult(
        method=method,
        fdr_hat=tree_mean(fdp),
        power_hat=tree_mean(tpp),
        se_fdr=se(fdp),
        se_power=se(tpp),
    )


def estimate_fdr_power(
    results: Sequence[ProcedureResult], s: Scenario, method: str = ""
) -> MethodResult:
    """Aggregate per-replication results into FDR and power estimates."""
    if any(r.F is None for r in results):
        raise ConfigError("results must carry false-discovery counts (truth known)")
    Rs = [r.R for r in results]
    Fs = [r.F for r in results]
    return _counts_to_result(method, Rs, Fs, s)


def _run_rep(s: Scenario, rep: int) -> dict[str, tuple[int, int]]:
    problem = generate_scenario_data(s, rep)
    fitted = fit_shared(problem, s)
    out = {}
    for method in METHODS:
        res = run_method(method, problem, s, fitted)
        out[method] = (res.R, res.F)
    return out


def _run_rep_task(args):
    idx, s, rep = args
    return idx, rep, _run_rep(s, rep)


def run_study(
    scenarios: Sequence[Scenario], threads: Optional[int] = None
) -> list[dict]:
    """Run every scenario and return one result row per (scenario, method).

    Replications are distributed over worker processes; per-replication
    outputs are reassembled in replication order, so the estimates do not
    depend on the worker count.
    """
    tasks = [(i, s, rep) for i, s in enumerate(scenarios) for rep in range(s.reps)]
    counts: dict[tuple[int, int], dict] = {}
    if threads == 1 or len(tasks) == 1:
        for task in tasks:
            idx, rep, out = _run_rep_task(task)
            counts[(idx, rep)] = out
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for idx, rep, out in pool.map(_run_rep_task, tasks, chunksize=4):
                counts[(idx, rep)] = out
    rows = []
    for i, s in enumerate(scenarios):
        for method in METHODS:
            Rs = [counts[(i, rep)][method][0] for rep in range(s.reps)]
            Fs = [counts[(i, rep)][method][1] for rep in range(s.reps)]
            mr = _counts_to_result(method, Rs, Fs, s)
            rows.append(
                {
                    "scenario_id": s.scenario_id,
                    "K": s.K,
                    "n": s.n,
                    "variance_mode": s.variance_mode,
                    "xi": s.xi,
                    "alpha": s.alpha,
                    "method": method,
                    "fdr": mr.fdr_hat,
                    "fdr_se": mr.se_fdr,
                    "power": mr.power_hat,
                    "power_se": mr.se_power,
                }
            )
    return rows


def default_scenarios(
    xis: Sequence[float] = (2.0, 3.0, 4.0, 5.0, 6.0),
    full_scale: bool = False,
    seed: int = 20240801,
    alpha: float = 0.1,
) -> list[Scenario]:
    """Desk-scale grid (K=500, 50 reps) or the full-protocol grid (K=2000, 200)."""
    K = 2000 if full_scale else 500
    reps = 200 if full_scale else 50
    out = []
    index = 0
    for n in (5, 10):
        for mode in ("constant", "uniform"):
            for xi in xis:
                out.append(
                    Scenario(
                        K=K,
                        n=n,
                        n_nulls=int(round(0.9 * K)),
                        xi=float(xi),
                        variance_mode=mode,
                        alpha=alpha,
                        reps=reps,
                        seed=seed + 1000 * index,
                    )
                )
                index += 1
    return out


def write_results_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in RESULT_COLUMNS})


def plot_data_rows(rows: Sequence[dict]) -> list[dict]:
    """Long-format panel data: power against effect size, one panel per
    (group size, variance mode), one line per method."""
    return [
        {
            "n": row["n"],
            "variance_mode": row["variance_mode"],
            "xi": row["xi"],
            "method": row["method"],
            "power": row["power"],
            "power_se": row["power_se"],
        }
        for row in rows
    ]
