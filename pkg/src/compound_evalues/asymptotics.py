"""Asymptotic e-value constructions and Monte Carlo budget estimators.

The studentized exponential tilt exp(lambda * t - lambda^2 / 2) is a valid
e-value only in the large-sample limit; the estimators here quantify how far
a construction is from the compound budget (the null e-value expectations
summing to at most K) on simulated scenarios, reporting means with standard
errors and, for approximate constructions, the empirical (epsilon, delta)
trade-off obtained by trimming whole replications.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._extmath import require_no_nan, tree_mean
from .core import ApproxBudget, EVector
from .errors import ConfigError, DataError
from .mixtures import DiscreteMixture, SummaryStats

__all__ = [
    "BudgetEstimate",
    "clt_evalue",
    "mixture_clt_evalue",
    "sum_of_squares_compound",
    "estimate_compound_budget",
    "estimate_approx_budget",
]


@dataclass(frozen=True)
class BudgetEstimate:
    """Monte Carlo estimate of the per-hypothesis compound budget.

    ``mean_budget`` estimates (1/K) sum over null k of E[E_k ^ cap]; a value
    at or below 1 is consistent with the compound constraint.
    """

    mean_budget: float
    std_error: float
    replications: int
    trimmed_at: Optional[float] = None

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("need at least one replication")
        if self.std_error < 0:
            raise ConfigError("standard error cannot be negative")

    def to_json_dict(self) -> dict:
        out = {
            "mean_budget": self.mean_budget,
            "std_error": self.std_error,
            "replications": self.replications,
        }
        if self.trimmed_at is not None:
            out["trimmed_at"] = self.trimmed_at
        return out


def _studentized(stats: SummaryStats, use_sigma_hat: bool) -> float:
    denom = stats.sigma_hat if use_sigma_hat else stats.s
    if denom <= 0.0:
        raise DataError("degenerate sample: the scale statistic is zero")
    return float(np.sqrt(stats.n) * stats.xbar / denom)


def clt_evalue(
    stats: SummaryStats,
    lam: float,
    symmetric: bool = False,
    use_sigma_hat: bool = False,
) -> float:
    """Exponentially tilted studentized statistic exp(lam*t - lam^2/2).

    The symmetric variant averages the tilts at +lam and -lam and is
    invariant under sign flips of the sample mean.
    """
    t = _studentized(stats, use_sigma_hat)
    if symmetric:
        with np.errstate(over="ignore"):
            return float(
                0.5 * np.exp(lam * t - 0.5 * lam**2) + 0.5 * np.exp(-lam * t - 0.5 * lam**2)
            )
    with np.errstate(over="ignore"):
        return float(np.exp(lam * t - 0.5 * lam**2))


def mixture_clt_evalue(stats: SummaryStats, g_lambda: DiscreteMixture) -> float:
    """Tilted statistic averaged over a compactly supported tilt mixture."""
    if g_lambda.support.ndim != 1:
        raise ConfigError("g_lambda must be a 1-d mixture over tilts")
    if not np.isfinite(g_lambda.support).all():
        raise ConfigError("tilt mixture must have bounded support")
    t = _studentized(stats, use_sigma_hat=False)
    lam = g_lambda.support
    with np.errstate(over="ignore"):
        terms = g_lambda.weights * np.exp(lam * t - 0.5 * lam**2)
    return float(terms.sum())


def sum_of_squares_compound(stats: Sequence[SummaryStats]) -> EVector:
    """Second-moment compound e-values E_k = K * S_k^2 / sum_j sigma_hat_j^2."""
    if len(stats) < 1:
        raise ConfigError("need at least one group")
    s2 = np.array([st.s2 for st in stats])
    total = float(np.sum([st.sigma_hat2 for st in stats]))
    if total <= 0.0:
        raise DataError("degenerate data: all sample variances are zero")
    return EVector(len(stats) * s2 / total)


def _null_budget(e: EVector, cap: Optional[float]) -> float:
    if e.null_mask is None:
        raise ConfigError("construction must attach a null mask to its e-values")
    if not e.null_mask.any():
        raise ConfigError("scenario has no null hypotheses")
    vals = e.values[e.null_mask]
    if cap is not None:
        vals = np.minimum(vals, cap)
    if np.isinf(vals).any():
        return np.inf
    return float(vals.sum() / e.K)


def estimate_compound_budget(
    generator: Callable[[int], object],
    construction: Callable[[object], EVector],
    reps: int,
    cap: Optional[float] = None,
) -> BudgetEstimate:
    """Monte Carlo estimate of (1/K) sum over null k of E[E_k ^ cap].

    ``generator`` maps a replication index to simulated data (it owns the
    seeding); ``construction`` maps that data to an EVector whose null mask
    identifies the true nulls.
    """
    if reps < 100:
        raise ConfigError("need at least 100 replications")
    budgets = np.empty(reps)
    for r in range(reps):
        budgets[r] = _null_budget(construction(generator(r)), cap)
    mean = tree_mean(budgets)
    sd = float(np.std(budgets, ddof=1)) if reps > 1 else 0.0
    return BudgetEstimate(
        mean_budget=mean,
        std_error=sd / float(np.sqrt(reps)),
        replications=reps,
        trimmed_at=cap,
    )


def estimate_approx_budget(
    generator: Callable[[int], object],
    construction: Callable[[object], EVector],
    reps: int,
    epsilon_grid,
) -> list[ApproxBudget]:
    """Empirical (epsilon, delta) budgets by trimming whole replications.

    For each epsilon, delta-hat is the smallest fraction of replications
    (the largest-budget ones, mimicking the exceptional event) that must be
    discarded for the remaining mass to average at most 1 + epsilon. One
    ApproxBudget per grid entry is returned.
    """
    if reps < 1000:
        raise ConfigError("need at least 1000 replications")
    eps = require_no_nan(epsilon_grid, "epsilon_grid").ravel()
    if eps.size == 0 or (eps < 0).any():
        raise ConfigError("epsilon grid must be nonempty and nonnegative")
    budgets = np.empty(reps)
    for r in range(reps):
        budgets[r] = _null_budget(construction(generator(r)), cap=None)
    asc = np.sort(budgets)
    # partial_sums[j] = sum of budgets after zeroing the j largest replications
    partial_sums = np.concatenate([[0.0], np.cumsum(asc)])
    out = []
    for e in eps:
        target = (1.0 + float(e)) * reps
        kept = partial_sums[1:]  # keeping the smallest 1..reps budgets
        ok = np.flatnonzero(kept <= target)
        n_keep = int(ok[-1] + 1) if ok.size else 0
        out.append(ApproxBudget(epsilon=float(e), delta=(reps - n_keep) / reps))
    return out
