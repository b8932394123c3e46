"""FDR-controlling procedures built on e-values and p-values.

The e-BH procedure rejects the hypotheses carrying the k* largest e-values,
where k* = max{k : k E_[k] / K >= 1/alpha}. Any FDR procedure at a known
level can be rewritten as e-BH applied to the implied compound e-values
(K / alpha) * V_k / (R v 1); that inversion powers the combination and
derandomization helpers below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._extmath import weight_pvalues
from .core import ApproxBudget, Calibrator, EVector, PVector, calibrate_p_to_e, convex_combine
from .errors import ConfigError, DataError, NumericalError

__all__ = [
    "ProcedureResult",
    "MergeSpec",
    "ebh",
    "weighted_pbh",
    "pbh",
    "by_procedure",
    "implied_compound_evalues",
    "tighten_compound",
    "derandomize",
    "merge_pvalues",
    "star_approx_fdr_bound",
]


@dataclass(frozen=True)
class ProcedureResult:
    """Outcome of a multiple testing procedure.

    ``rejected`` holds 1-based hypothesis numbers. ``F`` counts rejected true
    nulls and is only present when the simulation truth is known.
    """

    rejected: frozenset[int]
    R: int
    k_star: int
    F: Optional[int] = None

    def __post_init__(self):
        if self.R != len(self.rejected):
            raise ConfigError("R must equal |rejected|")
        if self.F is not None and self.F > self.R:
            raise ConfigError("F cannot exceed R")

    def mask(self, K: int) -> np.ndarray:
        out = np.zeros(K, dtype=bool)
        for idx in self.rejected:
            if not 1 <= idx <= K:
                raise ConfigError(f"rejected index {idx} outside 1..{K}")
            out[idx - 1] = True
        return out

    def to_json_dict(self) -> dict:
        out = {"rejected": sorted(self.rejected), "R": self.R, "k_star": self.k_star}
        if self.F is not None:
            out["F"] = self.F
        return out

    @staticmethod
    def from_json_dict(d: dict) -> "ProcedureResult":
        rejected = frozenset(int(i) for i in d["rejected"])
        return ProcedureResult(
            rejected=rejected,
            R=int(d.get("R", len(rejected))),
            k_star=int(d.get("k_star", len(rejected))),
            F=None if d.get("F") is None else int(d["F"]),
        )


def _false_count(rejected_mask: np.ndarray, null_mask) -> Optional[int]:
    if null_mask is None:
        return None
    return int(np.sum(rejected_mask & np.asarray(null_mask, bool)))


# Comparisons against 1/alpha use a relative slack so that constructions
# sitting exactly on the rejection boundary (e.g. the implied e-values of an
# FDR procedure, whose k* condition holds with equality in real arithmetic)
# are not lost to floating-point rounding.
_BOUNDARY_RTOL = 1e-12


def ebh(e: EVector, alpha: float) -> ProcedureResult:
    """The e-BH procedure at level alpha.

    Ties at the boundary e-value are broken deterministically (lowest
    hypothesis index first) so that exactly k* hypotheses are rejected.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    values = e.values
    K = e.K
    order = np.lexsort((np.arange(K), -values))  # value desc, index asc
    sorted_vals = values[order]
    ks = np.arange(1, K + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        passing = ks * sorted_vals / K >= (1.0 / alpha) * (1.0 - _BOUNDARY_RTOL)
    hits = np.flatnonzero(passing)
    k_star = int(hits[-1] + 1) if hits.size else 0
    rejected_idx = order[:k_star]
    mask = np.zeros(K, dtype=bool)
    mask[rejected_idx] = True
    return ProcedureResult(
        rejected=frozenset(int(i) + 1 for i in rejected_idx),
        R=k_star,
        k_star=k_star,
        F=_false_count(mask, e.null_mask),
    )


def weighted_pbh(p: PVector, w: EVector, alpha: float) -> ProcedureResult:
    """e-weighted p-BH: run BH on Q_k = P_k / W_k (0/0 = 0).

    With unit weights this is exactly the p-BH procedure.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if w.K != p.K:
        raise DataError("p-values and weights must share the same length")
    K = p.K
    q = weight_pvalues(p.values, w.values)
    order = np.lexsort((np.arange(K), q))  # Q asc, index asc
    q_sorted = q[order]
    ks = np.arange(1, K + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        passing = K * q_sorted / ks <= alpha * (1.0 + _BOUNDARY_RTOL)
    hits = np.flatnonzero(passing)
    k_star = int(hits[-1] + 1) if hits.size else 0
    rejected_idx = order[:k_star]
    mask = np.zeros(K, dtype=bool)
    mask[rejected_idx] = True
    return ProcedureResult(
        rejected=frozenset(int(i) + 1 for i in rejected_idx),
        R=k_star,
        k_star=k_star,
        F=_false_count(mask, p.null_mask),
    )


def pbh(p: PVector, alpha: float) -> ProcedureResult:
    """Plain Benjamini-Hochberg, i.e. weighted_pbh with unit weights."""
    return weighted_pbh(p, EVector(np.ones(p.K)), alpha)


def by_procedure(p: PVector, alpha: float) -> ProcedureResult:
    """Benjamini-Yekutieli via its calibrate-then-e-BH representation.

    The step calibrator route is the primary computation; the classical
    route (p-BH at level alpha / l_K) is evaluated as a cross-check and a
    mismatch raises, since the two are provably identical.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    K = p.K
    cal = Calibrator.by_step(K, alpha)
    res = ebh(calibrate_p_to_e(p, cal), alpha)
    lk = sum(1.0 / k for k in range(1, K + 1))
    direct = pbh(p, alpha / lk)
    if direct.rejected != res.rejected:
        raise NumericalError(
            "calibrated and direct BY routes disagree "
            f"({sorted(res.rejected)} vs {sorted(direct.rejected)})"
        )
    return res


def implied_compound_evalues(result: ProcedureResult, K: int, alpha: float) -> EVector:
    """Compound e-values implied by any FDR procedure run at level alpha.

    Rejected hypotheses carry K / (alpha * (R v 1)); the rest carry 0.
    Feeding these back into e-BH at the same level reproduces the original
    rejection set.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if K < 1:
        raise ConfigError("K must be >= 1")
    values = np.zeros(K)
    level = K / (alpha * max(result.R, 1))
    values[result.mask(K)] = level
    return EVector(values)


def tighten_compound(e: EVector, k_star_budget: float) -> EVector:
    """Rescale e-values by K / K* when the realized budget K* is below K."""
    if not 0.0 < k_star_budget <= e.K:
        raise ConfigError("budget K* must lie in (0, K]")
    return EVector(e.values * (e.K / k_star_budget), null_mask=e.null_mask)


def derandomize(
    runs: Sequence[tuple[EVector, float]],
    *,
    subsets: Optional[Sequence[Sequence[int]]] = None,
    K: Optional[int] = None,
) -> EVector:
    """Combine compound e-values from several procedure runs.

    Each run may cover only a subset of the global hypotheses (1-based
    indices in ``subsets``); untested hypotheses are padded with e-value 1
    before the convex combination. Weights must be deterministic and sum to
    one; random weights with unit expected sum are statistically valid but
    are the caller's responsibility and are not accepted here.
    """
    if not runs:
        raise ConfigError("need at least one run")
    vectors = [r[0] for r in runs]
    weights = np.array([r[1] for r in runs], dtype=float)
    if subsets is not None:
        if K is None:
            raise ConfigError("K is required when subsets are given")
        if len(subsets) != len(runs):
            raise ConfigError("one subset per run required")
        aligned = []
        for vec, sub in zip(vectors, subsets):
            idx = np.asarray(sub, dtype=int)
            if idx.size != vec.K:
                raise DataError("subset length must match the run's e-vector")
            if idx.size != np.unique(idx).size or idx.min() < 1 or idx.max() > K:
                raise DataError("subset indices must be distinct and lie in 1..K")
            full = np.ones(K)
            full[idx - 1] = vec.values
            aligned.append(EVector(full))
        vectors = aligned
    elif K is not None and any(v.K != K for v in vectors):
        raise DataError("runs are not aligned to the global index set")
    return convex_combine(vectors, weights)


@dataclass(frozen=True)
class MergeSpec:
    """Which e-weighted p-merging function to use.

    ``twice_mean`` and ``geometric`` use closed forms; ``custom`` evaluates
    the generic threshold representation for a piecewise-constant table f
    (decreasing, integral over [0, 1] at most 1, nonnegative on [0, 1] and
    nonpositive beyond 1).
    """

    kind: str
    xs: Optional[np.ndarray] = None
    vs: Optional[np.ndarray] = None

    @staticmethod
    def twice_mean() -> "MergeSpec":
        return MergeSpec(kind="twice_mean")

    @staticmethod
    def geometric() -> "MergeSpec":
        return MergeSpec(kind="geometric")

    @staticmethod
    def custom(xs, vs) -> "MergeSpec":
        xs = np.asarray(xs, dtype=float)
        vs = np.asarray(vs, dtype=float)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size == 0:
            raise ConfigError("custom merge table needs matching 1-d xs and vs")
        if xs[0] != 0.0 or (np.diff(xs) <= 0).any():
            raise ConfigError("table knots must start at 0 and increase strictly")
        if (np.diff(vs) > 0).any():
            raise ConfigError("table values must be nonincreasing")
        if (vs[xs < 1.0] < 0).any():
            raise ConfigError("f must be >= 0 on [0, 1)")
        if (vs[xs >= 1.0] > 0).any():
            raise ConfigError("f must be <= 0 on [1, inf)")
        uppers = np.concatenate([xs[1:], [np.inf]])
        widths = np.clip(np.minimum(uppers, 1.0) - np.minimum(xs, 1.0), 0.0, None)
        integral = float(np.sum(vs * widths))
        if integral > 1.0 + 1e-9:
            raise ConfigError(f"f integrates to {integral} > 1 on [0, 1]")
        return MergeSpec(kind="custom", xs=xs, vs=vs)

    def table_value(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.xs, x, side="right") - 1
        idx = np.clip(idx, 0, self.xs.size - 1)
        return self.vs[idx]


def merge_pvalues(p: PVector, e: EVector, spec: MergeSpec) -> float:
    """Merge arbitrarily dependent p-values using e-values as weights.

    Statistical validity needs the e-values to be compound and independent
    of the p-values; that independence is the caller's responsibility.
    """
    if p.K != e.K:
        raise DataError("p-values and e-values must share the same length")
    P = p.values
    E = e.values
    K = p.K
    if spec.kind == "twice_mean":
        den = E.sum() - K / 2.0
        if den <= 0.0:
            return 1.0
        return float(min((E * P).sum() / den, 1.0))
    if spec.kind == "geometric":
        ebar = E.sum() / K
        if ebar <= 0.0:
            return 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(E > 0, E * np.log(P), 0.0)
        if np.isnan(terms).any():  # 0 * log(0) -> excluded above; inf * 0 guarded
            raise DataError("invalid p-value/e-value combination")
        log_f = ebar + terms.sum() / (K * ebar)
        return float(min(np.exp(log_f), 1.0))
    if spec.kind == "custom":
        # F = inf{a in (0,1): (1/K) sum E_k f(P_k / a) >= 1}. The map
        # a -> g(a) is nondecreasing and piecewise constant, jumping only
        # where some P_k / a crosses a table knot; on (a_{j-1}, a_j] it
        # equals g(a_j), so the infimum is the left edge of the first
        # interval on which g >= 1.
        def g(a: float) -> float:
            return float(np.sum(E * spec.table_value(P / a)) / K)

        cands = (P[:, None] / spec.xs[None, 1:]).ravel()  # xs[0] = 0 never crossed
        cands = np.unique(cands[(cands > 0.0) & (cands < 1.0)])
        edges = np.concatenate([[0.0], cands])
        for j, a in enumerate(cands):
            if g(float(a)) >= 1.0:
                return float(edges[j])
        if g(1.0) >= 1.0:  # value on the final interval (last candidate, 1)
            return float(edges[-1])
        return 1.0
    raise ConfigError(f"unknown merge kind {spec.kind!r}")


def star_approx_fdr_bound(alpha: float, b: ApproxBudget, tail_prob: float) -> float:
    """FDR bound alpha (1+eps) + sqrt(delta) + P(R < K sqrt(delta))."""
    if not 0.0 <= tail_prob <= 1.0:
        raise ConfigError("tail probability must lie in [0, 1]")
    return alpha * (1.0 + b.epsilon) + float(np.sqrt(b.delta)) + tail_prob
