"""Fundamental value types, calibrators, and compound-preserving combinations.

An e-value vector carries one nonnegative (possibly infinite) entry per
hypothesis; a p-value vector carries one nonnegative entry per hypothesis.
The compound constraint ties the whole vector together: the expectations of
the null entries must sum to at most K, instead of each being at most 1.
Calibration, weighting, and convex combination all preserve that constraint.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._extmath import require_no_nan, weight_evalues, weight_pvalues
from .errors import ConfigError, DataError

__all__ = [
    "EVector",
    "PVector",
    "Calibrator",
    "ApproxBudget",
    "calibrate_p_to_e",
    "calibrate_e_to_p",
    "convex_combine",
    "apply_weights",
    "epsilon_to_delta",
]


def _as_mask(mask, k: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    arr = np.asarray(mask, dtype=bool)
    if arr.shape != (k,):
        raise DataError(f"null_mask has shape {arr.shape}, expected ({k},)")
    arr.setflags(write=False)
    return arr


class _ValueVector:
    """Shared behaviour of EVector and PVector: immutable array + null mask."""

    _allow_infinite = True

    def __init__(self, values, null_mask=None):
        arr = require_no_nan(values, type(self).__name__).ravel().copy()
        if arr.size < 1:
            raise DataError("need at least one hypothesis")
        if (arr < 0).any():
            raise DataError(f"{type(self).__name__} entries must be >= 0")
        arr.setflags(write=False)
        self.values = arr
        self.null_mask = _as_mask(null_mask, arr.size)

    @property
    def K(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        same_mask = (self.null_mask is None) == (other.null_mask is None) and (
            self.null_mask is None or bool(np.array_equal(self.null_mask, other.null_mask))
        )
        return bool(np.array_equal(self.values, other.values)) and same_mask

    def __repr__(self):
        return f"{type(self).__name__}({self.values!r}, null_mask={self.null_mask!r})"

    def to_csv(self, path) -> None:
        """Write a single-column CSV with header ``value`` (+ ``is_null``)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh)
        if self.null_mask is None:
            writer.writerow(["value"])
            for v in self.values:
                writer.writerow([_fmt(v)])
        else:
            writer.writerow(["value", "is_null"])
            for v, m in zip(self.values, self.null_mask):
                writer.writerow([_fmt(v), int(m)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.read_csv(fh)

    @classmethod
    def read_csv(cls, fh):
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "value":
            raise DataError("values CSV must start with a 'value' header")
        with_mask = len(header) > 1 and header[1].strip() == "is_null"
        vals, mask = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals.append(float(row[0]))
            except ValueError as exc:
                raise DataError(f"line {lineno}: bad value {row[0]!r}") from exc
            if math.isnan(vals[-1]):
                raise DataError(f"line {lineno}: NaN value")
            if with_mask:
                if len(row) < 2 or row[1].strip() not in {"0", "1"}:
                    raise DataError(f"line {lineno}: is_null must be 0 or 1")
                mask.append(row[1].strip() == "1")
        if not vals:
            raise DataError("values CSV has no rows")
        return cls(np.array(vals), np.array(mask) if with_mask else None)


def _fmt(v: float) -> str:
    if v == np.inf:
        return "inf"
    return repr(float(v))


class EVector(_ValueVector):
    """Length-K vector of extended-nonnegative e-values (inf allowed)."""


class PVector(_ValueVector):
    """Length-K vector of nonnegative p-values."""


_HARMONIC_CACHE: dict[int, float] = {}


def _harmonic(k: int) -> float:
    if k not in _HARMONIC_CACHE:
        _HARMONIC_CACHE[k] = float(np.sum(1.0 / np.arange(1, k + 1)))
    return _HARMONIC_CACHE[k]


@dataclass(frozen=True)
class Calibrator:
    """A p-to-e calibrator: decreasing h on [0, 1], zero beyond 1, integral <= 1.

    Three kinds are supported:

    * ``power``: h(p) = kappa * p^(kappa-1) for kappa in (0, 1); the standard
      admissible one-parameter family (kappa = 1/2 by default elsewhere);
    * ``by_step``: the step calibrator h(p) = T(alpha / (l_K p)) / alpha with
      T(x) = K / ceil(K / x) for x >= 1 (else 0) and l_K = sum_{k<=K} 1/k,
      which turns the Benjamini-Yekutieli procedure into an e-BH run;
    * ``custom_table``: a right-continuous, piecewise-constant decreasing
      table on [0, 1] whose exact integral is checked at construction.
    """

    kind: str
    kappa: Optional[float] = None
    K: Optional[int] = None
    alpha: Optional[float] = None
    xs: Optional[np.ndarray] = field(default=None, repr=False)
    vs: Optional[np.ndarray] = field(default=None, repr=False)

    QUAD_TOL = 1e-9

    @staticmethod
    def power(kappa: float = 0.5) -> "Calibrator":
        if not 0.0 < kappa < 1.0:
            raise ConfigError("power calibrator needs kappa in (0, 1)")
        return Calibrator(kind="power", kappa=float(kappa))

    @staticmethod
    def by_step(K: int, alpha: float) -> "Calibrator":
        if int(K) != K or K < 1:
            raise ConfigError("by_step calibrator needs a positive integer K")
        if not 0.0 < alpha < 1.0:
            raise ConfigError("by_step calibrator needs alpha in (0, 1)")
        return Calibrator(kind="by_step", K=int(K), alpha=float(alpha))

    @staticmethod
    def from_table(xs: Sequence[float], vs: Sequence[float]) -> "Calibrator":
        xs = np.asarray(xs, dtype=float)
        vs = np.asarray(vs, dtype=float)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size == 0:
            raise ConfigError("table calibrator needs matching 1-d xs and vs")
        if xs[0] != 0.0 or (np.diff(xs) <= 0).any() or xs[-1] > 1.0:
            raise ConfigError("table knots must start at 0, increase strictly, and stay in [0, 1]")
        if (np.diff(vs) > 0).any():
            raise ConfigError("table values must be nonincreasing")
        if (vs < 0).any():
            raise ConfigError("table values must be nonnegative on [0, 1]")
        cal = Calibrator(kind="custom_table", xs=xs, vs=vs)
        total = cal.integral()
        if total > 1.0 + Calibrator.QUAD_TOL:
            raise ConfigError(f"table integrates to {total} > 1 on [0, 1]")
        return cal

    def integral(self) -> float:
        """Exact integral of h over [0, 1]."""
        if self.kind == "power":
            return 1.0
        if self.kind == "custom_table":
            widths = np.diff(np.concatenate([self.xs, [1.0]]))
            return float(np.sum(self.vs * widths))
        if self.kind == "by_step":
            # h is a step function of p with jumps at p = alpha*j / (l_K*K), j=1..K
            lk = _harmonic(self.K)
            edges = self.alpha * np.arange(0, self.K + 1) / (lk * self.K)
            total = 0.0
            for j in range(1, self.K + 1):
                lo, hi = edges[j - 1], min(edges[j], 1.0)
                if hi <= lo:
                    break
                # on (edges[j-1], edges[j]], ceil(K/x) = j with x = alpha/(l_K p)
                total += (hi - lo) * (self.K / j) / self.alpha
            return total
        raise ConfigError(f"unknown calibrator kind {self.kind!r}")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 0
        p = np.atleast_1d(p)
        if np.isnan(p).any():
            raise DataError("p-values contain NaN")
        if (p < 0).any():
            raise DataError("p-values must be nonnegative")
        out = np.zeros_like(p)
        inside = p <= 1.0
        if self.kind == "power":
            kappa = self.kappa
            pos = inside & (p > 0)
            out[pos] = kappa * p[pos] ** (kappa - 1.0)
            out[inside & (p == 0)] = np.inf
        elif self.kind == "by_step":
            lk = _harmonic(self.K)
            x = weight_pvalues(np.full_like(p, self.alpha), lk * p)
            t = np.zeros_like(p)
            finite = np.isfinite(x) & (x >= 1.0)
            # guard the ceiling against upstream rounding: arguments sitting
            # exactly on a breakpoint K/j must not fall to the next step
            ratio = self.K / x[finite]
            t[finite] = self.K / np.ceil(ratio - 1e-12 * ratio - 1e-12)
            t[np.isinf(x)] = self.K
            out = t / self.alpha
        elif self.kind == "custom_table":
            idx = np.searchsorted(self.xs, p[inside], side="right") - 1
            out[inside] = self.vs[idx]
        else:
            raise ConfigError(f"unknown calibrator kind {self.kind!r}")
        return float(out[0]) if scalar else out


def calibrate_p_to_e(p: PVector, c: Calibrator) -> EVector:
    """Apply a p-to-e calibrator elementwise; the null mask passes through."""
    return EVector(c(p.values), null_mask=p.null_mask)


def calibrate_e_to_p(e: EVector) -> PVector:
    """The unique admissible e-to-p map: p = min(1/e, 1)."""
    with np.errstate(divide="ignore"):
        inv = np.where(e.values > 0, 1.0 / e.values, np.inf)
    return PVector(np.minimum(inv, 1.0), null_mask=e.null_mask)


def convex_combine(vectors: Sequence[EVector], weights) -> EVector:
    """Convex combination of e-value vectors; infinities absorb positive weight."""
    if not vectors:
        raise ConfigError("need at least one vector")
    weights = require_no_nan(weights, "weights").ravel()
    if weights.size != len(vectors):
        raise ConfigError("one weight per vector required")
    if (weights < 0).any():
        raise ConfigError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigError(f"weights sum to {weights.sum()}, need 1")
    k = vectors[0].K
    for v in vectors:
        if v.K != k:
            raise DataError("all vectors must share the same length K")
    out = np.zeros(k)
    for v, w in zip(vectors, weights):
        if w > 0:
            out = out + w * v.values  # inf * positive stays inf
    masks = [v.null_mask for v in vectors]
    mask = masks[0]
    for m in masks[1:]:
        if (mask is None) != (m is None) or (mask is not None and not np.array_equal(mask, m)):
            mask = None
            break
    return EVector(out, null_mask=mask)


def apply_weights(e_or_p, w):
    """Deterministic weighting with budget sum(w) <= K.

    E-values are multiplied by w (with inf * 0 = inf); p-values are divided
    by w (with 0/0 = 0 and x/0 = inf).
    """
    w = require_no_nan(w, "weights").ravel()
    vec = e_or_p
    if w.size != vec.K:
        raise DataError("weights must have length K")
    if (w < 0).any():
        raise ConfigError("weights must be nonnegative")
    if w.sum() > vec.K * (1.0 + 1e-12):
        raise ConfigError(f"weight budget violated: sum(w) = {w.sum()} > K = {vec.K}")
    if isinstance(vec, EVector):
        return EVector(weight_evalues(vec.values, w), null_mask=vec.null_mask)
    if isinstance(vec, PVector):
        return PVector(weight_pvalues(vec.values, w), null_mask=vec.null_mask)
    raise ConfigError("apply_weights expects an EVector or a PVector")


@dataclass(frozen=True)
class ApproxBudget:
    """The (epsilon, delta) slack pair of an approximate construction."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon >= 0.0):
            raise ConfigError("epsilon must be >= 0")
        if not (0.0 <= self.delta <= 1.0):
            raise ConfigError("delta must lie in [0, 1]")


def epsilon_to_delta(b: ApproxBudget) -> ApproxBudget:
    """Trade all multiplicative slack for additive slack: (e, d) -> (0, (e+d)/(1+e))."""
    return ApproxBudget(0.0, (b.epsilon + b.delta) / (1.0 + b.epsilon))
