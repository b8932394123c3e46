"""Normal/chi-square likelihood machinery, NPMLE, and universal inference.

Everything here works with the one-sample normal scale family: each
hypothesis observes an i.i.d. normal sample whose null mean is zero and
whose variance is a nuisance parameter. The marginal density of the
unbiased variance estimate is a scaled chi-square; mixing it over a
variance distribution G gives the marginal likelihood that the NPMLE
maximizes. Likelihood-ratio statistics of mixture numerators over mixture
(or profiled) denominators produce the optimal-discovery, UI, LUI, and CUI
e-values.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammainc, gammaln, logsumexp

from ._extmath import extended_ratio, require_no_nan
from ._simplex import DenseSimplex
from .core import EVector
from .errors import ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "DiscreteMixture",
    "SummaryStats",
    "Localization",
    "chisq_scale_density",
    "chisq_scale_cdf",
    "normal_loglik",
    "bayes_factor",
    "odp_evalues",
    "odp_general_utility",
    "default_variance_grid",
    "npmle_fit",
    "npmle_certificate",
    "build_localization",
    "ui_evalue",
    "lui_evalue",
    "cui_evalue",
    "CuiSolver",
]


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class DiscreteMixture:
    """Grid-supported distribution: variance atoms or (lambda, variance) pairs.

    One-dimensional supports must be strictly increasing. Two-dimensional
    supports hold one (lambda, sigma^2) pair per row.
    """

    support: np.ndarray
    weights: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, DiscreteMixture):
            return NotImplemented
        return bool(
            np.array_equal(self.support, other.support)
            and np.array_equal(self.weights, other.weights)
        )

    def __post_init__(self):
        support = require_no_nan(np.asarray(self.support, dtype=float), "support")
        weights = require_no_nan(np.asarray(self.weights, dtype=float), "weights")
        if support.ndim == 1:
            if support.size == 0 or (np.diff(support) <= 0).any():
                raise ConfigError("1-d mixture support must be nonempty and strictly increasing")
        elif support.ndim == 2:
            if support.shape[1] != 2 or support.shape[0] == 0:
                raise ConfigError("2-d mixture support must have rows (lambda, sigma2)")
            if (support[:, 1] <= 0).any():
                raise ConfigError("variance coordinates must be positive")
        else:
            raise ConfigError("mixture support must be 1-d or 2-d")
        if weights.shape != (support.shape[0],):
            raise ConfigError("one weight per support point required")
        if (weights < 0).any():
            raise ConfigError("mixture weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ConfigError(f"mixture weights sum to {weights.sum()}, need 1")
        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @staticmethod
    def point(value) -> "DiscreteMixture":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if value.size == 1:
            return DiscreteMixture(value, np.ones(1))
        return DiscreteMixture(value.reshape(1, 2), np.ones(1))

    @staticmethod
    def product(h: "DiscreteMixture", g: "DiscreteMixture") -> "DiscreteMixture":
        """Independent product H (x) G over (lambda, sigma^2) pairs."""
        if h.support.ndim != 1 or g.support.ndim != 1:
            raise ConfigError("product expects two 1-d mixtures")
        lam, s2 = np.meshgrid(h.support, g.support, indexing="ij")
        pairs = np.column_stack([lam.ravel(), s2.ravel()])
        w = np.outer(h.weights, g.weights).ravel()
        return DiscreteMixture(pairs, w / w.sum())

    def cdf(self, t):
        if self.support.ndim != 1:
            raise ConfigError("cdf is only defined for 1-d mixtures")
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.support, t, side="right")
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[idx]

    def to_csv(self, path) -> None:
        """Two-column CSV with header ``support,weight`` (1-d mixtures)."""
        if self.support.ndim != 1:
            raise ConfigError("CSV serialization is only defined for 1-d mixtures")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["support", "weight"])
            for s, w in zip(self.support, self.weights):
                writer.writerow([repr(float(s)), repr(float(w))])

    @staticmethod
    def from_csv(path) -> "DiscreteMixture":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["support", "weight"]:
                raise DataError("mixture CSV must start with a 'support,weight' header")
            support, weights = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    support.append(float(row[0]))
                    weights.append(float(row[1]))
                except (IndexError, ValueError) as exc:
                    raise DataError(f"line {lineno}: bad mixture row") from exc
        return DiscreteMixture(np.array(support), np.array(weights))


@dataclass(frozen=True)
class SummaryStats:
    """Per-group summaries: mean, uncentered second moment, unbiased variance."""

    xbar: float
    s2: float
    sigma_hat2: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DataError("need integer group size n >= 2")
        if np.isnan([self.xbar, self.s2, self.sigma_hat2]).any():
            raise DataError("summary statistics contain NaN")
        if self.s2 < 0 or self.sigma_hat2 < 0:
            raise DataError("second moments cannot be negative")
        lhs = self.n * self.s2
        rhs = (self.n - 1) * self.sigma_hat2 + self.n * self.xbar**2
        if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs), abs(rhs)):
            raise DataError(
                f"inconsistent summaries: n*s2 = {lhs} but (n-1)*sigma_hat2 + n*xbar^2 = {rhs}"
            )

    @staticmethod
    def from_data(x) -> "SummaryStats":
        x = require_no_nan(x, "sample").ravel()
        if x.size < 2:
            raise DataError("need at least two observations per group")
        n = x.size
        xbar = float(np.mean(x))
        s2 = float(np.mean(x**2))
        sigma_hat2 = float(np.sum((x - xbar) ** 2) / (n - 1))
        return SummaryStats(xbar=xbar, s2=s2, sigma_hat2=sigma_hat2, n=n)

    @property
    def s(self) -> float:
        return float(np.sqrt(self.s2))

    @property
    def sigma_hat(self) -> float:
        return float(np.sqrt(self.sigma_hat2))


@dataclass(frozen=True)
class Localization:
    """DKW-style band around the ECDF of the sample variances.

    The band half-width is sqrt((1 + log(2/delta)) / (2K)); any variance
    distribution whose marginal CDF stays inside the band at every point is
    in the localization, and enforcing the band only at ``constraint_points``
    relaxes (never shrinks) the set.
    """

    radius: float
    delta: float
    ecdf_knots: np.ndarray
    constraint_points: np.ndarray

    def __post_init__(self):
        knots = np.sort(require_no_nan(self.ecdf_knots, "ecdf_knots").ravel())
        points = require_no_nan(self.constraint_points, "constraint_points").ravel()
        if knots.size < 1:
            raise ConfigError("localization needs at least one sample point")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        expected = dkw_radius(knots.size, self.delta)
        if abs(self.radius - expected) > 1e-12:
            raise ConfigError(f"radius {self.radius} does not match the band formula {expected}")
        knots.setflags(write=False)
        points.setflags(write=False)
        object.__setattr__(self, "ecdf_knots", knots)
        object.__setattr__(self, "constraint_points", points)

    @property
    def K(self) -> int:
        return self.ecdf_knots.size

    def ecdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.searchsorted(self.ecdf_knots, t, side="right") / self.K


def dkw_radius(K: int, delta: float) -> float:
    return float(np.sqrt((1.0 + np.log(2.0 / delta)) / (2.0 * K)))


def build_localization(sigma_hat2, delta: float, max_points: int = 50) -> Localization:
    """Band around the variance ECDF, enforced at up to 50 sample quantiles."""
    sample = require_no_nan(sigma_hat2, "sigma_hat2").ravel()
    if sample.size < 1:
        raise DataError("need at least one sample variance")
    if (sample < 0).any():
        raise DataError("sample variances cannot be negative")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    srt = np.sort(sample)
    m = min(max_points, srt.size)
    ranks = np.unique(np.round(np.linspace(0, srt.size - 1, m)).astype(int))
    points = np.unique(srt[ranks])
    return Localization(
        radius=dkw_radius(srt.size, delta),
        delta=delta,
        ecdf_knots=srt,
        constraint_points=points,
    )


# ---------------------------------------------------------------------------
# densities


def _check_nu(nu: int) -> int:
    if int(nu) != nu:
        raise DataError("degrees of freedom must be an integer")
    if nu < 2:
        raise DataError("degrees of freedom must be >= 2 (the density is unbounded for nu = 1)")
    return int(nu)


def chisq_scale_logpdf(sigma_hat2, sigma2, nu: int):
    """Log density of the unbiased variance estimate given the true variance.

    sigma_hat2 ~ sigma2 * chisq(nu) / nu. Broadcasts over both arguments;
    sigma_hat2 = 0 maps to -inf for nu > 2 and to -log(sigma2) for nu = 2.
    """
    nu = _check_nu(nu)
    u = np.asarray(sigma_hat2, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if (u < 0).any():
        raise DataError("sigma_hat2 must be nonnegative")
    if (s2 <= 0).any():
        raise DataError("sigma2 must be positive")
    half = 0.5 * nu
    const = half * np.log(nu) - half * np.log(2.0) - gammaln(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = const + (half - 1.0) * np.log(u) - half * np.log(s2) - nu * u / (2.0 * s2)
    if nu == 2:
        out = np.where(u == 0.0, const - half * np.log(s2), out)
    else:
        out = np.where(u == 0.0, -np.inf, out)
    return out


def chisq_scale_density(sigma_hat2, sigma2, nu: int):
    """Density of sigma_hat2 given sigma2 (scaled chi-square with nu df)."""
    out = np.exp(chisq_scale_logpdf(sigma_hat2, sigma2, nu))
    return float(out) if np.ndim(out) == 0 else out


def chisq_scale_cdf(t, sigma2, nu: int):
    """CDF of the scaled chi-square variance estimate, via the regularized
    lower incomplete gamma function."""
    nu = _check_nu(nu)
    t = np.asarray(t, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if (s2 <= 0).any():
        raise DataError("sigma2 must be positive")
    out = gammainc(0.5 * nu, nu * np.clip(t, 0.0, None) / (2.0 * s2))
    return float(out) if np.ndim(out) == 0 else out


def normal_loglik(x, lam: float, sigma2: float) -> float:
    """Log likelihood of an i.i.d. N(lam * sigma, sigma^2) sample."""
    x = require_no_nan(x, "sample").ravel()
    if sigma2 <= 0:
        raise DataError("sigma2 must be positive")
    n = x.size
    sigma = np.sqrt(sigma2)
    return float(-0.5 * n * np.log(2.0 * np.pi * sigma2) - np.sum((x - lam * sigma) ** 2) / (2.0 * sigma2))


def _scale_loglik_grid(sumsq, n: int, sigma2):
    """log p_{sigma2}(x) from the sufficient statistic sum(x^2); broadcasts
    (K, 1) against (1, B)."""
    return -0.5 * n * np.log(2.0 * np.pi * sigma2) - sumsq / (2.0 * sigma2)


def _mean_scale_loglik_grid(sumsq, sumx, n: int, lam, sigma2):
    """log p_{lam, sigma2}(x) from (sum x, sum x^2)."""
    return (
        _scale_loglik_grid(sumsq, n, sigma2)
        + lam * sumx / np.sqrt(sigma2)
        - 0.5 * n * lam**2
    )


# ---------------------------------------------------------------------------
# mixture likelihood ratios


def bayes_factor(x, G: DiscreteMixture, Q: DiscreteMixture) -> float:
    """Ratio of the Q-mixture likelihood to the G-mixture null likelihood.

    G mixes the null scale family over sigma^2; Q mixes the mean-scale
    family over (lambda, sigma^2) pairs. Both integrals are accumulated in
    log space; a 0/0 ratio returns 0 and x/0 returns inf.
    """
    x = require_no_nan(x, "sample").ravel()
    if G.support.ndim != 1:
        raise ConfigError("G must be a 1-d mixture over variances")
    if (G.support <= 0).any():
        raise ConfigError("G must be supported on positive variances")
    if Q.support.ndim != 2:
        raise ConfigError("Q must be a 2-d mixture over (lambda, sigma2) pairs")
    n = x.size
    sumsq = float(np.sum(x**2))
    sumx = float(np.sum(x))
    gw = G.weights > 0
    log_den = logsumexp(
        np.log(G.weights[gw]) + _scale_loglik_grid(sumsq, n, G.support[gw])
    )
    qw = Q.weights > 0
    log_num = logsumexp(
        np.log(Q.weights[qw])
        + _mean_scale_loglik_grid(sumsq, sumx, n, Q.support[qw, 0], Q.support[qw, 1])
    )
    if np.isneginf(log_den):
        return 0.0 if np.isneginf(log_num) else np.inf
    with np.errstate(over="ignore"):
        return float(np.exp(log_num - log_den))


def odp_evalues(data, null_densities, alt_densities) -> EVector:
    """Optimal discovery e-values: one shared mixture likelihood ratio.

    The statistic s(x) = sum_j q_j(x) / sum_j p_j(x) is evaluated at each
    hypothesis' own sample, making the construction simple separable.
    """
    K = len(data)
    if K < 1:
        raise ConfigError("need at least one hypothesis")
    if len(null_densities) != K or len(alt_densities) != K:
        raise ConfigError("need one null and one alternative density per hypothesis")
    values = np.empty(K)
    for k, x in enumerate(data):
        den = float(sum(p(x) for p in null_densities))
        num = float(sum(q(x) for q in alt_densities))
        if den < 0 or num < 0:
            raise DataError("densities must be nonnegative")
        values[k] = extended_ratio(num, den)
        if values[k] == np.inf:
            logger.warning("all null densities vanish at hypothesis %d; e-value is inf", k + 1)
    return EVector(values)


def odp_general_utility(
    s_odp_value: float, h: float, normalizer: float, clip: Optional[float] = None
) -> float:
    """Power-transformed, optionally clipped, normalized discovery statistic.

    The caller supplies the normalizer: the null-mixture expectation of the
    (possibly clipped) transformed statistic, obtained by quadrature or MC.
    """
    if not 0.0 < h < 1.0:
        raise ConfigError("h must lie in (0, 1)")
    if not normalizer > 0:
        raise ConfigError("normalizer must be positive")
    if s_odp_value < 0:
        raise DataError("the discovery statistic is nonnegative")
    if clip is not None and clip <= 0:
        raise ConfigError("clip must be positive")
    with np.errstate(over="ignore"):
        t = float(np.asarray(s_odp_value, dtype=float) ** (1.0 / (1.0 - h)))
    if clip is not None:
        t = min(t, clip)
    return t / normalizer


# ---------------------------------------------------------------------------
# NPMLE


def default_variance_grid(lo: float = 1e-3, hi: float = 1e3, size: int = 600) -> np.ndarray:
    """Logarithmically equispaced variance grid."""
    if not 0 < lo < hi:
        raise ConfigError("need 0 < lo < hi")
    return np.exp(np.linspace(np.log(lo), np.log(hi), size))


def _likelihood_matrix(sigma_hat2, nu, grid):
    logL = chisq_scale_logpdf(sigma_hat2[:, None], grid[None, :], nu)
    rowmax = logL.max(axis=1, keepdims=True)
    if not np.isfinite(rowmax).all():
        raise DataError("a sample variance has zero likelihood everywhere on the grid")
    return np.exp(logL - rowmax), rowmax[:, 0]


def _em_step(L, pi, K):
    f = L @ pi
    return pi * ((L.T @ (1.0 / f)) / K)


def _gap(L, pi, K) -> float:
    f = L @ pi
    return float((L.T @ (1.0 / f)).max() / K - 1.0)


def _loglik(L, pi, rowmax) -> float:
    return float(np.sum(np.log(L @ pi) + rowmax))


def _newton_refine(L, pi, K, rowmax, gap_tol, max_outer=200):
    """Active-set refinement: quadratic model of the mixture log-likelihood
    solved as a nonnegative least-squares problem on the current support
    plus the gradient's local maxima, with a monotone line search."""
    B = pi.size
    pruned = False
    for _ in range(max_outer):
        f = L @ pi
        d = (L.T @ (1.0 / f)) / K
        if d.max() - 1.0 <= gap_tol:
            break
        locmax = np.zeros(B, dtype=bool)
        if B >= 3:
            locmax[1:-1] = (d[1:-1] >= d[:-2]) & (d[1:-1] >= d[2:])
        locmax[0] = d[0] >= d[min(1, B - 1)]
        locmax[-1] = d[-1] >= d[max(B - 2, 0)]
        support = pi > 0 if pruned else pi >= pi.max() * 1e-3
        active = np.flatnonzero(support | (locmax & (d > 1.0 - 1e-12)))
        A = L[:, active] / f[:, None]
        gamma = np.sqrt(K)
        Aaug = np.vstack([A, gamma * np.ones((1, active.size))])
        baug = np.concatenate([np.full(K, 2.0), [gamma]])
        try:
            w, _ = nnls(Aaug, baug, maxiter=max(200, 100 * active.size))
        except RuntimeError:
            w = None
        if w is None or w.sum() <= 0:
            pi = _em_step(L, pi, K)
            continue
        cand = np.zeros(B)
        cand[active] = w / w.sum()
        ll0 = _loglik(L, pi, rowmax)
        step = 1.0
        for _ in range(40):
            trial = (1.0 - step) * pi + step * cand
            if _loglik(L, trial, rowmax) >= ll0:
                pi = trial
                if step == 1.0:
                    pruned = True
                break
            step *= 0.5
        else:
            pi = _em_step(L, pi, K)
        pi = pi / pi.sum()
    return pi


def npmle_fit(
    sigma_hat2,
    nu: int,
    grid,
    *,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    gap_tol: float = 1e-6,
    accelerate: bool = True,
) -> DiscreteMixture:
    """Nonparametric MLE of the variance distribution on a fixed grid.

    Multiplicative (EM) updates increase the mixture log-likelihood at every
    step; with ``accelerate`` (the default) a short EM warm-up is followed by
    active-set Newton refinement, which is what makes the first-order
    certificate below reachable at realistic sizes. The returned mixture is
    accepted only if the certificate
    max_l (1/K) sum_k p(u_k | grid_l) / f(u_k) <= 1 + gap_tol holds;
    otherwise a NumericalError carrying the achieved gap is raised.
    """
    sample = require_no_nan(sigma_hat2, "sigma_hat2").ravel()
    if sample.size < 1:
        raise DataError("need at least one sample variance")
    grid = require_no_nan(grid, "grid").ravel()
    if grid.size < 1 or (grid <= 0).any() or (np.diff(grid) <= 0).any():
        raise ConfigError("grid must be positive and strictly increasing")
    K = sample.size
    L, rowmax = _likelihood_matrix(sample, nu, grid)
    pi = np.full(grid.size, 1.0 / grid.size)
    ll = _loglik(L, pi, rowmax)
    warmup = 30 if accelerate else max_iter
    for _ in range(warmup):
        pi = _em_step(L, pi, K)
        ll_new = _loglik(L, pi, rowmax)
        if ll_new < ll - 1e-9 * max(1.0, abs(ll)):
            raise NumericalError("EM log-likelihood decreased; numerical breakdown")
        if ll_new - ll < tol * max(1.0, abs(ll)):
            ll = ll_new
            break
        ll = ll_new
    if accelerate:
        pi = _newton_refine(L, pi, K, rowmax, gap_tol=min(gap_tol * 0.1, 1e-8))
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    gap = _gap(L, pi, K)
    if gap > gap_tol:
        raise NumericalError(
            f"NPMLE certificate failed: duality gap {gap:.3e} > {gap_tol:.1e}", gap=gap
        )
    return DiscreteMixture(grid, pi)


def npmle_certificate(g: DiscreteMixture, sigma_hat2, nu: int) -> tuple[float, float]:
    """Log-likelihood of the sample under g and the first-order duality gap."""
    sample = require_no_nan(sigma_hat2, "sigma_hat2").ravel()
    if g.support.ndim != 1:
        raise ConfigError("certificate expects a 1-d variance mixture")
    L, rowmax = _likelihood_matrix(sample, nu, g.support)
    return _loglik(L, g.weights, rowmax), _gap(L, g.weights, sample.size)


# ---------------------------------------------------------------------------
# universal inference


def _profile_log_denominator(x, grid) -> float:
    x = require_no_nan(x, "sample").ravel()
    sumsq = float(np.sum(x**2))
    return float(np.max(_scale_loglik_grid(sumsq, x.size, np.asarray(grid, dtype=float))))


def ui_evalue(x_k, numerator_density: Callable, grid) -> float:
    """Universal inference: numerator over the best null fit on the grid."""
    grid = require_no_nan(grid, "grid").ravel()
    if grid.size == 0:
        raise ConfigError("grid must be nonempty")
    den = float(np.exp(_profile_log_denominator(x_k, grid)))
    return extended_ratio(float(numerator_density(x_k)), den)


def lui_evalue(x_k, numerator_density: Callable, grid, conf_indices) -> float:
    """Localized universal inference: profile only over a confidence subset
    of the grid (given as indices into ``grid``)."""
    grid = require_no_nan(grid, "grid").ravel()
    idx = np.asarray(conf_indices, dtype=int).ravel()
    if idx.size == 0:
        raise ConfigError("confidence subset must be nonempty")
    if idx.min() < 0 or idx.max() >= grid.size:
        raise ConfigError("confidence subset indices outside the grid")
    den = float(np.exp(_profile_log_denominator(x_k, grid[idx])))
    return extended_ratio(float(numerator_density(x_k)), den)


class CuiSolver:
    """Shared linear program for compound universal inference e-values.

    The denominator of a CUI e-value is the largest mixture likelihood of
    the observed sample over all grid mixtures whose variance CDF stays
    within the localization band at every constraint point. The band
    constraints are fixed across hypotheses, so one simplex instance is
    built per sample and re-optimized per hypothesis with a warm start.

    The warm start makes an instance stateful: evaluating hypotheses in
    parallel requires one solver per worker (construction is cheap).
    """

    def __init__(self, loc: Localization, grid, nu: int):
        grid = require_no_nan(grid, "grid").ravel()
        if grid.size == 0 or (grid <= 0).any() or (np.diff(grid) <= 0).any():
            raise ConfigError("grid must be positive and strictly increasing")
        nu = _check_nu(nu)
        self.grid = grid
        self.nu = nu
        self.loc = loc
        B = grid.size
        ts = loc.constraint_points
        ecdf = loc.ecdf(ts)
        C = chisq_scale_cdf(ts[:, None], grid[None, :], nu)
        hi = ecdf + loc.radius
        lo = ecdf - loc.radius
        keep_hi = hi < 1.0  # a CDF mixture can never exceed 1: row vacuous otherwise
        keep_lo = lo > 0.0
        n_hi = int(keep_hi.sum())
        n_lo = int(keep_lo.sum())
        rows = np.vstack([np.ones((1, B)), C[keep_hi], C[keep_lo]])
        rhs = np.concatenate([[1.0], hi[keep_hi], lo[keep_lo]])
        slack = np.zeros((rows.shape[0], n_hi + n_lo))
        for i in range(n_hi):
            slack[1 + i, i] = 1.0
        for i in range(n_lo):
            slack[1 + n_hi + i, n_hi + i] = -1.0
        self._n_slack = n_hi + n_lo
        self._simplex = DenseSimplex(np.hstack([rows, slack]), rhs)
        self._cost = np.zeros(B + self._n_slack)

    def log_denominator(self, log_objective) -> float:
        """Optimal value (in logs) of the band-constrained mixture likelihood."""
        logc = np.asarray(log_objective, dtype=float)
        if logc.shape != self.grid.shape:
            raise ConfigError("objective must have one entry per grid point")
        scale = logc.max()
        if not np.isfinite(scale):
            return -np.inf
        self._cost[: self.grid.size] = np.exp(logc - scale)
        value, _ = self._simplex.solve(self._cost)
        if value <= 0.0:
            return -np.inf
        return float(np.log(value) + scale)

    def feasible_weights(self, prefer: Optional[np.ndarray] = None) -> np.ndarray:
        """Any grid mixture inside the localization band."""
        if prefer is not None:
            prefer = np.asarray(prefer, dtype=float)
            if prefer.shape == self.grid.shape and self._is_feasible(prefer):
                return prefer
        self._cost[:] = 0.0
        _, x = self._simplex.solve(self._cost)
        return x[: self.grid.size]

    def _is_feasible(self, pi: np.ndarray) -> bool:
        if (pi < 0).any() or abs(pi.sum() - 1.0) > 1e-9:
            return False
        ts = self.loc.constraint_points
        model = chisq_scale_cdf(ts[:, None], self.grid[None, :], self.nu) @ pi
        return bool(np.all(np.abs(model - self.loc.ecdf(ts)) <= self.loc.radius + 1e-12))

    def evalue(self, x_k, numerator_density: Callable) -> float:
        x = require_no_nan(x_k, "sample").ravel()
        sumsq = float(np.sum(x**2))
        logc = _scale_loglik_grid(sumsq, x.size, self.grid)
        log_den = self.log_denominator(logc)
        num = float(numerator_density(x))
        if np.isneginf(log_den):
            return 0.0 if num == 0.0 else np.inf
        with np.errstate(over="ignore"):
            return float(num * np.exp(-log_den))


def cui_evalue(
    x_k,
    numerator_density: Callable,
    loc: Localization,
    grid,
    nu: int,
    *,
    solver: Optional[CuiSolver] = None,
) -> float:
    """Compound universal inference e-value for one hypothesis.

    For repeated evaluation against the same localization, build one
    CuiSolver and pass it in; the band constraints are then set up once.
    """
    if solver is None:
        solver = CuiSolver(loc, grid, nu)
    return solver.evalue(x_k, numerator_density)
