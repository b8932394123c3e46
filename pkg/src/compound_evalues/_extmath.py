"""Extended-arithmetic conventions and small numerical helpers.

All conventions for 0, infinity and division live here so that the modules
cannot drift apart:

* e-value weighting uses ``inf * 0 = inf``;
* p-value weighting uses ``0 / 0 = 0`` and ``x / 0 = inf`` for ``x > 0``;
* generic density ratios use ``0 / 0 = 0`` and ``x / 0 = inf`` for ``x > 0``.

NaN is never a legal value anywhere; it raises immediately.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

__all__ = [
    "require_no_nan",
    "weight_evalues",
    "weight_pvalues",
    "extended_ratio",
    "tree_sum",
    "tree_mean",
]


def require_no_nan(values: np.ndarray, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.isnan(arr).any():
        raise DataError(f"{name} contains NaN")
    return arr


def weight_evalues(e: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Elementwise e * w with the convention inf * 0 = inf."""
    e = np.asarray(e, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(invalid="ignore"):
        out = e * w
    out[np.isinf(e) & (w == 0.0)] = np.inf
    return out


def weight_pvalues(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Elementwise p / w with 0/0 = 0 and x/0 = inf for x > 0."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    out = np.empty_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(p, w, out=out)
    zero_w = w == 0.0
    out[zero_w & (p == 0.0)] = 0.0
    out[zero_w & (p > 0.0)] = np.inf
    return out


def extended_ratio(num: float, den: float) -> float:
    """num / den with 0/0 = 0 and x/0 = inf for x > 0."""
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def tree_sum(x: np.ndarray) -> float:
    """Pairwise-tree reduction; result depends only on element order."""
    arr = np.asarray(x, dtype=float).ravel()
    n = arr.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        arr = np.concatenate([arr[:half] + arr[half : 2 * half], arr[2 * half : n]])
        n = arr.size
    return float(arr[0])


def tree_mean(x: np.ndarray) -> float:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("tree_mean of empty array")
    return tree_sum(arr) / arr.size
