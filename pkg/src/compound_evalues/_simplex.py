"""Dense revised simplex with Bland's rule for small equality-form LPs.

Solves max c.x subject to A x = b, x >= 0, for a fixed (A, b) and many
objective vectors in sequence. The constraint matrix never changes between
solves, so the optimal basis of one solve remains primal feasible for the
next and re-optimization usually takes a handful of pivots. Bland's entering
and leaving rules guarantee termination under degeneracy.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

_TOL_RED = 1e-9  # reduced-cost optimality tolerance
_TOL_PIV = 1e-11  # smallest acceptable pivot magnitude
_REFRESH = 120  # pivots between basis refactorizations
_MAX_PIVOTS = 100_000


class DenseSimplex:
    """Reusable simplex solver for one constraint system, many objectives."""

    def __init__(self, A, b):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise NumericalError("constraint system has inconsistent shapes")
        neg = b < 0
        A[neg] *= -1.0
        b[neg] *= -1.0
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.basis: np.ndarray | None = None

    # -- simplex core ------------------------------------------------------

    def _iterate(self, A, b, c, basis):
        # Dantzig pricing for speed; after a run of degenerate pivots the
        # entering/leaving rules fall back to Bland's, whose termination
        # guarantee rules out cycling.
        m = A.shape[0]
        Binv = np.linalg.inv(A[:, basis])
        xB = np.maximum(Binv @ b, 0.0)
        in_basis = np.zeros(A.shape[1], dtype=bool)
        in_basis[basis] = True
        pivots = 0
        since_refresh = 0
        degenerate_run = 0
        while True:
            y = c[basis] @ Binv
            red = c - y @ A
            red[in_basis] = 0.0
            bland = degenerate_run > 40
            if bland:
                candidates = np.flatnonzero(red > _TOL_RED)
                if candidates.size == 0:
                    return basis, xB
                entering = int(candidates[0])  # Bland: smallest index
            else:
                entering = int(np.argmax(red))
                if red[entering] <= _TOL_RED:
                    return basis, xB
            d = Binv @ A[:, entering]
            pos = d > _TOL_PIV
            if not pos.any():
                raise NumericalError("LP is unbounded")
            ratios = np.full(m, np.inf)
            ratios[pos] = xB[pos] / d[pos]
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if bland or ties.size > 1:
                leaving = int(ties[np.argmin(basis[ties])])  # Bland: smallest basic var
            else:
                leaving = int(ties[0])
            degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0
            in_basis[basis[leaving]] = False
            in_basis[entering] = True
            basis[leaving] = entering
            pivots += 1
            since_refresh += 1
            if pivots > _MAX_PIVOTS:
                raise NumericalError("simplex pivot limit exceeded")
            if since_refresh >= _REFRESH:
                Binv = np.linalg.inv(A[:, basis])
                xB = np.maximum(Binv @ b, 0.0)
                since_refresh = 0
            else:
                piv = d[leaving]
                Binv[leaving] /= piv
                rest = np.arange(m) != leaving
                Binv[rest] -= np.outer(d[rest], Binv[leaving])
                xB = xB - ratios[leaving] * d
                xB[leaving] = ratios[leaving]
                np.maximum(xB, 0.0, out=xB)

    # -- phase 1 -----------------------------------------------------------

    def _phase1(self):
        while True:
            m, n = self.m, self.n
            Aext = np.hstack([self.A, np.eye(m)])
            cost = np.concatenate([np.zeros(n), -np.ones(m)])
            basis = np.arange(n, n + m)
            basis, xB = self._iterate(Aext, self.b, cost, basis)
            art_level = xB[basis >= n].sum() if (basis >= n).any() else 0.0
            if art_level > 1e-7:
                raise NumericalError("LP is infeasible")
            art_rows = np.flatnonzero(basis >= n)
            if art_rows.size == 0:
                self.basis = basis
                return
            # artificials stuck at level zero: pivot them out or drop the row
            Binv = np.linalg.inv(Aext[:, basis])
            drop = []
            for i in art_rows:
                row = Binv[i] @ self.A
                row[basis[basis < n]] = 0.0
                j = np.flatnonzero(np.abs(row) > 1e-8)
                if j.size:
                    basis[i] = int(j[0])
                    Binv = np.linalg.inv(Aext[:, basis])
                else:
                    drop.append(int(i))
            if not drop:
                self.basis = basis
                return
            keep = np.setdiff1d(np.arange(m), drop)
            self.A = self.A[keep]
            self.b = self.b[keep]
            self.m = keep.size
            # restart phase 1 on the reduced, non-redundant system

    # -- public ------------------------------------------------------------

    def solve(self, c):
        """Maximize c.x; returns (objective value, solution vector)."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise NumericalError("objective has wrong length")
        if self.basis is None:
            self._phase1()
        basis, xB = self._iterate(self.A, self.b, c, self.basis.copy())
        self.basis = basis
        x = np.zeros(self.n)
        x[basis] = xB
        residual = np.abs(self.A @ x - self.b).max()
        if residual > 1e-6:
            # rebuild from scratch once before giving up
            self.basis = None
            self._phase1()
            basis, xB = self._iterate(self.A, self.b, c, self.basis.copy())
            self.basis = basis
            x = np.zeros(self.n)
            x[basis] = xB
            residual = np.abs(self.A @ x - self.b).max()
            if residual > 1e-6:
                raise NumericalError(f"simplex solution infeasible (residual {residual:.2e})")
        return float(c @ x), x
