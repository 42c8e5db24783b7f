"""Dense two-phase revised simplex with Bland's rule.

Solves  min c.x  s.t.  A x = b, x >= 0  for the small dense programs this
package produces.  Bland's smallest-index rule on both the entering and the
leaving choice guarantees termination under degeneracy; determinism matters
more than pivot counts at this scale.  The basis system is re-solved from
scratch each pivot, which is numerically robust for a few hundred rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


@dataclass
class LpResult:
    x: np.ndarray
    y: np.ndarray       # duals of the equality rows
    objective: float
    iterations: int


def _pivot_until_optimal(a, b, c, basis, max_iter):
    """Bland-rule pivoting from a feasible basis; mutates ``basis``."""
    m, n = a.shape
    in_basis = set(basis)
    iters = 0
    while True:
        if iters > max_iter:
            raise NumericalError("simplex iteration limit reached")
        iters += 1
        basis_mat = a[:, basis]
        xb = np.linalg.solve(basis_mat, b)
        y = np.linalg.solve(basis_mat.T, c[basis])
        reduced = c - y @ a
        entering = -1
        for j in range(n):
            if j not in in_basis and reduced[j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return xb, y, iters
        direction = np.linalg.solve(basis_mat, a[:, entering])
        positive = direction > PIVOT_TOL
        if not positive.any():
            raise NumericalError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = xb[positive] / direction[positive]
        best = ratios.min()
        candidates = [i for i in range(m)
                      if positive[i] and ratios[i] <= best + PIVOT_TOL]
        leave_row = min(candidates, key=lambda i: basis[i])
        in_basis.discard(basis[leave_row])
        in_basis.add(entering)
        basis[leave_row] = entering


def solve_standard_form(c, a, b, max_iter: int = 200000) -> LpResult:
    """Minimize ``c.x`` over ``A x = b``, ``x >= 0``."""
    a = np.asarray(a, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    m, n = a.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValidationError("inconsistent LP dimensions")
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: artificial identity block
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    xb, _, it1 = _pivot_until_optimal(a1, b, c1, basis, max_iter)
    if float(c1[basis] @ xb) > FEAS_TOL:
        raise ValidationError("linear program infeasible")

    # drive leftover artificials out; rows that cannot pivot are redundant
    keep_rows = list(range(m))
    for row in range(m):
        if basis[row] < n:
            continue
        rows_now = [r for r in keep_rows]
        basis_mat = a1[np.ix_(rows_now, [basis[r] for r in rows_now])]
        local = rows_now.index(row)
        in_basis = set(basis[r] for r in rows_now)
        pivoted = False
        for j in range(n):
            if j in in_basis:
                continue
            col = np.linalg.solve(basis_mat, a1[rows_now, j])
            if abs(col[local]) > 1e-8:
                basis[row] = j
                pivoted = True
                break
        if not pivoted:
            keep_rows.remove(row)

    rows = np.array(keep_rows, dtype=int)
    basis2 = [basis[r] for r in keep_rows]
    xb, y2, it2 = _pivot_until_optimal(a[rows], b[rows], c, basis2, max_iter)

    x = np.zeros(n)
    for value, j in zip(xb, basis2):
        x[j] = max(value, 0.0)
    y = np.zeros(m)
    y[rows] = y2
    y[flip] *= -1.0
    return LpResult(x=x, y=y, objective=float(c @ x), iterations=it1 + it2)
