"""Shared test oracles.

The oracles here are deliberately independent of the library's own solver
paths: the LP oracle enumerates basic solutions by brute force, and the hull
membership oracle uses closed-form barycentric coordinates.  Expected values
frozen into the test modules were produced by these routines (or by hand).
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

ORACLE_TOL = 1e-9


def enumerate_lp(cost, eq_matrix, eq_rhs, tol: float = ORACLE_TOL):
    """Brute-force reference solve of min cost.lam s.t. E lam = b, lam >= 0.

    Enumerates every column subset of size <= m whose submatrix has full
    column rank, solves the square/overdetermined system, and keeps the
    basic solutions that are feasible.  Unboundedness is decided by
    enumerating the vertices of the normalized recession cone
    {d : E d = 0, sum(d) = 1, d >= 0} the same way.

    Returns ``(status, objective)`` with status one of "optimal",
    "infeasible", "unbounded"; objective is None unless optimal.
    """
    E = np.asarray(eq_matrix, dtype=float)
    b = np.asarray(eq_rhs, dtype=float)
    c = np.asarray(cost, dtype=float)
    m, n = E.shape

    scale = 1.0 + (np.abs(b).max() if b.size else 0.0)
    best = None
    feasible = False
    if m == 0 or np.abs(b).max() <= tol * scale:
        feasible = True
        best = 0.0
    for size in range(1, min(m, n) + 1):
        for cols in combinations(range(n), size):
            sub = E[:, cols]
            if np.linalg.matrix_rank(sub, tol=1e-10) < size:
                continue
            sol, *_ = np.linalg.lstsq(sub, b, rcond=None)
            if np.abs(sub @ sol - b).max() > tol * scale:
                continue
            if (sol < -tol).any():
                continue
            obj = float(c[list(cols)] @ sol)
            feasible = True
            if best is None or obj < best:
                best = obj
    if not feasible:
        return "infeasible", None

    # recession direction check: min c.d over {E d = 0, 1.d = 1, d >= 0}
    E_ray = np.vstack([E, np.ones(n)])
    b_ray = np.concatenate([np.zeros(m), [1.0]])
    ray_best = None
    for size in range(1, min(m + 1, n) + 1):
        for cols in combinations(range(n), size):
            sub = E_ray[:, cols]
            if np.linalg.matrix_rank(sub, tol=1e-10) < size:
                continue
            sol, *_ = np.linalg.lstsq(sub, b_ray, rcond=None)
            if np.abs(sub @ sol - b_ray).max() > tol:
                continue
            if (sol < -tol).any():
                continue
            obj = float(c[list(cols)] @ sol)
            if ray_best is None or obj < ray_best:
                ray_best = obj
    if ray_best is not None and ray_best < -tol:
        return "unbounded", None
    return "optimal", best


def random_lp(rng: np.random.Generator):
    """Draw a small random LP; roughly half are built to be feasible."""
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 4))
    E = rng.normal(size=(m, n))
    if rng.random() < 0.5:
        b = E @ rng.uniform(0.0, 2.0, size=n)  # reachable right-hand side
    else:
        b = rng.normal(size=m) * 2.0
    c = rng.normal(size=n)
    return c, E, b


def barycentric_in_triangle(point, v0, v1, v2, tol: float = 1e-12) -> bool:
    """Exact 2-D point-in-triangle test via barycentric coordinates."""
    p = np.asarray(point, dtype=float)
    a, b, c = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
    det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1])
    if abs(det) < tol:
        raise ValueError("degenerate triangle")
    w0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det
    w1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det
    w2 = 1.0 - w0 - w1
    return w0 >= -tol and w1 >= -tol and w2 >= -tol
