"""Dense two-phase primal simplex for small equality-form linear programs.

Every optimisation in this package reduces to the same shape of problem:

    minimize    cost . lam
    subject to  eq_matrix @ lam = eq_rhs,   lam >= 0

where the columns of ``eq_matrix`` are stored samples and ``lam`` picks a
convex combination of them.  The problems are tiny (a handful of rows, up to
a few thousand columns) but get solved thousands of times per closed-loop
run, and downstream verification requires the solver to be *deterministic*:
the same problem must produce bitwise-identical multipliers on every call.
A hand-rolled dense tableau method gives us that determinism; no external
solver is involved.

Pivot rules: Dantzig (most negative reduced cost, lowest column index on
ties) with a switch to Bland's rule after a fixed run of degenerate pivots,
which precludes cycling.  The leaving row is the minimum-ratio row, ties
broken by the lowest basis column index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Default feasibility tolerance: phase-1 residuals above this are infeasible,
# and returned multipliers may undershoot zero by at most this much.
FEAS_TOL = 1e-9

# Entries with magnitude at or below this never act as pivots.
PIVOT_TOL = 1e-10

# Consecutive degenerate pivots tolerated before Bland's rule takes over.
DEGENERATE_PIVOT_LIMIT = 30


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericError(RuntimeError):
    """The pivot loop overflowed or exceeded its iteration cap.

    Deliberately distinct from an INFEASIBLE status: this means the solver
    failed, not that the problem has no solution.
    """


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must contain only finite entries")
    return arr


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must contain only finite entries")
    return arr


@dataclass(frozen=True)
class LpProblem:
    """Equality-constrained linear program over nonnegative variables.

    Attributes
    ----------
    cost : (n,) array
        Objective coefficients.
    eq_matrix : (m, n) array
        Equality constraint matrix; columns are decision variables.
    eq_rhs : (m,) array
        Equality right-hand side.
    """

    cost: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray

    def __post_init__(self):
        cost = _as_vector(self.cost, "cost")
        eq_matrix = _as_matrix(self.eq_matrix, "eq_matrix")
        eq_rhs = _as_vector(self.eq_rhs, "eq_rhs")
        m, n = eq_matrix.shape
        if n < 1:
            raise ValueError("the problem needs at least one variable")
        if cost.size != n:
            raise ValueError(
                f"cost has {cost.size} entries but eq_matrix has {n} columns"
            )
        if eq_rhs.size != m:
            raise ValueError(
                f"eq_rhs has {eq_rhs.size} entries but eq_matrix has {m} rows"
            )
        for arr in (cost, eq_matrix, eq_rhs):
            arr.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "eq_matrix", eq_matrix)
        object.__setattr__(self, "eq_rhs", eq_rhs)

    @property
    def num_variables(self) -> int:
        return self.eq_matrix.shape[1]

    @property
    def num_rows(self) -> int:
        return self.eq_matrix.shape[0]


@dataclass(frozen=True)
class LpSolution:
    """Outcome of a solve.

    ``multipliers``, ``objective`` and ``basis`` are populated only when
    ``status`` is OPTIMAL.  ``basis`` lists the basic column indices of the
    final vertex; all non-basic multipliers are exactly ``0.0``.
    """

    status: LpStatus
    multipliers: np.ndarray | None = None
    objective: float | None = None
    basis: tuple[int, ...] | None = None


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    """In-place Gauss-Jordan pivot on tableau[row, col]."""
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    # eliminate float dust so the pivot column is an exact unit vector
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0


def _run_pivots(
    tableau: np.ndarray,
    basis: list[int],
    cost: np.ndarray,
    feas_tol: float,
) -> str:
    """Pivot to optimality ("optimal") or detect unboundedness ("unbounded").

    ``tableau`` has the right-hand side as its last column; ``cost`` covers
    every tableau column except that one.  Reduced costs are recomputed from
    the tableau each iteration rather than carried, trading a few flops for
    less drift.
    """
    m, width = tableau.shape
    ncols = width - 1
    bland = False
    degenerate_run = 0
    max_iters = 10_000 + 10 * ncols

    for _ in range(max_iters):
        basis_arr = np.asarray(basis)
        reduced = cost - cost[basis_arr] @ tableau[:, :ncols]
        reduced[basis_arr] = 0.0

        if bland:
            negative = np.nonzero(reduced < -PIVOT_TOL)[0]
            if negative.size == 0:
                return "optimal"
            enter = int(negative[0])
        else:
            enter = int(np.argmin(reduced))  # argmin takes the lowest index on ties
            if reduced[enter] >= -PIVOT_TOL:
                return "optimal"

        column = tableau[:, enter]
        positive = column > PIVOT_TOL
        if not positive.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[positive] = tableau[positive, -1] / column[positive]
        best = ratios.min()
        ties = np.nonzero(ratios == best)[0]
        leave = int(ties[np.argmin(basis_arr[ties])])

        if best <= feas_tol:
            degenerate_run += 1
            if degenerate_run > DEGENERATE_PIVOT_LIMIT:
                bland = True
        else:
            degenerate_run = 0

        _pivot(tableau, leave, enter)
        basis[leave] = enter
        if not np.isfinite(tableau).all():
            raise LpNumericError("tableau overflowed during pivoting")

    raise LpNumericError(f"simplex did not terminate within {max_iters} pivots")


def _phase_one(
    eq_matrix: np.ndarray, eq_rhs: np.ndarray, feas_tol: float
) -> tuple[np.ndarray, list[int], np.ndarray, float]:
    """Run phase 1 from the all-artificial basis.

    Returns ``(tableau, basis, kept_rows, residual)`` where ``tableau`` still
    carries the artificial columns, ``kept_rows`` indexes the original rows
    that survive (none are dropped here; redundancy is handled by the
    caller) and ``residual`` is the phase-1 optimum, i.e. the minimal
    achievable l1 constraint violation.
    """
    m, n = eq_matrix.shape
    E = eq_matrix.copy()
    b = eq_rhs.copy()
    flip = b < 0.0
    E[flip] *= -1.0
    b[flip] *= -1.0

    tableau = np.hstack([E, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    outcome = _run_pivots(tableau, basis, cost, feas_tol)
    if outcome != "optimal":  # pragma: no cover - phase 1 is bounded below by 0
        raise LpNumericError("phase 1 reported unbounded, which cannot happen")
    residual = float(cost[np.asarray(basis)] @ tableau[:, -1])
    return tableau, basis, np.arange(m), residual


def lp_feasible(eq_matrix, eq_rhs, feas_tol: float = FEAS_TOL) -> bool:
    """True iff some lam >= 0 satisfies ``eq_matrix @ lam = eq_rhs``.

    Runs phase 1 only; feasibility means the minimal l1 violation does not
    exceed ``feas_tol``.
    """
    E = _as_matrix(eq_matrix, "eq_matrix")
    b = _as_vector(eq_rhs, "eq_rhs")
    if E.shape[0] != b.size:
        raise ValueError(
            f"eq_rhs has {b.size} entries but eq_matrix has {E.shape[0]} rows"
        )
    _, _, _, residual = _phase_one(E, b, feas_tol)
    return residual <= feas_tol


def simplex_solve(problem: LpProblem, feas_tol: float = FEAS_TOL) -> LpSolution:
    """Solve an :class:`LpProblem` by the two-phase primal simplex method.

    Deterministic: repeated calls on the same problem return bitwise
    identical multipliers.  On OPTIMAL the multipliers satisfy the equality
    constraints within ``feas_tol`` (infinity norm) and undershoot zero by
    at most ``feas_tol``.
    """
    E0 = problem.eq_matrix
    b0 = problem.eq_rhs
    c = problem.cost
    m, n = E0.shape

    tableau, basis, kept, residual = _phase_one(E0, b0, feas_tol)
    if residual > feas_tol:
        return LpSolution(LpStatus.INFEASIBLE)

    # Drive leftover artificial variables out of the basis; rows where no
    # original column can pivot are redundant and dropped.
    drop: list[int] = []
    for i in range(len(basis)):
        if basis[i] < n:
            continue
        row = tableau[i, :n].copy()
        row[np.asarray(basis)[np.asarray(basis) < n]] = 0.0  # already basic
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > PIVOT_TOL:
            _pivot(tableau, i, j)
            basis[i] = j
        else:
            drop.append(i)
    if drop:
        tableau = np.delete(tableau, drop, axis=0)
        kept = np.delete(kept, drop)
        basis = [bi for i, bi in enumerate(basis) if i not in set(drop)]

    # Phase 2 on the original columns only.
    tableau = np.hstack([tableau[:, :n], tableau[:, -1:]])
    outcome = _run_pivots(tableau, basis, c.copy(), feas_tol)
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED)

    multipliers = np.zeros(n)
    values = np.maximum(tableau[:, -1], 0.0)  # clip ratio-test float dust
    for i, bi in enumerate(basis):
        multipliers[bi] = values[i]

    # Polish: recompute the basic values from the original data so the
    # residual reflects the input system, not accumulated tableau drift.
    if len(basis) > 0:
        B = E0[np.ix_(kept, basis)]
        if B.shape[0] == B.shape[1]:
            try:
                xb = np.linalg.solve(B, b0[kept])
            except np.linalg.LinAlgError:
                xb = None
            if xb is not None and np.isfinite(xb).all() and (xb >= -feas_tol).all():
                polished = np.zeros(n)
                polished[basis] = xb
                res_raw = np.abs(E0 @ multipliers - b0).max() if m else 0.0
                res_pol = np.abs(E0 @ polished - b0).max() if m else 0.0
                if res_pol <= res_raw:
                    multipliers = polished

    final_residual = float(np.abs(E0 @ multipliers - b0).max()) if m else 0.0
    # Scale the self-check with the data so well-posed systems with large
    # entries are not rejected for honest float rounding.
    residual_scale = 1.0 + (float(np.abs(b0).max()) if m else 0.0)
    if final_residual > feas_tol * residual_scale or (multipliers < -feas_tol).any():
        raise LpNumericError(
            f"solution failed its own feasibility check (residual {final_residual:.3e})"
        )
    multipliers.setflags(write=False)
    objective = float(c @ multipliers)
    return LpSolution(
        status=LpStatus.OPTIMAL,
        multipliers=multipliers,
        objective=objective,
        basis=tuple(sorted(int(bi) for bi in basis)),
    )
