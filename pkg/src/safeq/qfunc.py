"""Value interpolation over the convex hull of stored states.

The interpolated value at a query state x is the optimum of

    min  cost_vector . lam
    s.t. point_matrix @ lam = x,  sum(lam) = 1,  lam >= 0

i.e. the cheapest convex combination of stored points that reproduces x.
The query is feasible exactly when x lies in the hull of the stored states.
``eval_q_local`` restricts the columns to a per-trajectory nearest-neighbour
selection, trading tightness for a much smaller program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from safeq.lp import FEAS_TOL, LpNumericError, LpProblem, LpStatus, lp_feasible, simplex_solve
from safeq.store import SafeSetStore


@dataclass(frozen=True)
class QueryResult:
    """Outcome of one value interpolation.

    ``multipliers`` aligns with ``columns`` (store column indices used by
    the LP).  ``support`` lists the (trajectory, time) pairs whose
    multiplier exceeds the feasibility tolerance.  When ``feasible`` is
    False the query state is outside the (selected) hull and ``value`` is
    +inf.
    """

    value: float
    multipliers: np.ndarray | None
    columns: np.ndarray
    support: tuple[tuple[int, int], ...]
    feasible: bool


@dataclass(frozen=True)
class LocalSelection:
    """Per-trajectory nearest-neighbour choice of store columns."""

    time_indices: tuple[np.ndarray, ...]
    columns: np.ndarray

    @property
    def size(self) -> int:
        return self.columns.size


def _query(store: SafeSetStore, x, columns: np.ndarray, feas_tol: float) -> QueryResult:
    x = np.asarray(x, dtype=float)
    if x.shape != (store.state_dim,):
        raise ValueError(f"query state has shape {x.shape}, expected ({store.state_dim},)")
    points = store.point_matrix[:, columns]
    eq_matrix = np.vstack([points, np.ones(columns.size)])
    eq_rhs = np.concatenate([x, [1.0]])
    solution = simplex_solve(LpProblem(store.cost_vector[columns], eq_matrix, eq_rhs), feas_tol)
    if solution.status is LpStatus.INFEASIBLE:
        return QueryResult(
            value=math.inf,
            multipliers=None,
            columns=columns,
            support=(),
            feasible=False,
        )
    if solution.status is not LpStatus.OPTIMAL:  # pragma: no cover
        raise LpNumericError("interpolation LP cannot be unbounded on a simplex")
    lam = solution.multipliers
    support = tuple(
        (int(store.index_map[columns[i], 0]), int(store.index_map[columns[i], 1]))
        for i in np.nonzero(lam > feas_tol)[0]
    )
    return QueryResult(
        value=float(solution.objective),
        multipliers=lam,
        columns=columns,
        support=support,
        feasible=True,
    )


def eval_q_global(store: SafeSetStore, x, feas_tol: float = FEAS_TOL) -> QueryResult:
    """Interpolated value over every stored point."""
    return _query(store, x, np.arange(store.point_count), feas_tol)


def knn_select(store: SafeSetStore, x, n_neighbors: int) -> LocalSelection:
    """For each trajectory, the ``n_neighbors`` stored states closest to x.

    Distances are Euclidean; ties go to the lower time index (stable sort),
    and trajectories shorter than ``n_neighbors`` contribute all of their
    points.  Selected indices are returned in increasing time order.
    """
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be at least 1")
    x = np.asarray(x, dtype=float)
    if x.shape != (store.state_dim,):
        raise ValueError(f"query state has shape {x.shape}, expected ({store.state_dim},)")
    per_traj: list[np.ndarray] = []
    columns: list[np.ndarray] = []
    for j, t in enumerate(store.trajectories):
        dist = np.linalg.norm(t.states - x, axis=1)
        take = min(n_neighbors, len(t.states))
        chosen = np.sort(np.argsort(dist, kind="stable")[:take])
        per_traj.append(chosen)
        columns.append(chosen + store.offsets[j])
    cols = np.concatenate(columns)
    cols.setflags(write=False)
    return LocalSelection(time_indices=tuple(per_traj), columns=cols)


def eval_q_local(
    store: SafeSetStore, x, selection: LocalSelection, feas_tol: float = FEAS_TOL
) -> QueryResult:
    """Interpolated value restricted to a nearest-neighbour selection.

    Never below the global value (fewer columns can only hurt), and
    infeasible whenever x falls outside the hull of the selected points —
    even if the full store could reproduce it.
    """
    return _query(store, x, selection.columns, feas_tol)


def contains(store: SafeSetStore, x, feas_tol: float = FEAS_TOL) -> bool:
    """True iff x lies in the convex hull of all stored states."""
    x = np.asarray(x, dtype=float)
    if x.shape != (store.state_dim,):
        raise ValueError(f"query state has shape {x.shape}, expected ({store.state_dim},)")
    eq_matrix = np.vstack([store.point_matrix, np.ones(store.point_count)])
    eq_rhs = np.concatenate([x, [1.0]])
    return lp_feasible(eq_matrix, eq_rhs, feas_tol)
