"""Plant and cost definitions shared across the solver and policy layers.

An :class:`LtiSystem` is a discrete-time linear system with box constraints
on state and input.  Stage costs come in three flavours:

* :class:`QuadCost` — the usual quadratic x'Qx + u'Ru, used when the control
  objective is regulation to the origin;
* :class:`HullDistanceCost` — l1 distance from the state to the hull of a
  :class:`TerminalSet`, computed by a small LP.  Convex, continuous, zero
  exactly on the set: the certified choice when regulating to a set;
* :class:`IndicatorCost` — 0 inside the set, 1 outside.  Discontinuous, so
  stores built on it are marked uncertified and decrease checks downgrade
  to warnings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from safeq.lp import FEAS_TOL, LpProblem, LpStatus, lp_feasible, simplex_solve


def _array(values, name, ndim):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must contain only finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time linear dynamics x+ = A x + B u with box constraints."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray
    input_lower: np.ndarray
    input_upper: np.ndarray

    def __post_init__(self):
        A = _array(self.a_matrix, "a_matrix", 2)
        B = _array(self.b_matrix, "b_matrix", 2)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"a_matrix must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(
                f"b_matrix has {B.shape[0]} rows, expected {A.shape[0]}"
            )
        xl = _array(self.state_lower, "state_lower", 1)
        xu = _array(self.state_upper, "state_upper", 1)
        ul = _array(self.input_lower, "input_lower", 1)
        uu = _array(self.input_upper, "input_upper", 1)
        if xl.size != A.shape[0] or xu.size != A.shape[0]:
            raise ValueError("state bounds must match the state dimension")
        if ul.size != B.shape[1] or uu.size != B.shape[1]:
            raise ValueError("input bounds must match the input dimension")
        if (xl >= xu).any() or (ul >= uu).any():
            raise ValueError("box bounds must satisfy lower < upper")
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "b_matrix", B)
        object.__setattr__(self, "state_lower", xl)
        object.__setattr__(self, "state_upper", xu)
        object.__setattr__(self, "input_lower", ul)
        object.__setattr__(self, "input_upper", uu)

    @property
    def state_dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b_matrix.shape[1]

    def step(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        assert x.shape == (self.state_dim,), f"state shape {x.shape}"
        assert u.shape == (self.input_dim,), f"input shape {u.shape}"
        return self.a_matrix @ x + self.b_matrix @ u

    def state_in_box(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            (x >= self.state_lower - tol).all() and (x <= self.state_upper + tol).all()
        )

    def input_in_box(self, u, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(
            (u >= self.input_lower - tol).all() and (u <= self.input_upper + tol).all()
        )


@dataclass(frozen=True)
class QuadCost:
    """Stage cost x' state_weight x + u' input_weight u.

    Both weights must be symmetric positive semidefinite.  A zero
    input_weight is allowed: stored safe sets penalise only the state,
    which keeps the stage cost exactly zero at the goal regardless of the
    input applied there.
    """

    state_weight: np.ndarray
    input_weight: np.ndarray

    def __post_init__(self):
        Q = _array(self.state_weight, "state_weight", 2)
        R = _array(self.input_weight, "input_weight", 2)
        for name, M in (("state_weight", Q), ("input_weight", R)):
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.abs(M - M.T).max() > 1e-12:
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "state_weight", Q)
        object.__setattr__(self, "input_weight", R)

    def __call__(self, x, u) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return float(x @ self.state_weight @ x + u @ self.input_weight @ u)


@dataclass(frozen=True)
class TerminalSet:
    """Convex hull of a finite set of vertices (one per row)."""

    vertices: np.ndarray

    def __post_init__(self):
        V = _array(self.vertices, "vertices", 2)
        if V.shape[0] < 1:
            raise ValueError("a terminal set needs at least one vertex")
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def contains(self, x, feas_tol: float = FEAS_TOL) -> bool:
        """Hull membership via phase-1 feasibility of the weight system."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, set lives in R^{self.dim}")
        E = np.vstack([self.vertices.T, np.ones(len(self.vertices))])
        b = np.concatenate([x, [1.0]])
        return lp_feasible(E, b, feas_tol)

    def hull_weights(self, x, feas_tol: float = FEAS_TOL) -> np.ndarray | None:
        """Convex weights reproducing x, or None when x is outside the hull."""
        x = np.asarray(x, dtype=float)
        E = np.vstack([self.vertices.T, np.ones(len(self.vertices))])
        b = np.concatenate([x, [1.0]])
        sol = simplex_solve(LpProblem(np.zeros(len(self.vertices)), E, b), feas_tol)
        if sol.status is not LpStatus.OPTIMAL:
            return None
        return sol.multipliers


@dataclass(frozen=True)
class HullDistanceCost:
    """l1 distance from the state to a terminal set's hull; inputs are free.

    distance(x) = min over hull points y of |x - y|_1, written as the LP

        min sum(s+ + s-)  s.t.  V' mu + s+ - s- = x,  sum(mu) = 1,  all >= 0

    which is this package's native equality form.  Zero exactly on the set,
    convex and continuous everywhere, so decrease certificates apply.
    """

    terminal_set: TerminalSet

    def __call__(self, x, u) -> float:
        x = np.asarray(x, dtype=float)
        V = self.terminal_set.vertices
        nv = len(V)
        n = self.terminal_set.dim
        if x.shape != (n,):
            raise ValueError(f"state has shape {x.shape}, expected ({n},)")
        E = np.vstack(
            [
                np.hstack([V.T, np.eye(n), -np.eye(n)]),
                np.concatenate([np.ones(nv), np.zeros(2 * n)]),
            ]
        )
        b = np.concatenate([x, [1.0]])
        cost = np.concatenate([np.zeros(nv), np.ones(2 * n)])
        sol = simplex_solve(LpProblem(cost, E, b))
        if sol.status is not LpStatus.OPTIMAL:  # pragma: no cover - always feasible
            raise RuntimeError("hull distance LP unexpectedly infeasible")
        return max(sol.objective, 0.0)


@dataclass(frozen=True)
class IndicatorCost:
    """0 inside the terminal set's hull, 1 outside.  Discontinuous."""

    terminal_set: TerminalSet

    def __call__(self, x, u) -> float:
        return 0.0 if self.terminal_set.contains(x) else 1.0
