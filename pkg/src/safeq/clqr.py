"""Constrained LQR reference solver and Riccati utilities.

Solves the infinite-horizon regulation problem

    min  sum_k  x_k' Q x_k + u_k' R u_k
    s.t. x_{k+1} = A x_k + B u_k,  u_k in the input box

by truncating to a finite horizon, condensing the problem onto the input
sequence (dense Hessian, box constraints only) and running an accelerated
projected-gradient method with adaptive restart.  The horizon is doubled
until the optimal trajectory's tail is negligible; the returned trajectory
is cut at the first state whose squared norm falls below ``epsilon``, with
the terminal input forced to exactly zero so the result can be stored
directly in a safe set.

State constraints are not part of the QP: the solution is *verified*
against the state box afterwards and :class:`StateConstraintActive` is
raised if it touches, which keeps the oracle honest about the problem class
it actually solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from safeq.model import LtiSystem, QuadCost
from safeq.store import Trajectory, compute_cost_to_go


class NoConvergence(RuntimeError):
    """Horizon doubling or Riccati iteration failed to converge."""


class QpStalled(RuntimeError):
    """The projected-gradient loop hit its iteration cap before qp_tol."""


class StateConstraintActive(RuntimeError):
    """The input-constrained optimum touches the state box.

    The condensed QP only enforces the input box, so a trajectory that
    reaches the state box means the returned solution would not solve the
    fully constrained problem.
    """


@dataclass(frozen=True)
class ClqrConfig:
    epsilon: float = 1e-10          # squared-norm threshold for truncation
    qp_tol: float = 1e-10           # projected-gradient infinity norm at exit
    horizon: int = 20               # initial horizon, doubled as needed
    max_horizon: int = 400
    qp_max_iters: int = 200_000


@dataclass(frozen=True)
class ClqrSolution:
    """Full record of a solve; ``trajectory`` is the truncated result."""

    trajectory: Trajectory
    horizon: int
    inputs_full: np.ndarray     # (H, d) optimal inputs over the solved horizon
    states_full: np.ndarray     # (H+1, n) matching state sequence
    objective: float            # QP objective over the full horizon


def dare_solution(
    system: LtiSystem,
    cost: QuadCost,
    tol: float = 1e-12,
    max_iters: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-point solution (value_matrix, gain) of the Riccati recursion.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA until the update is
    below ``tol`` in the infinity norm.  Raises :class:`NoConvergence` when
    the iteration diverges or stalls (e.g. unstabilizable pairs).
    """
    A = system.a_matrix
    B = system.b_matrix
    Q = cost.state_weight
    R = cost.input_weight
    P = Q.copy()
    for _ in range(max_iters):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.abs(P_next - P).max()
        P = P_next
        if not np.isfinite(P).all() or np.abs(P).max() > 1e14:
            raise NoConvergence("Riccati iteration diverged")
        if delta <= tol:
            BtP = B.T @ P
            gain = np.linalg.solve(R + BtP @ B, BtP @ A)
            return P, gain
    raise NoConvergence(f"Riccati iteration did not settle in {max_iters} steps")


def riccati_lqr(
    system: LtiSystem, cost: QuadCost, tol: float = 1e-12
) -> np.ndarray:
    """Unconstrained infinite-horizon feedback gain K, for u = -K x."""
    _, gain = dare_solution(system, cost, tol=tol)
    return gain


def _condensed_matrices(system: LtiSystem, cost: QuadCost, horizon: int):
    """Prediction and objective matrices for the input-condensed QP.

    With stacked states x = Phi x0 + Gamma U the objective becomes
    const + g0'U + 0.5 U'H U where H = 2 (Gamma' Qbar Gamma + Rbar).
    """
    A = system.a_matrix
    B = system.b_matrix
    n = system.state_dim
    d = system.input_dim
    H = horizon

    powers = [np.eye(n)]
    for _ in range(H):
        powers.append(A @ powers[-1])
    phi = np.vstack(powers)  # ((H+1) n, n)

    pb = np.stack([powers[j] @ B for j in range(H)])  # (H, n, d)
    gamma = np.zeros(((H + 1) * n, H * d))
    for k in range(1, H + 1):
        block = pb[:k][::-1].transpose(1, 0, 2).reshape(n, k * d)
        gamma[k * n : (k + 1) * n, : k * d] = block

    Q = cost.state_weight
    R = cost.input_weight
    g3 = gamma.reshape(H + 1, n, H * d)
    qg = np.einsum("ij,kjl->kil", Q, g3).reshape((H + 1) * n, H * d)
    hess = 2.0 * (gamma.T @ qg + np.kron(np.eye(H), R))
    hess = 0.5 * (hess + hess.T)
    return phi, gamma, qg, hess


def _apg_box_qp(hess, g0, lower, upper, x0_guess, tol, max_iters):
    """Minimize g0'U + 0.5 U'hess U over the box by accelerated projected
    gradient with adaptive (gradient-scheme) restart."""
    L = float(np.linalg.eigvalsh(hess)[-1])
    step_size = 1.0 / L
    U = np.clip(x0_guess, lower, upper)
    Y = U.copy()
    t = 1.0
    for _ in range(max_iters):
        grad_y = g0 + hess @ Y
        U_next = np.clip(Y - step_size * grad_y, lower, upper)
        if float(grad_y @ (U_next - U)) > 0.0:
            # momentum is no longer aligned with descent: restart
            t = 1.0
            Y = U_next.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Y = U_next + ((t - 1.0) / t_next) * (U_next - U)
            t = t_next
        U = U_next
        grad_u = g0 + hess @ U
        projected_step = U - np.clip(U - grad_u, lower, upper)
        if np.abs(projected_step).max() <= tol:
            return U
    raise QpStalled(f"projected gradient did not reach tolerance in {max_iters} iterations")


def solve_clqr_full(
    system: LtiSystem,
    cost: QuadCost,
    x0,
    config: ClqrConfig = ClqrConfig(),
) -> ClqrSolution:
    """Solve the input-constrained regulator and return the full record."""
    x0 = np.asarray(x0, dtype=float)
    n = system.state_dim
    d = system.input_dim
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
    if not system.state_in_box(x0):
        raise ValueError("x0 lies outside the state box")

    if float(x0 @ x0) <= config.epsilon:
        states = x0[None, :]
        inputs = np.zeros((1, d))
        ctg = compute_cost_to_go(states, inputs, cost)
        return ClqrSolution(
            trajectory=Trajectory(states, inputs, ctg),
            horizon=0,
            inputs_full=np.zeros((0, d)),
            states_full=states.copy(),
            objective=float(ctg[0]),
        )

    horizon = config.horizon
    warm = None
    while horizon <= config.max_horizon:
        phi, gamma, qg, hess = _condensed_matrices(system, cost, horizon)
        g0 = 2.0 * (qg.T @ (phi @ x0))
        lower = np.tile(system.input_lower, horizon)
        upper = np.tile(system.input_upper, horizon)
        if warm is None:
            guess = np.zeros(horizon * d)
        else:
            guess = np.concatenate([warm, np.zeros(horizon * d - warm.size)])
        U = _apg_box_qp(hess, g0, lower, upper, guess, config.qp_tol, config.qp_max_iters)

        states = (phi @ x0 + gamma @ U).reshape(horizon + 1, n)
        squared = np.einsum("ij,ij->i", states, states)
        reached = np.nonzero(squared <= config.epsilon)[0]
        if reached.size:
            T = int(reached[0])
            traj_states = states[: T + 1].copy()
            traj_inputs = np.vstack([U.reshape(horizon, d)[:T], np.zeros((1, d))])
            margin_low = (traj_states[1:] - system.state_lower).min() if T else np.inf
            margin_high = (system.state_upper - traj_states[1:]).min() if T else np.inf
            if min(margin_low, margin_high) <= config.qp_tol:
                raise StateConstraintActive(
                    "input-constrained optimum touches the state box; "
                    "this solver does not enforce state constraints"
                )
            ctg = compute_cost_to_go(traj_states, traj_inputs, cost)
            free = (phi @ x0).reshape(horizon + 1, n)
            const = float(np.einsum("ki,ij,kj->", free, cost.state_weight, free))
            objective = const + float(g0 @ U) + 0.5 * float(U @ hess @ U)
            return ClqrSolution(
                trajectory=Trajectory(traj_states, traj_inputs, ctg),
                horizon=horizon,
                inputs_full=U.reshape(horizon, d).copy(),
                states_full=states.copy(),
                objective=objective,
            )
        warm = U
        horizon *= 2
    raise NoConvergence(
        f"trajectory tail stayed above epsilon with horizon {config.max_horizon}"
    )


def solve_clqr(
    system: LtiSystem,
    cost: QuadCost,
    x0,
    config: ClqrConfig = ClqrConfig(),
) -> Trajectory:
    """Optimal input-constrained trajectory from x0, truncated at the first
    state whose squared norm is at most ``config.epsilon``."""
    return solve_clqr_full(system, cost, x0, config).trajectory
