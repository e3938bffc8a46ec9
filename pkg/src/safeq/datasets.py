"""Canonical datasets: the double-integrator benchmark and demo stores.

Everything here is deterministic: the seed trajectory comes from the convex
QP oracle, rollouts come from the (deterministic) data-driven policy, and
random sampling is always driven by an explicit seed.  The same calls
therefore reproduce byte-identical datasets.

Cost conventions
----------------
Two quadratic costs appear on purpose.  The *planner* cost penalises state
and control effort and is what the seed optimizer minimises; it is also the
cost the Riccati cross-checks use.  The *stage* cost used for stored
costs-to-go and realized closed-loop cost penalises the state deviation
only — it is exactly zero at the origin whatever input is applied there,
which is the property the decrease/cost-bound arguments need, and it is the
accounting under which the published closed-loop figures are reproducible.
"""

from __future__ import annotations

import numpy as np

from safeq.clqr import ClqrConfig, riccati_lqr, solve_clqr
from safeq.model import HullDistanceCost, LtiSystem, QuadCost, TerminalSet
from safeq.policy import PolicyConfig, report_to_trajectory, run_closed_loop
from safeq.store import (
    ORIGIN_MODE,
    TERMINAL_MODE,
    SafeSetStore,
    Trajectory,
    build_safe_set,
    compute_cost_to_go,
)

#: Benchmark initial states: the canonical start (-1, 3) plus ten interior
#: points of its seed trajectory's hull.
BENCHMARK_STATES: tuple[tuple[float, float], ...] = (
    (-1.0, 3.0),
    (2.9033, 1.2959),
    (3.9495, 0.3921),
    (3.3673, 0.8315),
    (3.4349, 0.7243),
    (3.9253, 0.0874),
    (3.1189, 0.9013),
    (3.8963, 0.1645),
    (2.5449, 1.0898),
    (3.4751, 0.6212),
    (2.5770, 1.1763),
)


def double_integrator() -> LtiSystem:
    """Discrete double integrator with |x| <= 10 and |u| <= 1."""
    return LtiSystem(
        a_matrix=np.array([[1.0, 1.0], [0.0, 1.0]]),
        b_matrix=np.array([[0.0], [1.0]]),
        state_lower=np.array([-10.0, -10.0]),
        state_upper=np.array([10.0, 10.0]),
        input_lower=np.array([-1.0]),
        input_upper=np.array([1.0]),
    )


def stage_cost() -> QuadCost:
    """State-deviation stage cost used for stored costs-to-go."""
    return QuadCost(np.eye(2), np.zeros((1, 1)))


def planner_cost() -> QuadCost:
    """State-plus-effort objective the seed optimizer minimises."""
    return QuadCost(np.eye(2), np.eye(1))


def seed_trajectory(
    x0=(-1.0, 3.0),
    system: LtiSystem | None = None,
    config: ClqrConfig = ClqrConfig(),
) -> Trajectory:
    """Optimal constrained trajectory from x0 under the stage-cost accounting.

    The optimizer minimises the planner cost; the returned costs-to-go are
    re-accumulated under the state-only stage cost so the trajectory can be
    stored directly.
    """
    system = system or double_integrator()
    raw = solve_clqr(system, planner_cost(), np.asarray(x0, dtype=float), config)
    ctg = compute_cost_to_go(raw.states, raw.inputs, stage_cost())
    return Trajectory(raw.states, raw.inputs, ctg)


def seed_store(x0=(-1.0, 3.0)) -> SafeSetStore:
    """Single-trajectory store seeded by the constrained-optimal run."""
    system = double_integrator()
    return build_safe_set([seed_trajectory(x0, system)], system, stage_cost())


def extend_with_rollouts(
    store: SafeSetStore,
    initial_states,
    config: PolicyConfig = PolicyConfig(),
) -> SafeSetStore:
    """Append one closed-loop policy rollout per initial state.

    Every rollout is driven against the *base* store, mirroring how data is
    gathered in practice: run the current policy, then store what happened.
    Raises ValueError if a rollout fails to reach the goal.
    """
    extra = []
    for x0 in initial_states:
        report = run_closed_loop(store.system, store, np.asarray(x0, dtype=float), config)
        if report.terminated not in ("origin", "terminal_set"):
            raise ValueError(
                f"rollout from {np.asarray(x0).tolist()} ended with {report.terminated!r}"
            )
        extra.append(report_to_trajectory(report, store))
    return build_safe_set(
        list(store.trajectories) + extra, store.system, store.stage_cost, store.mode
    )


def extend_with_optimum(store: SafeSetStore, x0) -> SafeSetStore:
    """Append the constrained-optimal trajectory from x0 to the store."""
    extra = seed_trajectory(x0, store.system)
    return build_safe_set(
        list(store.trajectories) + [extra], store.system, store.stage_cost, store.mode
    )


def sample_hull_states(store: SafeSetStore, count: int, seed: int) -> np.ndarray:
    """Deterministically sample states inside the hull of the stored points.

    Each sample is a Dirichlet-weighted combination of a handful of stored
    states, which lands strictly inside the hull (never on a vertex).
    """
    rng = np.random.default_rng(seed)
    points = store.point_matrix.T
    samples = np.empty((count, store.state_dim))
    support = min(4, len(points))
    for i in range(count):
        chosen = rng.choice(len(points), size=support, replace=False)
        weights = rng.dirichlet(np.ones(support))
        samples[i] = weights @ points[chosen]
    return samples


# ---------------------------------------------------------------------------
# terminal-set demo


def terminal_demo_set() -> TerminalSet:
    """Diamond goal region conv{(+-0.5, 0), (0, +-0.25)}.

    The flat vertices (+-0.5, 0) are equilibria under zero input, and the
    top/bottom vertices map back into the hull under u = -/+ 0.25, so the
    hull is control invariant — an axis-aligned square around the origin is
    not (its corners inevitably drift out along the position axis).
    """
    return TerminalSet(
        np.array([[0.5, 0.0], [-0.5, 0.0], [0.0, 0.25], [0.0, -0.25]])
    )


def _reach_exactly(system: LtiSystem, x0: np.ndarray, target: np.ndarray, steps: int) -> np.ndarray:
    """Minimum-norm input sequence driving x0 to the target in `steps` steps."""
    n = system.state_dim
    a, b = system.a_matrix, system.b_matrix
    blocks = []
    power = np.eye(n)
    for _ in range(steps):  # blocks[k] = A^k B, later reversed into reach order
        blocks.append(power @ b)
        power = a @ power
    reach = np.hstack(blocks[::-1])
    free = power @ x0
    u, *_ = np.linalg.lstsq(reach, target - free, rcond=None)
    return u.reshape(steps, system.input_dim)


def terminal_demo_store() -> SafeSetStore:
    """Four dead-beat trajectories, one per goal-region vertex.

    Stage cost is the l1 distance to the goal region, so costs-to-go count
    how far outside the region the remaining path dwells.
    """
    system = double_integrator()
    goal = terminal_demo_set()
    # (start state, vertex index, steps, terminal input keeping the hull)
    plans = [
        (np.array([4.0, 0.5]), 0, 8, np.array([0.0])),
        (np.array([-4.0, -0.5]), 1, 8, np.array([0.0])),
        (np.array([2.0, -1.0]), 2, 7, np.array([-0.25])),
        (np.array([-2.0, 1.0]), 3, 7, np.array([0.25])),
    ]
    cost = HullDistanceCost(goal)
    trajectories = []
    for x0, vertex_index, steps, terminal_input in plans:
        target = goal.vertices[vertex_index]
        inputs_core = _reach_exactly(system, x0, target, steps)
        states = [x0]
        for u in inputs_core:
            states.append(system.step(states[-1], u))
        states[-1] = target.copy()  # strip lstsq dust: the hit is exact by construction
        inputs = np.vstack([inputs_core, terminal_input[None, :]])
        states = np.vstack(states)
        ctg = compute_cost_to_go(states, inputs, cost)
        trajectories.append(Trajectory(states, inputs, ctg))
    return build_safe_set(trajectories, system, cost, TERMINAL_MODE)


# ---------------------------------------------------------------------------
# timing benchmark store


def _riccati_tail(trajectory: Trajectory, system: LtiSystem, gain: np.ndarray,
                  extra: int, cost: QuadCost) -> Trajectory:
    """Extend a goal-reaching trajectory with `extra` linear-feedback steps.

    The tail continues the decay from the (already negligible) terminal
    state, producing additional valid stored points without changing the
    hull in any visible way.
    """
    if extra <= 0:
        return trajectory
    states = [s for s in trajectory.states]
    inputs = [u for u in trajectory.inputs[:-1]]
    x = states[-1]
    for _ in range(extra):
        u = -gain @ x
        inputs.append(u)
        x = system.step(x, u)
        states.append(x)
    inputs.append(np.zeros(system.input_dim))
    states_arr = np.vstack(states)
    inputs_arr = np.vstack(inputs)
    return Trajectory(states_arr, inputs_arr, compute_cost_to_go(states_arr, inputs_arr, cost))


def inflate_with_tails(store: SafeSetStore, min_points: int) -> SafeSetStore:
    """Pad every trajectory with linear-feedback tail data.

    Appends decaying closed-loop steps past each terminal state until the
    store holds at least `min_points` columns.  Origin mode only: the tail
    argument relies on the terminal state being (numerically) at the origin.
    """
    if store.mode != ORIGIN_MODE:
        raise ValueError("tail inflation is only defined for origin-mode stores")
    shortfall = min_points - store.point_count
    if shortfall <= 0:
        return store
    tail_cost = QuadCost(
        np.eye(store.system.state_dim), np.eye(store.system.input_dim)
    )
    gain = riccati_lqr(store.system, tail_cost)
    per_trajectory = -(-shortfall // len(store.trajectories))  # ceil division
    padded = [
        _riccati_tail(t, store.system, gain, per_trajectory, store.stage_cost)
        for t in store.trajectories
    ]
    return build_safe_set(padded, store.system, store.stage_cost, store.mode)


def bench_store(min_points: int = 2000, n_trajectories: int = 8, seed: int = 2024) -> SafeSetStore:
    """Store for timing runs: rollout data inflated to at least min_points.

    Builds the seed store, adds policy rollouts from sampled interior states
    until `n_trajectories` are present, then pads with tail data until the
    store holds `min_points` columns.
    """
    base = seed_store()
    missing = max(0, n_trajectories - len(base.trajectories))
    if missing:
        starts = sample_hull_states(base, missing, seed)
        base = extend_with_rollouts(base, starts)
    return inflate_with_tails(base, min_points)
