"""Data-driven policy extraction and monitored closed-loop simulation.

The policy at state x solves the value-interpolation LP and applies the
multiplier-weighted combination of the stored inputs.  Running it in closed
loop produces a :class:`SimulationReport` whose per-step monitors check the
properties the construction is supposed to deliver:

* ``containment``    — the next state stays in the hull of stored states;
* ``state_box`` / ``input_box`` — box constraints hold;
* ``lyapunov_decrease`` — the interpolated value drops by at least the
  multiplier-weighted stage cost of the support points (within a small
  tolerance).

The decrease argument rests on shifting each trajectory's multipliers one
step forward; :func:`verify_candidate_shift` rebuilds that shifted
combination explicitly and checks it is (numerically) feasible for the next
state's LP and upper-bounds the next value, which is the certificate behind
the monitors.  Stores whose stage cost is the discontinuous indicator are
uncertified: their decrease monitor is recorded but downgraded to a warning.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from safeq.lp import FEAS_TOL
from safeq.qfunc import QueryResult, eval_q_global, eval_q_local, knn_select
from safeq.store import ORIGIN_MODE, TERMINAL_MODE, SafeSetStore, Trajectory, compute_cost_to_go
from safeq.model import LtiSystem

REPORT_VERSION = "rep-v1"

GLOBAL_MODE = "global"
LOCAL_MODE = "local"

# Squared-norm ball around the origin treated as "arrived" by the runner.
ORIGIN_EPSILON = 1e-10


class PolicyInfeasible(RuntimeError):
    """The interpolation LP (after any fallback) has no solution at x."""


@dataclass(frozen=True)
class PolicyConfig:
    """Knobs for policy evaluation and closed-loop runs."""

    mode: str = GLOBAL_MODE
    n_neighbors: int = 10
    fallback: str = "expand"        # "expand": double n_neighbors up to the
                                    # full store; "fail": raise immediately
    feas_tol: float = FEAS_TOL
    lyapunov_tol: float = 1e-7
    cost_bound_tol: float = 1e-6
    max_steps: int = 500

    def __post_init__(self):
        if self.mode not in (GLOBAL_MODE, LOCAL_MODE):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.fallback not in ("expand", "fail"):
            raise ValueError(f"unknown fallback policy {self.fallback!r}")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class PolicyStep:
    """One policy evaluation: the applied input plus its provenance."""

    input: np.ndarray
    query: QueryResult
    fallback_used: bool
    input_box_gap: float   # how far the raw weighted input fell outside the box


def step(system: LtiSystem, x, u) -> np.ndarray:
    """One step of the dynamics, x+ = A x + B u."""
    return system.step(x, u)


def _weighted_input(store: SafeSetStore, query: QueryResult) -> tuple[np.ndarray, float]:
    """Multiplier-weighted stored input, clipped onto the input box.

    The exact convex combination lies in the box by convexity; clipping only
    strips float dust.  The pre-clip overshoot is returned so the input-box
    monitor can record it.
    """
    lam = query.multipliers
    inputs = np.vstack([store.trajectories[j].inputs[k] for j, k in store.index_map[query.columns]])
    raw = lam @ inputs
    lower = store.system.input_lower
    upper = store.system.input_upper
    gap = float(np.maximum(raw - upper, 0.0).max(initial=0.0))
    gap = max(gap, float(np.maximum(lower - raw, 0.0).max(initial=0.0)))
    return np.clip(raw, lower, upper), gap


def _support_decrement(store: SafeSetStore, query: QueryResult) -> float:
    """Multiplier-weighted stage cost of the stored support points."""
    lam = query.multipliers
    total = 0.0
    for i in np.nonzero(lam > 0.0)[0]:
        col = int(query.columns[i])
        total += float(lam[i]) * store.stage_cost_of_column(col)
    return total


def policy_eval(store: SafeSetStore, x, config: PolicyConfig = PolicyConfig()) -> PolicyStep:
    """Evaluate the policy at x.

    Global mode solves over every stored point.  Local mode starts from the
    nearest-neighbour selection; with the "expand" fallback an infeasible
    selection is retried with the neighbour count doubled until it covers
    the whole store (at which point local equals global).  Raises
    :class:`PolicyInfeasible` when no admissible combination exists.
    """
    x = np.asarray(x, dtype=float)
    if config.mode == GLOBAL_MODE:
        query = eval_q_global(store, x, config.feas_tol)
        if not query.feasible:
            raise PolicyInfeasible(f"state {x.tolist()} is outside the stored hull")
        u, gap = _weighted_input(store, query)
        return PolicyStep(input=u, query=query, fallback_used=False, input_box_gap=gap)

    longest = max(len(t.states) for t in store.trajectories)
    n = config.n_neighbors
    fallback_used = False
    while True:
        selection = knn_select(store, x, n)
        query = eval_q_local(store, x, selection, config.feas_tol)
        if query.feasible:
            u, gap = _weighted_input(store, query)
            return PolicyStep(
                input=u, query=query, fallback_used=fallback_used, input_box_gap=gap
            )
        if config.fallback == "fail" or n >= longest:
            raise PolicyInfeasible(
                f"state {x.tolist()} is outside the selected hull "
                f"(n_neighbors={n}, fallback={config.fallback!r})"
            )
        n = min(2 * n, longest)
        fallback_used = True


@dataclass(frozen=True)
class StepRecord:
    """One applied step of a closed-loop run, with its monitor verdicts."""

    state: np.ndarray
    input: np.ndarray
    q_value: float
    stage_cost: float
    monitors: dict[str, bool] = field(default_factory=dict)
    fallback_used: bool = False


@dataclass(frozen=True)
class SimulationReport:
    """Everything a closed-loop run produced.

    ``terminated`` is one of "origin", "terminal_set", "max_steps",
    "infeasible".  ``realized_cost`` sums the stage costs of every record
    (including the terminal one).  ``all_monitors_passed`` aggregates the
    enforced monitors only: the decrease monitor is advisory when the store
    is uncertified, and its verdicts then land in ``warning_count``.
    """

    steps: tuple[StepRecord, ...]
    terminated: str
    realized_cost: float
    initial_q: float
    all_monitors_passed: bool
    fallback_count: int
    warning_count: int
    mode: str


def _terminal_reached(store: SafeSetStore, x, feas_tol: float) -> bool:
    if store.mode == ORIGIN_MODE:
        return float(x @ x) <= ORIGIN_EPSILON
    return store.terminal_set.contains(x, feas_tol)


def run_closed_loop(
    system: LtiSystem,
    store: SafeSetStore,
    x0,
    config: PolicyConfig = PolicyConfig(),
) -> SimulationReport:
    """Run the policy from x0 until arrival, infeasibility or max_steps.

    The system is passed explicitly so a report can be generated against a
    plant that differs from the one the store was built with; monitors are
    only meaningful when the two agree.
    """
    x = np.asarray(x0, dtype=float)
    records: list[StepRecord] = []
    fallback_count = 0
    warning_count = 0
    enforced_ok = True
    terminated = "max_steps"
    initial_q = math.nan

    for step_index in range(config.max_steps + 1):
        probe = eval_q_global(store, x, config.feas_tol)
        q_here = probe.value if probe.feasible else math.inf
        if step_index == 0 and probe.feasible:
            initial_q = q_here

        if _terminal_reached(store, x, config.feas_tol):
            records.append(
                StepRecord(
                    state=x.copy(),
                    input=np.zeros(system.input_dim),
                    q_value=q_here,
                    stage_cost=float(store.stage_cost(x, np.zeros(system.input_dim))),
                    monitors={},
                    fallback_used=False,
                )
            )
            terminated = "origin" if store.mode == ORIGIN_MODE else "terminal_set"
            break
        if step_index >= config.max_steps:
            terminated = "max_steps"
            break

        try:
            pstep = policy_eval(store, x, config)
        except PolicyInfeasible:
            terminated = "infeasible"
            enforced_ok = False
            break
        if pstep.fallback_used:
            fallback_count += 1

        u = pstep.input
        x_next = system.step(x, u)
        q_next = eval_q_global(store, x_next, config.feas_tol)
        decrement = _support_decrement(store, pstep.query)

        monitors = {
            "containment": q_next.feasible,
            "state_box": system.state_in_box(x_next, config.feas_tol),
            "input_box": pstep.input_box_gap <= config.feas_tol,
            "lyapunov_decrease": bool(
                q_next.feasible
                and q_next.value - pstep.query.value <= -decrement + config.lyapunov_tol
            ),
        }
        for name, verdict in monitors.items():
            if verdict:
                continue
            if name == "lyapunov_decrease" and not store.certified:
                warning_count += 1
            else:
                enforced_ok = False

        records.append(
            StepRecord(
                state=x.copy(),
                input=u.copy(),
                q_value=pstep.query.value,
                stage_cost=float(store.stage_cost(x, u)),
                monitors=monitors,
                fallback_used=pstep.fallback_used,
            )
        )
        x = x_next

    realized = float(sum(r.stage_cost for r in records))
    return SimulationReport(
        steps=tuple(records),
        terminated=terminated,
        realized_cost=realized,
        initial_q=float(initial_q),
        all_monitors_passed=enforced_ok and terminated in ("origin", "terminal_set"),
        fallback_count=fallback_count,
        warning_count=warning_count,
        mode=config.mode,
    )


def report_to_trajectory(report: SimulationReport, store: SafeSetStore) -> Trajectory:
    """Convert a goal-reaching origin-mode run into a storable trajectory.

    The last record already carries a zero input, so the result satisfies
    the origin-mode storage requirements by construction.  Terminal-set
    runs are not storable this way: a zero terminal input generally does
    not keep the evolved terminal state inside the goal hull.
    """
    if report.terminated != "origin":
        raise ValueError(
            f"only origin-terminated runs can be stored (got {report.terminated!r})"
        )
    states = np.vstack([r.state for r in report.steps])
    inputs = np.vstack([r.input for r in report.steps])
    return Trajectory(states, inputs, compute_cost_to_go(states, inputs, store.stage_cost))


# ---------------------------------------------------------------------------
# candidate-shift verification


def _shifted_candidate(store: SafeSetStore, lam_full: np.ndarray) -> np.ndarray | None:
    """Shift each trajectory's multipliers one step toward its terminal point.

    Origin mode keeps the terminal mass on the terminal point; terminal-set
    mode redistributes it over the terminal states through the hull weights
    of each terminal evolution.  Returns None when a redistribution weight
    cannot be computed (a storage requirement must have been violated).
    """
    shifted = np.zeros_like(lam_full)
    for j, t in enumerate(store.trajectories):
        start = int(store.offsets[j])
        block = lam_full[start : start + len(t.states)]
        T = t.duration
        if T == 0:
            shifted[start] += block[0]
            continue
        shifted[start + 1 : start + T + 1] += block[:T]
        if store.mode == ORIGIN_MODE:
            shifted[start + T] += block[T]
    if store.mode == TERMINAL_MODE:
        for j, t in enumerate(store.trajectories):
            start = int(store.offsets[j])
            mass = lam_full[start + t.duration]
            if mass == 0.0:
                continue
            evolved = store.system.step(t.states[-1], t.inputs[-1])
            weights = store.terminal_set.hull_weights(evolved)
            if weights is None:
                return None
            # spread the terminal mass over the trajectories' terminal points
            for w, vertex in zip(weights, store.terminal_set.vertices):
                if w <= 0.0:
                    continue
                placed = False
                for i, ti in enumerate(store.trajectories):
                    if np.array_equal(ti.states[-1], vertex):
                        shifted[int(store.offsets[i]) + ti.duration] += mass * w
                        placed = True
                        break
                if not placed:  # pragma: no cover - build guarantees coverage
                    return None
    return shifted


def verify_candidate_shift(
    store: SafeSetStore, q_at_t: QueryResult, feas_tol: float = FEAS_TOL
) -> bool:
    """Check the shifted-multiplier candidate behind the decrease argument.

    Given the optimal multipliers at time t, the shifted candidate must

    1. remain a valid convex weighting (nonnegative, summing to one),
    2. interpolate the next closed-loop state up to the slack caused by
       terminal states that are only epsilon-close to the origin, and
    3. cost no less than the interpolated value at its own combination
       point — i.e. it upper-bounds the next value.

    Returns False when any check fails; a store violating the zero
    terminal-input requirement shows up here with a combination point far
    from the true next state.
    """
    if not q_at_t.feasible:
        return False
    lam_full = np.zeros(store.point_count)
    lam = np.maximum(q_at_t.multipliers, 0.0)
    total = lam.sum()
    if total <= 0.0:
        return False
    lam = lam / total
    lam_full[q_at_t.columns] = lam

    x_t = store.point_matrix @ lam_full
    inputs = np.vstack(
        [store.trajectories[j].inputs[k] for j, k in store.index_map[q_at_t.columns]]
    )
    u_t = lam @ inputs
    x_next = store.system.step(x_t, np.clip(u_t, store.system.input_lower, store.system.input_upper))

    shifted = _shifted_candidate(store, lam_full)
    if shifted is None:
        return False

    # 1. convex weighting (exact algebra up to float dust)
    if abs(shifted.sum() - 1.0) > 10 * feas_tol or shifted.min() < -feas_tol:
        return False

    # 2. the candidate's combination point vs the true next state, allowing
    #    for terminal points that are only epsilon-close to the origin
    slack = 0.0
    if store.mode == ORIGIN_MODE:
        drift = store.system.a_matrix - np.eye(store.state_dim)
        for j, t in enumerate(store.trajectories):
            mass = lam_full[int(store.offsets[j]) + t.duration]
            if mass > 0.0:
                slack += mass * float(np.abs(drift @ t.states[-1]).max())
    candidate_point = store.point_matrix @ shifted
    if np.abs(candidate_point - x_next).max() > 10 * feas_tol + slack:
        return False

    # 3. the candidate's cost upper-bounds the value at its own point
    candidate_cost = float(store.cost_vector @ shifted)
    from safeq.qfunc import eval_q_global as _evalq

    at_candidate = _evalq(store, candidate_point, feas_tol)
    if not at_candidate.feasible:
        return False
    return at_candidate.value <= candidate_cost + 10 * feas_tol * (1.0 + abs(candidate_cost))


# ---------------------------------------------------------------------------
# report persistence


def save_report(report: SimulationReport, path: str | os.PathLike) -> None:
    """Write a run report as versioned JSON (bit-exact float round trip)."""
    payload = {
        "version": REPORT_VERSION,
        "mode": report.mode,
        "terminated": report.terminated,
        "realized_cost": report.realized_cost,
        # strict JSON has no NaN; an infeasible start has no initial value
        "initial_q": None if math.isnan(report.initial_q) else report.initial_q,
        "all_monitors_passed": report.all_monitors_passed,
        "fallback_count": report.fallback_count,
        "warning_count": report.warning_count,
        "steps": [
            {
                "state": r.state.tolist(),
                "input": r.input.tolist(),
                "q_value": r.q_value,
                "stage_cost": r.stage_cost,
                "monitors": r.monitors,
                "fallback_used": r.fallback_used,
            }
            for r in report.steps
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_report(path: str | os.PathLike) -> SimulationReport:
    """Read back a report written by :func:`save_report`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != REPORT_VERSION:
        raise ValueError(
            f"{path}: report version {version!r} is not supported (expected {REPORT_VERSION!r})"
        )
    steps = tuple(
        StepRecord(
            state=np.asarray(s["state"], dtype=float),
            input=np.asarray(s["input"], dtype=float),
            q_value=float(s["q_value"]),
            stage_cost=float(s["stage_cost"]),
            monitors=dict(s["monitors"]),
            fallback_used=bool(s["fallback_used"]),
        )
        for s in payload["steps"]
    )
    initial_q = payload["initial_q"]
    return SimulationReport(
        steps=steps,
        terminated=payload["terminated"],
        realized_cost=float(payload["realized_cost"]),
        initial_q=math.nan if initial_q is None else float(initial_q),
        all_monitors_passed=bool(payload["all_monitors_passed"]),
        fallback_count=int(payload["fallback_count"]),
        warning_count=int(payload["warning_count"]),
        mode=payload["mode"],
    )
