"""Trajectory storage: validation, cost-to-go bookkeeping and persistence.

A :class:`SafeSetStore` collects feasible trajectories together with the
system that generated them and the stage cost their costs-to-go were summed
under.  The stacked ``point_matrix`` / ``cost_vector`` pair is the data every
value-interpolation LP is built from, and ``index_map`` takes a column back
to its (trajectory, time) origin.

Two operating modes exist.  In ``"origin"`` mode every trajectory must end
essentially at the origin with a zero terminal input; in ``"terminal_set"``
mode trajectories end inside the hull of all stored terminal states and
their terminal evolution stays inside that hull.  Violating trajectories are
rejected at build time with messages naming the broken storage requirement.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from safeq.lp import FEAS_TOL, lp_feasible
from safeq.model import (
    HullDistanceCost,
    IndicatorCost,
    LtiSystem,
    QuadCost,
    TerminalSet,
)

DATASET_VERSION = "ss-v1"

ORIGIN_MODE = "origin"
TERMINAL_MODE = "terminal_set"

# Squared-norm ball around the origin accepted as "arrived" for terminal
# states in origin mode; matches the reference solver's truncation rule.
ORIGIN_EPSILON = 1e-10

# Tolerance for the exact-arithmetic cost recursion J_k = h_k + J_{k+1}.
RECURSION_TOL = 1e-12

StageCost = QuadCost | HullDistanceCost | IndicatorCost


class ValidationError(ValueError):
    """A trajectory failed the storage requirements at build time."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; the message carries field context."""


@dataclass(frozen=True)
class Trajectory:
    """A finite trajectory with its cost-to-go at every point.

    ``states`` has one row per visited state (duration + 1 rows), ``inputs``
    the input applied at each state — including a terminal input, which in
    origin mode must be exactly zero — and ``costs_to_go`` the tail sums of
    the stage cost.
    """

    states: np.ndarray
    inputs: np.ndarray
    costs_to_go: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        inputs = np.array(self.inputs, dtype=float)
        ctg = np.array(self.costs_to_go, dtype=float)
        if states.ndim != 2 or inputs.ndim != 2 or ctg.ndim != 1:
            raise ValueError(
                "states and inputs must be 2-d arrays and costs_to_go 1-d"
            )
        if len(states) < 1:
            raise ValueError("a trajectory has at least one state")
        if not (len(states) == len(inputs) == len(ctg)):
            raise ValueError(
                f"length mismatch: {len(states)} states, {len(inputs)} inputs, "
                f"{len(ctg)} costs-to-go"
            )
        for name, arr in (("states", states), ("inputs", inputs), ("costs_to_go", ctg)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must contain only finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "costs_to_go", ctg)

    @property
    def duration(self) -> int:
        return len(self.states) - 1


def compute_cost_to_go(states, inputs, stage_cost: StageCost) -> np.ndarray:
    """Backward tail sums J_k = h(x_k, u_k) + J_{k+1}, J_{T+1} = 0."""
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    assert len(states) == len(inputs), "states and inputs must pair up"
    ctg = np.zeros(len(states))
    tail = 0.0
    for k in range(len(states) - 1, -1, -1):
        tail = stage_cost(states[k], inputs[k]) + tail
        ctg[k] = tail
    return ctg


def validate_trajectory(
    trajectory: Trajectory,
    system: LtiSystem,
    stage_cost: StageCost,
    mode: str = ORIGIN_MODE,
    terminal_set: TerminalSet | None = None,
    tol: float = 1e-8,
) -> list[str]:
    """Check one trajectory against the storage requirements.

    Returns a list of human-readable violation strings (empty when the
    trajectory is admissible).  ``terminal_set`` is required in terminal-set
    mode and ignored otherwise.
    """
    violations: list[str] = []
    X = trajectory.states
    U = trajectory.inputs
    J = trajectory.costs_to_go
    T = trajectory.duration

    if X.shape[1] != system.state_dim:
        return [
            f"state dimension {X.shape[1]} does not match the system ({system.state_dim})"
        ]
    if U.shape[1] != system.input_dim:
        return [
            f"input dimension {U.shape[1]} does not match the system ({system.input_dim})"
        ]

    if T > 0:
        predicted = X[:-1] @ system.a_matrix.T + U[:-1] @ system.b_matrix.T
        worst = np.abs(X[1:] - predicted).max()
        if worst > tol:
            violations.append(
                f"dynamics: max one-step residual {worst:.3e} exceeds {tol:.1e}"
            )

    if not all(system.state_in_box(x, tol) for x in X):
        violations.append("state-box: a stored state leaves the state box")
    if not all(system.input_in_box(u, tol) for u in U):
        violations.append("input-box: a stored input leaves the input box")

    if mode == ORIGIN_MODE:
        terminal_sq = float(X[-1] @ X[-1])
        if terminal_sq > ORIGIN_EPSILON:
            violations.append(
                f"terminal-state: squared norm {terminal_sq:.3e} exceeds {ORIGIN_EPSILON:.1e}"
            )
        if np.abs(U[-1]).max() != 0.0:
            violations.append("terminal-input: terminal input must be exactly zero")
    elif mode == TERMINAL_MODE:
        if terminal_set is None:
            raise ValueError("terminal-set mode requires a terminal_set")
        if not terminal_set.contains(X[-1]):
            violations.append("terminal-state: terminal state is outside the target hull")
        else:
            evolved = system.step(X[-1], U[-1])
            if not terminal_set.contains(evolved):
                violations.append(
                    "terminal-evolution: A x_T + B u_T leaves the target hull"
                )
    else:
        raise ValueError(f"unknown mode {mode!r}")

    stage = np.array([stage_cost(X[k], U[k]) for k in range(T + 1)])
    recursion = np.abs(J[:-1] - (stage[:-1] + J[1:])).max() if T > 0 else 0.0
    terminal_gap = abs(J[-1] - stage[-1])
    if max(recursion, terminal_gap) > RECURSION_TOL:
        violations.append(
            f"cost-recursion: tail sums deviate by {max(recursion, terminal_gap):.3e}"
        )
    if (stage < -RECURSION_TOL).any():
        violations.append("stage-cost: negative stage cost along the trajectory")

    return violations


@dataclass(frozen=True)
class SafeSetStore:
    """Immutable bundle of validated trajectories plus stacked query data."""

    trajectories: tuple[Trajectory, ...]
    system: LtiSystem
    stage_cost: StageCost
    mode: str
    terminal_set: TerminalSet | None
    point_matrix: np.ndarray     # (n, P) stored states, columns in (traj, time) order
    cost_vector: np.ndarray      # (P,) matching costs-to-go
    index_map: np.ndarray        # (P, 2) rows of (trajectory index, time index)
    offsets: np.ndarray          # (M+1,) first column of each trajectory
    certified: bool

    @property
    def point_count(self) -> int:
        return self.point_matrix.shape[1]

    @property
    def state_dim(self) -> int:
        return self.point_matrix.shape[0]

    def column_of(self, traj_index: int, time_index: int) -> int:
        return int(self.offsets[traj_index]) + time_index

    def stage_cost_of_column(self, column: int) -> float:
        j, k = self.index_map[column]
        t = self.trajectories[j]
        return float(self.stage_cost(t.states[k], t.inputs[k]))


def _stack(trajectories: tuple[Trajectory, ...]):
    n = trajectories[0].states.shape[1]
    columns = []
    costs = []
    index = []
    offsets = [0]
    for j, t in enumerate(trajectories):
        columns.append(t.states.T)
        costs.append(t.costs_to_go)
        index.extend((j, k) for k in range(len(t.states)))
        offsets.append(offsets[-1] + len(t.states))
    point_matrix = np.hstack(columns).reshape(n, -1)
    cost_vector = np.concatenate(costs)
    index_map = np.asarray(index, dtype=int)
    for arr in (point_matrix, cost_vector, index_map):
        arr.setflags(write=False)
    off = np.asarray(offsets, dtype=int)
    off.setflags(write=False)
    return point_matrix, cost_vector, index_map, off


def build_safe_set(
    trajectories,
    system: LtiSystem,
    stage_cost: StageCost,
    mode: str = ORIGIN_MODE,
    tol: float = 1e-8,
) -> SafeSetStore:
    """Validate trajectories and assemble the immutable store.

    In terminal-set mode the target hull is the convex hull of all stored
    terminal states; when the stage cost carries its own vertex set the two
    hulls must coincide.  Duplicate points across trajectories are retained
    as-is — dropping them would break the (trajectory, time) indexing.
    """
    trajectories = tuple(trajectories)
    if not trajectories:
        raise ValidationError("a safe set needs at least one trajectory")

    if mode == ORIGIN_MODE:
        if not isinstance(stage_cost, QuadCost):
            raise ValidationError(
                "origin mode requires a quadratic stage cost (zero at the origin)"
            )
        terminal_set = None
    elif mode == TERMINAL_MODE:
        if not isinstance(stage_cost, (HullDistanceCost, IndicatorCost)):
            raise ValidationError(
                "terminal-set mode requires a stage cost that vanishes on the "
                "target hull (hull-distance or indicator)"
            )
        terminals = np.vstack([t.states[-1] for t in trajectories])
        terminal_set = TerminalSet(np.unique(terminals, axis=0))
        declared = stage_cost.terminal_set
        for v in declared.vertices:
            if not terminal_set.contains(v):
                raise ValidationError(
                    "stage-cost hull has a vertex outside the hull of stored "
                    "terminal states"
                )
        for v in terminal_set.vertices:
            if not declared.contains(v):
                raise ValidationError(
                    "a stored terminal state lies outside the stage-cost hull"
                )
    else:
        raise ValueError(f"unknown mode {mode!r}")

    for j, t in enumerate(trajectories):
        violations = validate_trajectory(
            t, system, stage_cost, mode=mode, terminal_set=terminal_set, tol=tol
        )
        if violations:
            raise ValidationError(
                f"trajectory {j} rejected: " + "; ".join(violations)
            )

    point_matrix, cost_vector, index_map, offsets = _stack(trajectories)
    return SafeSetStore(
        trajectories=trajectories,
        system=system,
        stage_cost=stage_cost,
        mode=mode,
        terminal_set=terminal_set,
        point_matrix=point_matrix,
        cost_vector=cost_vector,
        index_map=index_map,
        offsets=offsets,
        certified=not isinstance(stage_cost, IndicatorCost),
    )


# ---------------------------------------------------------------------------
# persistence


def _system_to_json(system: LtiSystem) -> dict:
    return {
        "a_matrix": system.a_matrix.tolist(),
        "b_matrix": system.b_matrix.tolist(),
        "state_lower": system.state_lower.tolist(),
        "state_upper": system.state_upper.tolist(),
        "input_lower": system.input_lower.tolist(),
        "input_upper": system.input_upper.tolist(),
    }


def _cost_to_json(stage_cost: StageCost) -> dict:
    if isinstance(stage_cost, QuadCost):
        return {
            "kind": "quadratic",
            "state_weight": stage_cost.state_weight.tolist(),
            "input_weight": stage_cost.input_weight.tolist(),
        }
    if isinstance(stage_cost, HullDistanceCost):
        return {"kind": "hull_distance"}
    if isinstance(stage_cost, IndicatorCost):
        return {"kind": "indicator"}
    raise TypeError(f"unknown stage cost {type(stage_cost)!r}")


def save_dataset(store: SafeSetStore, path: str | os.PathLike) -> None:
    """Write the store as versioned JSON.

    Floats go through Python's shortest round-trip repr (at most 17
    significant digits), so loading reproduces every value bit-exactly.
    """
    payload = {
        "version": DATASET_VERSION,
        "mode": store.mode,
        "system": _system_to_json(store.system),
        "stage_cost": _cost_to_json(store.stage_cost),
        "trajectories": [
            {
                "states": t.states.tolist(),
                "inputs": t.inputs.tolist(),
                "costs_to_go": t.costs_to_go.tolist(),
            }
            for t in store.trajectories
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise DatasetFormatError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _float_grid(value, context: str) -> list:
    if not isinstance(value, list) or not value:
        raise DatasetFormatError(f"{context}: expected a non-empty list")
    return value


def load_dataset(path: str | os.PathLike, tol: float = 1e-8) -> SafeSetStore:
    """Load, schema-check and re-validate a dataset written by save_dataset."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: not valid JSON ({exc})") from exc

    if not isinstance(payload, dict):
        raise DatasetFormatError(f"{path}: top level must be an object")
    version = _require(payload, "version", str(path))
    if version != DATASET_VERSION:
        raise DatasetFormatError(
            f"{path}: dataset version {version!r} is not supported "
            f"(expected {DATASET_VERSION!r})"
        )
    mode = _require(payload, "mode", str(path))
    if mode not in (ORIGIN_MODE, TERMINAL_MODE):
        raise DatasetFormatError(f"{path}: unknown mode {mode!r}")

    sys_json = _require(payload, "system", str(path))
    try:
        system = LtiSystem(
            a_matrix=_require(sys_json, "a_matrix", "system"),
            b_matrix=_require(sys_json, "b_matrix", "system"),
            state_lower=_require(sys_json, "state_lower", "system"),
            state_upper=_require(sys_json, "state_upper", "system"),
            input_lower=_require(sys_json, "input_lower", "system"),
            input_upper=_require(sys_json, "input_upper", "system"),
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: bad system block ({exc})") from exc

    traj_json = _require(payload, "trajectories", str(path))
    if not isinstance(traj_json, list) or not traj_json:
        raise DatasetFormatError(f"{path}: trajectories must be a non-empty list")
    trajectories = []
    for j, block in enumerate(traj_json):
        ctx = f"{path}: trajectories[{j}]"
        if not isinstance(block, dict):
            raise DatasetFormatError(f"{ctx}: expected an object")
        try:
            trajectories.append(
                Trajectory(
                    states=_float_grid(_require(block, "states", ctx), f"{ctx}.states"),
                    inputs=_float_grid(_require(block, "inputs", ctx), f"{ctx}.inputs"),
                    costs_to_go=_require(block, "costs_to_go", ctx),
                )
            )
        except (ValueError, TypeError) as exc:
            raise DatasetFormatError(f"{ctx}: {exc}") from exc

    cost_json = _require(payload, "stage_cost", str(path))
    kind = _require(cost_json, "kind", f"{path}: stage_cost")
    if kind == "quadratic":
        try:
            stage_cost: StageCost = QuadCost(
                state_weight=_require(cost_json, "state_weight", "stage_cost"),
                input_weight=_require(cost_json, "input_weight", "stage_cost"),
            )
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: bad stage_cost ({exc})") from exc
    elif kind in ("hull_distance", "indicator"):
        if mode != TERMINAL_MODE:
            raise DatasetFormatError(
                f"{path}: stage cost {kind!r} requires terminal_set mode"
            )
        terminals = np.vstack([t.states[-1] for t in trajectories])
        ts = TerminalSet(np.unique(terminals, axis=0))
        stage_cost = HullDistanceCost(ts) if kind == "hull_distance" else IndicatorCost(ts)
    else:
        raise DatasetFormatError(f"{path}: unknown stage cost kind {kind!r}")

    try:
        return build_safe_set(trajectories, system, stage_cost, mode=mode, tol=tol)
    except ValidationError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
