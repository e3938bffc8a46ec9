"""Trajectory validation, store assembly, and the dataset file format."""

import json

import numpy as np
import pytest

from safeq import (
    DatasetFormatError,
    HullDistanceCost,
    QuadCost,
    TerminalSet,
    Trajectory,
    ValidationError,
    build_safe_set,
    compute_cost_to_go,
    load_dataset,
    save_dataset,
    validate_trajectory,
)
from safeq.store import ORIGIN_MODE, TERMINAL_MODE
from safeq.datasets import double_integrator, stage_cost


def hand_trajectory():
    """Two-step double-integrator run that parks at the origin exactly."""
    states = [[1.0, -1.0], [0.0, 0.0]]
    inputs = [[1.0], [0.0]]
    return Trajectory(states, inputs, [2.0, 0.0])


class TestCostToGo:
    def test_hand_example(self):
        ctg = compute_cost_to_go(
            [[2.0], [1.0], [0.0]],
            [[-1.0], [-1.0], [0.0]],
            QuadCost(np.eye(1), np.eye(1)),
        )
        assert np.array_equal(ctg, [7.0, 2.0, 0.0])

    def test_resting_at_origin_costs_nothing(self):
        ctg = compute_cost_to_go(
            np.zeros((4, 2)), np.zeros((4, 1)), QuadCost(np.eye(2), np.eye(1))
        )
        assert np.array_equal(ctg, np.zeros(4))

    def test_state_only_weighting_ignores_inputs(self):
        ctg = compute_cost_to_go(
            [[0.0, 0.0]], [[0.7]], QuadCost(np.eye(2), np.zeros((1, 1)))
        )
        assert ctg[0] == 0.0


class TestValidateTrajectory:
    def setup_method(self):
        self.system = double_integrator()
        self.cost = stage_cost()

    def check(self, traj, **kw):
        return validate_trajectory(traj, self.system, self.cost, **kw)

    def test_hand_trajectory_is_clean(self):
        assert self.check(hand_trajectory()) == []

    def test_dynamics_residual(self):
        traj = Trajectory([[1.0, -1.0], [0.5, 0.0]], [[1.0], [0.0]], [2.0, 0.25])
        violations = self.check(traj)
        assert any(v.startswith("dynamics") for v in violations)

    def test_state_leaves_box(self):
        traj = Trajectory([[11.0, 0.0], [11.0, 0.0]], [[0.0], [0.0]], [242.0, 121.0])
        assert any(v.startswith("state-box") for v in self.check(traj))

    def test_input_leaves_box(self):
        traj = Trajectory([[1.0, -1.0], [-0.5, 0.5]], [[1.5], [0.0]], [2.5, 0.5])
        assert any(v.startswith("input-box") for v in self.check(traj))

    def test_terminal_state_away_from_origin(self):
        traj = Trajectory([[0.5, 0.0]], [[0.0]], [0.25])
        assert any(v.startswith("terminal-state") for v in self.check(traj))

    def test_terminal_input_must_be_zero(self):
        traj = Trajectory([[1.0, -1.0], [0.0, 0.0]], [[1.0], [0.5]], [2.0, 0.0])
        violations = self.check(traj)
        assert violations == ["terminal-input: terminal input must be exactly zero"]

    def test_cost_recursion_mismatch(self):
        traj = Trajectory([[1.0, -1.0], [0.0, 0.0]], [[1.0], [0.0]], [3.0, 0.0])
        assert any(v.startswith("cost-recursion") for v in self.check(traj))

    def test_negative_stage_cost_detected(self):
        class ConstantNegativeCost:
            def __call__(self, x, u):
                return -1.0

        traj = Trajectory([[0.0, 0.0]], [[0.0]], [-1.0])
        violations = validate_trajectory(
            traj, self.system, ConstantNegativeCost()
        )
        assert violations == ["stage-cost: negative stage cost along the trajectory"]

    def test_terminal_mode_needs_membership(self):
        ts = TerminalSet([[0.5, 0.0], [-0.5, 0.0], [0.0, 0.25], [0.0, -0.25]])
        cost = HullDistanceCost(ts)
        outside = Trajectory([[3.0, 3.0]], [[0.0]], [float(cost([3.0, 3.0], [0.0]))])
        violations = validate_trajectory(
            outside, self.system, cost, mode=TERMINAL_MODE, terminal_set=ts
        )
        assert any("outside the target hull" in v for v in violations)

    def test_terminal_mode_checks_one_step_evolution(self):
        # (0, 0.25) is a hull vertex but drifts to (0.25, 0.25) under u = 0
        ts = TerminalSet([[0.5, 0.0], [-0.5, 0.0], [0.0, 0.25], [0.0, -0.25]])
        cost = HullDistanceCost(ts)
        parked = Trajectory([[0.0, 0.25]], [[0.0]], [0.0])
        violations = validate_trajectory(
            parked, self.system, cost, mode=TERMINAL_MODE, terminal_set=ts
        )
        assert violations == ["terminal-evolution: A x_T + B u_T leaves the target hull"]

    def test_terminal_mode_requires_a_set(self):
        with pytest.raises(ValueError):
            validate_trajectory(
                hand_trajectory(), self.system, self.cost, mode=TERMINAL_MODE
            )

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            self.check(hand_trajectory(), mode="nowhere")


class TestTrajectoryContainer:
    def test_arrays_are_frozen(self):
        traj = hand_trajectory()
        with pytest.raises(ValueError):
            traj.states[0, 0] = 5.0
        with pytest.raises(ValueError):
            traj.inputs[0, 0] = 5.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Trajectory([[0.0, 0.0]], [[0.0], [0.0]], [0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Trajectory([[np.nan, 0.0]], [[0.0]], [0.0])

    def test_duration(self):
        assert hand_trajectory().duration == 1


class TestBuildSafeSet:
    def test_stacking_layout(self, seed_store):
        store = seed_store
        sizes = [len(t.states) for t in store.trajectories]
        assert store.point_count == sum(sizes)
        assert store.point_matrix.shape == (2, store.point_count)
        assert np.array_equal(store.offsets, np.cumsum([0] + sizes))
        # columns really are the stored states in (trajectory, time) order
        for column in (0, 1, store.point_count - 1):
            j, k = store.index_map[column]
            assert np.array_equal(
                store.point_matrix[:, column], store.trajectories[j].states[k]
            )
            assert store.cost_vector[column] == store.trajectories[j].costs_to_go[k]
            assert store.column_of(j, k) == column

    def test_stage_cost_of_column(self, seed_store):
        rng = np.random.default_rng(7)
        for column in rng.choice(seed_store.point_count, size=12, replace=False):
            j, k = seed_store.index_map[column]
            t = seed_store.trajectories[j]
            expected = seed_store.stage_cost(t.states[k], t.inputs[k])
            assert seed_store.stage_cost_of_column(int(column)) == expected

    def test_cost_vector_obeys_recursion_within_each_trajectory(self, seed_store):
        store = seed_store
        for j in range(len(store.trajectories)):
            lo, hi = store.offsets[j], store.offsets[j + 1]
            for c in range(lo, hi - 1):
                stage = store.stage_cost_of_column(c)
                assert abs(store.cost_vector[c] - (stage + store.cost_vector[c + 1])) < 1e-9

    def test_duplicates_are_retained(self):
        traj = hand_trajectory()
        store = build_safe_set(
            [traj, hand_trajectory()], double_integrator(), stage_cost()
        )
        assert store.point_count == 4
        assert np.array_equal(store.point_matrix[:, 0], store.point_matrix[:, 2])

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            build_safe_set([], double_integrator(), stage_cost())

    def test_invalid_trajectory_rejected_with_index(self):
        bad = Trajectory([[0.5, 0.0]], [[0.0]], [0.25])
        with pytest.raises(ValidationError, match="trajectory 1 rejected"):
            build_safe_set([hand_trajectory(), bad], double_integrator(), stage_cost())

    def test_origin_mode_requires_quadratic_cost(self):
        ts = TerminalSet([[0.5, 0.0], [-0.5, 0.0]])
        with pytest.raises(ValidationError, match="quadratic"):
            build_safe_set(
                [hand_trajectory()], double_integrator(), HullDistanceCost(ts)
            )

    def test_terminal_mode_rejects_quadratic_cost(self):
        with pytest.raises(ValidationError, match="vanishes"):
            build_safe_set(
                [hand_trajectory()],
                double_integrator(),
                stage_cost(),
                mode=TERMINAL_MODE,
            )

    def test_declared_hull_must_match_stored_terminals(self):
        system = double_integrator()
        diamond = TerminalSet([[0.5, 0.0], [-0.5, 0.0], [0.0, 0.25], [0.0, -0.25]])
        # both trajectories park on the x-axis, whose hull misses (0, 0.25)
        at = lambda p: Trajectory([[p, 0.0]], [[0.0]], [0.0])
        with pytest.raises(ValidationError, match="vertex outside"):
            build_safe_set(
                [at(0.5), at(-0.5)],
                system,
                HullDistanceCost(diamond),
                mode=TERMINAL_MODE,
            )

    def test_stored_terminal_outside_declared_hull(self):
        system = double_integrator()
        segment = TerminalSet([[0.5, 0.0], [-0.5, 0.0]])
        cost = HullDistanceCost(segment)
        trajs = [
            Trajectory([[p, 0.0]], [[0.0]], [float(cost([p, 0.0], [0.0]))])
            for p in (0.5, -0.5, 0.6)
        ]
        with pytest.raises(ValidationError, match="outside the stage-cost hull"):
            build_safe_set(trajs, system, cost, mode=TERMINAL_MODE)

    def test_terminal_demo_store_is_certified_and_modal(self, demo_store):
        assert demo_store.mode == TERMINAL_MODE
        assert demo_store.certified  # hull-distance cost supports the decrease test
        assert demo_store.terminal_set is not None
        assert len(demo_store.trajectories) == 4


class TestDatasetRoundTrip:
    def test_bit_exact_round_trip(self, seed_store, tmp_path):
        path = tmp_path / "seed.json"
        save_dataset(seed_store, path)
        loaded = load_dataset(path)
        assert loaded.mode == seed_store.mode
        assert np.array_equal(loaded.point_matrix, seed_store.point_matrix)
        assert np.array_equal(loaded.cost_vector, seed_store.cost_vector)
        assert np.array_equal(loaded.index_map, seed_store.index_map)
        assert np.array_equal(loaded.system.a_matrix, seed_store.system.a_matrix)
        assert np.array_equal(
            loaded.stage_cost.state_weight, seed_store.stage_cost.state_weight
        )

    def test_terminal_mode_round_trip(self, demo_store, tmp_path):
        path = tmp_path / "demo.json"
        save_dataset(demo_store, path)
        loaded = load_dataset(path)
        assert loaded.mode == TERMINAL_MODE
        assert isinstance(loaded.stage_cost, HullDistanceCost)
        assert np.array_equal(
            np.sort(loaded.terminal_set.vertices, axis=0),
            np.sort(demo_store.terminal_set.vertices, axis=0),
        )
        assert np.array_equal(loaded.point_matrix, demo_store.point_matrix)

    def test_rewritten_file_is_identical(self, seed_store, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_dataset(seed_store, first)
        save_dataset(load_dataset(first), second)
        assert first.read_bytes() == second.read_bytes()


class TestDatasetErrors:
    def mutate(self, seed_dataset_path, tmp_path, fn):
        payload = json.loads(seed_dataset_path.read_text())
        fn(payload)
        target = tmp_path / "broken.json"
        target.write_text(json.dumps(payload))
        return target

    def test_not_json(self, tmp_path):
        path = tmp_path / "noise.json"
        path.write_text("this is not json {")
        with pytest.raises(DatasetFormatError, match="not valid JSON"):
            load_dataset(path)

    def test_unsupported_version(self, seed_dataset_path, tmp_path):
        path = self.mutate(
            seed_dataset_path, tmp_path, lambda p: p.update(version="ss-v999")
        )
        with pytest.raises(DatasetFormatError, match="version"):
            load_dataset(path)

    def test_missing_key_names_the_key(self, seed_dataset_path, tmp_path):
        path = self.mutate(
            seed_dataset_path, tmp_path, lambda p: p.pop("trajectories")
        )
        with pytest.raises(DatasetFormatError, match="'trajectories'"):
            load_dataset(path)

    def test_unknown_cost_kind(self, seed_dataset_path, tmp_path):
        path = self.mutate(
            seed_dataset_path,
            tmp_path,
            lambda p: p["stage_cost"].update(kind="entropy"),
        )
        with pytest.raises(DatasetFormatError, match="unknown stage cost kind"):
            load_dataset(path)

    def test_unknown_mode(self, seed_dataset_path, tmp_path):
        path = self.mutate(seed_dataset_path, tmp_path, lambda p: p.update(mode="drift"))
        with pytest.raises(DatasetFormatError, match="unknown mode"):
            load_dataset(path)

    def test_bad_system_block(self, seed_dataset_path, tmp_path):
        def corrupt(p):
            p["system"]["a_matrix"] = [[1.0, 1.0]]  # wrong shape

        path = self.mutate(seed_dataset_path, tmp_path, corrupt)
        with pytest.raises(DatasetFormatError, match="system"):
            load_dataset(path)

    def test_corrupted_costs_fail_validation(self, seed_dataset_path, tmp_path):
        def corrupt(p):
            p["trajectories"][0]["costs_to_go"][0] += 0.5

        path = self.mutate(seed_dataset_path, tmp_path, corrupt)
        with pytest.raises(DatasetFormatError, match="cost-recursion"):
            load_dataset(path)
