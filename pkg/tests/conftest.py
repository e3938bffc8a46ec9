import numpy as np
import pytest

from safeq import datasets


@pytest.fixture(scope="session")
def di_system():
    return datasets.double_integrator()


@pytest.fixture(scope="session")
def di_stage_cost():
    return datasets.stage_cost()


@pytest.fixture(scope="session")
def seed_solution():
    """The optimizer's full answer from the canonical start, solved once."""
    from safeq.clqr import solve_clqr_full

    return solve_clqr_full(
        datasets.double_integrator(), datasets.planner_cost(), np.array([-1.0, 3.0])
    )


@pytest.fixture(scope="session")
def seed_store():
    return datasets.seed_store()


@pytest.fixture(scope="session")
def rollout_store(seed_store):
    """Seed store plus one policy rollout per remaining benchmark state."""
    starts = [np.asarray(s) for s in datasets.BENCHMARK_STATES[1:]]
    return datasets.extend_with_rollouts(seed_store, starts)


@pytest.fixture(scope="session")
def optimum_store(seed_store):
    return datasets.extend_with_optimum(seed_store, datasets.BENCHMARK_STATES[1])


@pytest.fixture(scope="session")
def demo_store():
    return datasets.terminal_demo_store()


@pytest.fixture(scope="session")
def seed_dataset_path(tmp_path_factory, seed_store):
    from safeq.store import save_dataset

    path = tmp_path_factory.mktemp("data") / "seed.json"
    save_dataset(seed_store, path)
    return path


@pytest.fixture(scope="session")
def timing_store():
    """Inflated store for the local-vs-global timing comparison (slow build)."""
    return datasets.bench_store(min_points=2000, n_trajectories=8, seed=2024)
