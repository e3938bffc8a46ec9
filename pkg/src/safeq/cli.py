"""Command-line front end: dataset generation, report tables, simulation.

Subcommands
-----------
seed      write the optimal-trajectory dataset for the double-integrator
          benchmark (optionally from a chosen initial state)
build     compose datasets: append rollouts / optimal runs, inflate with
          tail data, or emit the terminal-set demo dataset
table1    run the policy from the 11 benchmark states; CSV + phase plot
table2    same comparison over the two enlarged stores; CSV
simulate  one closed-loop run with a full JSON report and optional plot
bench     median/p95 per-step policy timing, global vs local
validate  load a dataset file and report whether it passes validation

Every command is deterministic for a fixed seed: rerunning writes
byte-identical CSV and JSON files (timing measurements excepted).  Exit
status is 0 only when every invoked monitor passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from safeq import datasets, plots
from safeq.clqr import NoConvergence, QpStalled, StateConstraintActive
from safeq.policy import (
    PolicyConfig,
    PolicyInfeasible,
    policy_eval,
    run_closed_loop,
    save_report,
)
from safeq.qfunc import eval_q_global
from safeq.store import (
    DatasetFormatError,
    ValidationError,
    build_safe_set,
    load_dataset,
    save_dataset,
)

_COMMANDS = ("seed", "build", "table1", "table2", "simulate", "bench", "validate")


def _fmt(value: float) -> str:
    """17-significant-digit float formatting used in every CSV."""
    return format(float(value), ".17g")


def _parse_state(text: str) -> np.ndarray:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad state {text!r}: {exc}") from None
    if not parts:
        raise argparse.ArgumentTypeError("state must have at least one coordinate")
    return np.asarray(parts, dtype=float)


def _out_dir(ns) -> str:
    path = ns.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def _load_store(ns):
    if not ns.dataset:
        raise SystemExit("this command needs --dataset (a file written by `safeq seed`/`safeq build`)")
    return load_dataset(ns.dataset, tol=ns.tol)


def _run_many(fn, items, parallel):
    """Map fn over items, optionally across threads, preserving order."""
    if parallel and parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _write_csv(path, header, rows, comments=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _policy_config(ns, mode="global"):
    return PolicyConfig(
        mode=getattr(ns, "mode", None) or mode,
        n_neighbors=getattr(ns, "neighbors", None) or 10,
        fallback=getattr(ns, "fallback", None) or "expand",
        max_steps=getattr(ns, "max_steps", None) or 500,
    )


def _monitor_failures(report, x0) -> list[str]:
    """Names of enforced monitors that failed during a run, with context."""
    failures = []
    if report.terminated == "infeasible":
        failures.append(f"x0={x0.tolist()}: policy infeasible (left the stored hull)")
    elif report.terminated == "max_steps":
        failures.append(f"x0={x0.tolist()}: did not reach the goal within max_steps")
    for i, step in enumerate(report.steps):
        for name, passed in step.monitors.items():
            if not passed:
                failures.append(f"x0={x0.tolist()} step {i}: monitor {name} failed")
    return failures


# ---------------------------------------------------------------------------
# subcommands


def cmd_seed(ns) -> int:
    out = _out_dir(ns)
    x0 = ns.x0 if ns.x0 is not None else np.array([-1.0, 3.0])
    system = datasets.double_integrator()
    try:
        trajectory = datasets.seed_trajectory(x0, system)
    except (NoConvergence, QpStalled, StateConstraintActive) as exc:
        print(f"seeding from x0={x0.tolist()} failed: {exc}", file=sys.stderr)
        return 1
    store = build_safe_set([trajectory], system, datasets.stage_cost())
    path = os.path.join(out, "seed.json")
    save_dataset(store, path)
    print(f"wrote {path}: 1 trajectory, {store.point_count} points, "
          f"cost-to-go {trajectory.costs_to_go[0]:.4f}")
    return 0


def cmd_build(ns) -> int:
    out = _out_dir(ns)
    path = os.path.join(out, "build.json")
    if ns.terminal_demo:
        store = datasets.terminal_demo_store()
    else:
        store = _load_store(ns)
        if ns.rollouts:
            starts = datasets.sample_hull_states(store, ns.rollouts, ns.seed)
            store = datasets.extend_with_rollouts(store, starts, _policy_config(ns))
        if ns.rollout_from:
            store = datasets.extend_with_rollouts(store, ns.rollout_from, _policy_config(ns))
        if ns.optimal_from:
            for x0 in ns.optimal_from:
                store = datasets.extend_with_optimum(store, x0)
        if ns.min_points:
            store = datasets.inflate_with_tails(store, ns.min_points)
    save_dataset(store, path)
    print(f"wrote {path}: {len(store.trajectories)} trajectories, "
          f"{store.point_count} points, mode {store.mode}")
    return 0


def cmd_table1(ns) -> int:
    out = _out_dir(ns)
    store = _load_store(ns)
    config = _policy_config(ns)
    states = [np.asarray(s) for s in datasets.BENCHMARK_STATES]

    def one(x0):
        value = eval_q_global(store, x0).value
        report = run_closed_loop(store.system, store, x0, config)
        return value, report

    results = _run_many(one, states, ns.parallel)
    rows = []
    failures = []
    reports = []
    for x0, (value, report) in zip(states, results):
        reports.append(report)
        failures.extend(_monitor_failures(report, x0))
        bound_ok = report.realized_cost <= value + config.cost_bound_tol
        rows.append([_fmt(x0[0]), _fmt(x0[1]), _fmt(report.realized_cost),
                     _fmt(value), str(bound_ok).lower()])
        if not bound_ok:
            failures.append(f"x0={x0.tolist()}: realized cost exceeds the value bound")

    csv_path = os.path.join(out, "table1.csv")
    _write_csv(csv_path, ["x0_1", "x0_2", "realized_cost", "value", "bound_holds"], rows)
    plot_path = os.path.join(out, "table1.pdf")
    plots.save_phase_plane(store, reports, plot_path)
    print(f"wrote {csv_path} and {plot_path}")
    for line in failures:
        print(f"FAIL {line}", file=sys.stderr)
    return 1 if failures else 0


def cmd_table2(ns) -> int:
    out = _out_dir(ns)
    seed_store = _load_store(ns)
    config = _policy_config(ns)
    states = [np.asarray(s) for s in datasets.BENCHMARK_STATES]

    rollout_store = datasets.extend_with_rollouts(seed_store, states[1:], config)
    optimum_store = datasets.extend_with_optimum(seed_store, states[1])

    def one(x0):
        q1 = eval_q_global(rollout_store, x0).value
        r1 = run_closed_loop(rollout_store.system, rollout_store, x0, config)
        q2 = eval_q_global(optimum_store, x0).value
        r2 = run_closed_loop(optimum_store.system, optimum_store, x0, config)
        return q1, r1, q2, r2

    results = _run_many(one, states, ns.parallel)
    rows = []
    failures = []
    for x0, (q1, r1, q2, r2) in zip(states, results):
        failures.extend(_monitor_failures(r1, x0))
        failures.extend(_monitor_failures(r2, x0))
        order_ok = r2.realized_cost <= r1.realized_cost + 1e-9
        if not order_ok:
            failures.append(f"x0={x0.tolist()}: larger store produced a worse run")
        rows.append([_fmt(x0[0]), _fmt(x0[1]),
                     _fmt(r1.realized_cost), _fmt(q1),
                     _fmt(r2.realized_cost), _fmt(q2),
                     str(order_ok).lower()])

    csv_path = os.path.join(out, "table2.csv")
    comments = (
        "rollout termination: squared state norm <= 1e-10 (same rule as the stored data); "
        f"max_steps={config.max_steps}",
    )
    _write_csv(
        csv_path,
        ["x0_1", "x0_2", "realized_cost_rollout_store", "value_rollout_store",
         "realized_cost_optimum_store", "value_optimum_store", "larger_store_no_worse"],
        rows,
        comments,
    )
    print(f"wrote {csv_path}")
    for line in failures:
        print(f"FAIL {line}", file=sys.stderr)
    return 1 if failures else 0


def cmd_simulate(ns) -> int:
    out = _out_dir(ns)
    store = _load_store(ns)
    if ns.x0 is None:
        raise SystemExit("simulate needs --x0")
    config = _policy_config(ns)
    report = run_closed_loop(store.system, store, ns.x0, config)

    report_path = os.path.join(out, "simulate-report.json")
    save_report(report, report_path)
    print(f"wrote {report_path}: terminated={report.terminated} "
          f"steps={len(report.steps)} realized={report.realized_cost:.6g} "
          f"initial_value={report.initial_q:.6g} fallbacks={report.fallback_count}")
    if ns.plot:
        plot_path = os.path.join(out, "simulate.pdf")
        plots.save_phase_plane(store, [report], plot_path,
                               title=f"Closed loop from {ns.x0.tolist()}")
        value_path = os.path.join(out, "simulate-value.pdf")
        plots.save_value_decrease([report], value_path)
        print(f"wrote {plot_path} and {value_path}")

    if report.terminated == "infeasible":
        print(f"PolicyInfeasible: x0={ns.x0.tolist()} is outside the stored hull",
              file=sys.stderr)
    for line in _monitor_failures(report, ns.x0):
        print(f"FAIL {line}", file=sys.stderr)
    return 0 if report.all_monitors_passed else 1


def cmd_bench(ns) -> int:
    out = _out_dir(ns)
    min_points = ns.min_points or 2000
    trajectories = ns.trajectories or 8
    if ns.dataset:
        store = load_dataset(ns.dataset, tol=ns.tol)
        missing = trajectories - len(store.trajectories)
        if missing > 0:
            starts = datasets.sample_hull_states(store, missing, ns.seed)
            store = datasets.extend_with_rollouts(store, starts)
        store = datasets.inflate_with_tails(store, min_points)
    else:
        store = datasets.bench_store(min_points, trajectories, ns.seed)

    neighbors = ns.neighbors or 10
    probe_count = ns.probes or 25
    probe_source = store.trajectories[0].states
    probes = [probe_source[2 + (i % max(1, len(probe_source) - 4))]
              for i in range(probe_count)]
    modes = [
        ("global", PolicyConfig(mode="global")),
        ("local", PolicyConfig(mode="local", n_neighbors=neighbors)),
    ]
    rows = []
    medians = {}
    for name, config in modes:
        for x in probes[:2]:  # warm-up
            policy_eval(store, x, config)
        samples = []
        for x in probes:
            start = time.perf_counter()
            policy_eval(store, x, config)
            samples.append((time.perf_counter() - start) * 1e3)
        samples.sort()
        median = statistics.median(samples)
        p95 = samples[min(len(samples) - 1, math.ceil(0.95 * len(samples)) - 1)]
        variables = (len(store.trajectories) * neighbors if name == "local"
                     else store.point_count)
        medians[name] = median
        rows.append([name, str(store.point_count), str(variables),
                     str(len(samples)), _fmt(median), _fmt(p95)])

    csv_path = os.path.join(out, "bench.csv")
    _write_csv(csv_path, ["mode", "store_points", "decision_variables",
                          "count", "median_ms", "p95_ms"], rows)
    print(f"wrote {csv_path}: global median {medians['global']:.3f} ms, "
          f"local median {medians['local']:.3f} ms")
    return 0


def cmd_validate(ns) -> int:
    if not ns.dataset:
        raise SystemExit("validate needs --dataset")
    try:
        store = load_dataset(ns.dataset, tol=ns.tol)
    except (DatasetFormatError, ValidationError) as exc:
        print(f"INVALID {ns.dataset}: {exc}", file=sys.stderr)
        return 1
    print(f"OK {ns.dataset}: mode={store.mode} trajectories={len(store.trajectories)} "
          f"points={store.point_count} certified={store.certified}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--dataset", help="dataset JSON file to operate on")
    shared.add_argument("--out", help="output directory (default: current)")
    shared.add_argument("--tol", type=float, default=None,
                        help="dataset validation tolerance (default 1e-8)")
    shared.add_argument("--seed", type=int, default=None,
                        help="seed for any sampling the command performs")
    shared.add_argument("--parallel", type=int, default=None,
                        help="thread count for independent runs")
    shared.add_argument("--config", help="JSON file with defaults for these flags")

    parser = argparse.ArgumentParser(
        prog="safeq",
        description="Safe-set value interpolation: datasets, tables, simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seed", parents=[shared],
                       help="write the optimal-trajectory benchmark dataset")
    p.add_argument("--x0", type=_parse_state, default=None,
                   help="initial state, comma separated (default -1,3)")

    p = sub.add_parser("build", parents=[shared], help="compose datasets")
    p.add_argument("--rollouts", type=int, default=None,
                   help="append N policy rollouts from sampled interior states")
    p.add_argument("--rollout-from", type=_parse_state, action="append", default=None,
                   help="append a policy rollout from this state (repeatable)")
    p.add_argument("--optimal-from", type=_parse_state, action="append", default=None,
                   help="append the optimal trajectory from this state (repeatable)")
    p.add_argument("--min-points", type=int, default=None,
                   help="inflate the store with tail data to at least this many points")
    p.add_argument("--terminal-demo", action="store_true",
                   help="emit the terminal-set demo dataset instead")

    for name, help_text in (
        ("table1", "benchmark-state comparison over the seed dataset"),
        ("table2", "comparison over the two enlarged stores"),
    ):
        p = sub.add_parser(name, parents=[shared], help=help_text)
        p.add_argument("--max-steps", type=int, default=None)

    p = sub.add_parser("simulate", parents=[shared], help="run one closed loop")
    p.add_argument("--x0", type=_parse_state, default=None, help="initial state")
    p.add_argument("--mode", choices=("global", "local"), default=None)
    p.add_argument("--neighbors", type=int, default=None)
    p.add_argument("--fallback", choices=("expand", "fail"), default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("bench", parents=[shared], help="policy timing comparison")
    p.add_argument("--min-points", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=None)
    p.add_argument("--neighbors", type=int, default=None)
    p.add_argument("--probes", type=int, default=None)

    sub.add_parser("validate", parents=[shared], help="check a dataset file")
    return parser


def _apply_config(ns) -> None:
    """Fill unset options from the JSON config file, rejecting unknown keys."""
    if not ns.config:
        return
    with open(ns.config, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemExit(f"config {ns.config}: not valid JSON ({exc})")
    if not isinstance(data, dict):
        raise SystemExit(f"config {ns.config}: expected a JSON object")
    known = {k for k in vars(ns) if k not in ("command", "config")}
    unknown = set(data) - known
    if unknown:
        raise SystemExit(
            f"config {ns.config}: unknown keys for `{ns.command}`: "
            + ", ".join(sorted(unknown))
        )
    for key, value in data.items():
        current = getattr(ns, key, None)
        if current is None or current is False:
            if key in ("x0", "rollout_from", "optimal_from"):
                if key == "x0":
                    value = _parse_state(value) if isinstance(value, str) else np.asarray(value, dtype=float)
                else:
                    value = [np.asarray(v, dtype=float) for v in value]
            setattr(ns, key, value)


def main(argv=None) -> int:
    ns = _build_parser().parse_args(argv)
    _apply_config(ns)
    if ns.tol is None:
        ns.tol = 1e-8
    if ns.seed is None:
        ns.seed = 2024
    handler = {
        "seed": cmd_seed,
        "build": cmd_build,
        "table1": cmd_table1,
        "table2": cmd_table2,
        "simulate": cmd_simulate,
        "bench": cmd_bench,
        "validate": cmd_validate,
    }[ns.command]
    try:
        return handler(ns)
    except (DatasetFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PolicyInfeasible as exc:
        print(f"PolicyInfeasible: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
