"""Experiment runners behind the CLI verbs: solver benchmark, failure drill, penalty study."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .decision import PsoConfig, SearchTooLarge, measure_solver, random_problem, run_solver
from .domain import ServerStatus
from .geometry import PenaltyWeights
from .simulator import DecisionTrace, FailureKind, ScenarioConfig, run_scenario, vehicle_at

# ---------------------------------------------------------------------------
# Solver benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    instances: List[dict]
    summary: List[dict]
    timing: List[dict]


def relative_gap(value: float, reference: float) -> float:
    if reference == 0:
        return 0.0 if value == 0 else math.inf
    return value / reference - 1.0


def bench(
    tasks: int,
    servers: int,
    instances: int,
    seed: int = 0,
    solvers: Sequence[str] = ("bf", "pso", "greedy"),
    pso_config: PsoConfig = PsoConfig(),
    timing: bool = True,
    repetitions: int = 1,
) -> BenchResult:
    """Run each solver on ``instances`` seeded random problems.

    Gaps are relative to brute force where it finishes within its node cap;
    instances where it does not are reported without gaps.
    """
    if tasks < 1 or servers < 1 or instances < 1:
        raise ValueError("tasks, servers and instances must be positive")
    solvers = list(dict.fromkeys(solvers))
    rows = []
    times: Dict[str, List[float]] = {s: [] for s in solvers}
    for k in range(instances):
        problem = random_problem(tasks, servers, seed=[seed, k])
        cfg = replace(pso_config, rng_seed=(pso_config.rng_seed + k) % 2**64)
        objectives: Dict[str, Optional[float]] = {}
        for name in solvers:
            try:
                objectives[name] = run_solver(name, problem, cfg).objective
            except SearchTooLarge:
                objectives[name] = None
                continue
            if timing:
                times[name].append(measure_solver(problem, name, repetitions, cfg).mean_ms)
        bf = objectives.get("bf")
        if bf is None and "bf" not in solvers:
            try:
                bf = run_solver("bf", problem).objective
            except SearchTooLarge:
                bf = None
        row = {"instance": k, "tasks": tasks, "servers": servers, "bf_objective": bf}
        for name in solvers:
            if name == "bf":
                continue
            row[f"{name}_objective"] = objectives[name]
            row[f"{name}_gap_pct"] = None if bf is None else 100.0 * relative_gap(objectives[name], bf)
        rows.append(row)

    summary = []
    for name in solvers:
        gaps = [0.0 if name == "bf" else r[f"{name}_gap_pct"] for r in rows if r["bf_objective"] is not None]
        summary.append(
            {
                "solver": name,
                "instances": instances,
                "compared": len(gaps),
                "mean_gap_pct": float(np.mean(gaps)) if gaps else None,
                "median_gap_pct": float(np.median(gaps)) if gaps else None,
                "max_gap_pct": float(np.max(gaps)) if gaps else None,
                "optimal_fraction": (sum(g <= 1e-9 for g in gaps) / len(gaps)) if gaps else None,
            }
        )
    timing_rows = []
    if timing:
        for name in solvers:
            ts = times[name]
            timing_rows.append(
                {
                    "solver": name,
                    "runs": len(ts),
                    "mean_ms": float(np.mean(ts)) if ts else None,
                    "min_ms": float(np.min(ts)) if ts else None,
                    "max_ms": float(np.max(ts)) if ts else None,
                }
            )
    return BenchResult(instances=rows, summary=summary, timing=timing_rows)


# ---------------------------------------------------------------------------
# Failure drill
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureReport:
    server: str
    failed_at_ms: int
    detected_at_ms: Optional[int]
    detection_latency_ms: Optional[int]
    stale_decisions: int
    stale_window_ms: Optional[int]
    first_post_detection_target: Optional[str]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def failure_drill(config: ScenarioConfig, trace: Optional[DecisionTrace] = None) -> List[FailureReport]:
    """Per failure event: when the registry noticed, and what was decided meanwhile.

    A stale decision targets the failed server after it went down but before
    the registry stopped listing it. The stale window runs from the failure to
    the end of the last stale decision's tick.
    """
    fails = [e for e in config.failures.events if e.kind is FailureKind.FAIL]
    if not fails:
        raise ValueError("failure drill needs at least one failure event")
    trace = trace or run_scenario(config)
    col = {sid: j for j, sid in enumerate(trace.server_ids)}
    dt = trace.decision_interval
    ticks = [r.request.issued_at for r in trace.records]
    reports = []
    for e in fails:
        j = col[e.server]
        detected = next(
            (k for k, t in enumerate(ticks) if t >= e.t and trace.registry[k][j] is not ServerStatus.AVAILABLE), None
        )
        end = ticks[detected] if detected is not None else math.inf
        stale = [
            k
            for k, t in enumerate(ticks)
            if e.t <= t < end and trace.records[k].target == e.server and trace.records[k].timed_out
        ]
        reports.append(
            FailureReport(
                server=e.server,
                failed_at_ms=e.t,
                detected_at_ms=None if detected is None else ticks[detected],
                detection_latency_ms=None if detected is None else ticks[detected] - e.t,
                stale_decisions=len(stale),
                stale_window_ms=(ticks[stale[-1]] + dt - e.t) if stale else None,
                first_post_detection_target=None if detected is None else trace.records[detected].target,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Penalty study
# ---------------------------------------------------------------------------

DEFAULT_WEIGHT_SWEEP: Tuple[Tuple[float, float], ...] = (
    (1.0, 0.0),
    (0.75, 0.25),
    (0.625, 0.375),
    (0.5, 0.5),
    (0.25, 0.75),
    (0.0, 1.0),
)


def _targets(config: ScenarioConfig, w_dir: float, w_dist: float) -> List[str]:
    weights = PenaltyWeights(w_dir, w_dist, config.weights.scale)
    return [r.target for r in run_scenario(replace(config, weights=weights)).records]


def penalty_study(config: ScenarioConfig, sweep: Sequence[Tuple[float, float]] = DEFAULT_WEIGHT_SWEEP) -> List[dict]:
    """Chosen server per tick for each weight pair, alongside the pure-direction and pure-distance choices."""
    if len(config.servers) < 2:
        raise ValueError("penalty study needs at least two servers")
    direction_only = _targets(config, 1.0, 0.0)
    distance_only = _targets(config, 0.0, 1.0)
    n = config.n_ticks
    states = [vehicle_at(config.trajectory, k * config.decision_interval) for k in range(n)]
    rows = []
    for w_dir, w_dist in sweep:
        chosen = _targets(config, w_dir, w_dist)
        for k in range(n):
            v = states[k]
            rows.append(
                {
                    "w_direction": float(w_dir),
                    "w_distance": float(w_dist),
                    "tick": k,
                    "t_ms": k * config.decision_interval,
                    "x_m": v.position[0],
                    "y_m": v.position[1],
                    "heading_x": v.direction[0],
                    "heading_y": v.direction[1],
                    "target": chosen[k],
                    "direction_only_target": direction_only[k],
                    "distance_only_target": distance_only[k],
                }
            )
    return rows
