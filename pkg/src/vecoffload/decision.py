"""Decision layer: per-request server selection and batch task assignment.

Single requests go through :func:`decide_single`, which filters servers by
availability, range, stay time and the service's RTT threshold and picks the
cheapest survivor. Batches of tasks are assigned with :func:`solve_pso`, with
:func:`solve_brute_force` as the exact reference and :func:`solve_greedy` as
the list-scheduling baseline. All three minimize the maximum server load
``sum(demand) / capacity``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    LOCAL,
    Assignment,
    AssignmentProblem,
    DecisionRecord,
    OffloadRequest,
    ServerDescriptor,
    ServerStatus,
)
from .geometry import PenaltyWeights, direction_cost, distance_cost, stay_time

#: server id -> predicted RTT (ms) for the service being decided.
RttEstimate = Mapping[str, float]

DEFAULT_INFEASIBLE_PENALTY = 1e9
DEFAULT_ENUMERATION_CAP = 10**8


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 10
    iterations: int = 80
    inertia: float = 0.5
    cognitive: float = 1.5
    social: float = 1.5
    rng_seed: int = 0
    infeasible_penalty: float = DEFAULT_INFEASIBLE_PENALTY

    def __post_init__(self):
        if int(self.particles) < 1:
            raise ValueError(f"particles: must be >= 1, got {self.particles}")
        if int(self.iterations) < 1:
            raise ValueError(f"iterations: must be >= 1, got {self.iterations}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError(f"rng_seed: must fit in 64 bits, got {self.rng_seed}")
        if not self.infeasible_penalty > 0:
            raise ValueError(f"infeasible_penalty: must be > 0, got {self.infeasible_penalty}")
        object.__setattr__(self, "particles", int(self.particles))
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
        for name in ("inertia", "cognitive", "social", "infeasible_penalty"):
            object.__setattr__(self, name, float(getattr(self, name)))


# ---------------------------------------------------------------------------
# Single-request selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    server_id: str
    predicted_rtt: float
    direction_cost: float
    distance_cost: float

    @property
    def total_cost(self) -> float:
        return self.predicted_rtt + self.direction_cost + self.distance_cost


def _candidates(
    request: OffloadRequest,
    servers: Sequence[ServerDescriptor],
    estimates: RttEstimate,
    weights: PenaltyWeights,
    utilization_cap: float,
) -> List[Candidate]:
    vehicle = request.vehicle
    out = []
    for server in servers:
        if server.status is not ServerStatus.AVAILABLE:
            continue
        if server.id not in estimates:
            raise ValueError(f"estimates: no RTT estimate for available server {server.id!r}")
        rtt = float(estimates[server.id])
        if not rtt > 0:
            raise ValueError(f"estimates: RTT for {server.id!r} must be > 0, got {rtt}")
        if server.utilization >= utilization_cap:
            continue
        dist = distance_cost(vehicle, server, weights)
        if dist is None:
            continue
        cand = Candidate(server.id, rtt, direction_cost(vehicle, server, weights), dist)
        total = cand.total_cost
        if total > request.service.max_rtt:
            continue
        if stay_time(vehicle, server) < total:
            continue
        out.append(cand)
    out.sort(key=lambda c: (c.total_cost, c.server_id))
    return out


def feasible_servers(
    request: OffloadRequest,
    servers: Sequence[ServerDescriptor],
    estimates: RttEstimate,
    weights: PenaltyWeights,
    utilization_cap: float = 1.0,
) -> List[Tuple[str, float]]:
    """Servers that can serve ``request`` in time, cheapest first.

    A server qualifies when it is listed as available, below
    ``utilization_cap``, within communication range, keeps the vehicle in
    range for at least the predicted total cost, and that cost (RTT plus
    direction and distance offsets) does not exceed the service's
    ``max_rtt``. Ties are broken by ascending server id.
    """
    return [(c.server_id, c.total_cost) for c in _candidates(request, servers, estimates, weights, utilization_cap)]


def decide_single(
    request: OffloadRequest,
    servers: Sequence[ServerDescriptor],
    estimates: RttEstimate,
    weights: PenaltyWeights,
    utilization_cap: float = 1.0,
) -> DecisionRecord:
    """Offload to the cheapest feasible server, or run locally if there is none."""
    cands = _candidates(request, servers, estimates, weights, utilization_cap)
    if not cands:
        local = request.service.local_rtt
        return DecisionRecord(request=request, target=LOCAL, predicted_rtt=local, total_cost=local)
    best = cands[0]
    return DecisionRecord(
        request=request,
        target=best.server_id,
        predicted_rtt=best.predicted_rtt,
        direction_cost=best.direction_cost,
        distance_cost=best.distance_cost,
        total_cost=best.total_cost,
    )


# ---------------------------------------------------------------------------
# Batch assignment
# ---------------------------------------------------------------------------


def server_loads(problem: AssignmentProblem, mapping) -> np.ndarray:
    idx = np.asarray(mapping, dtype=np.intp)
    sums = np.bincount(idx, weights=problem.demands, minlength=problem.n_servers)
    return sums / problem.capacities


def objective(problem: AssignmentProblem, mapping, infeasible_penalty: float = DEFAULT_INFEASIBLE_PENALTY) -> float:
    """Maximum server load of ``mapping``; graded penalty if it breaks feasibility."""
    idx = np.asarray(mapping, dtype=np.intp)
    if idx.shape != (problem.n_tasks,):
        raise ValueError(f"mapping: expected {problem.n_tasks} entries, got {idx.size}")
    if idx.size and (idx.min() < 0 or idx.max() >= problem.n_servers):
        raise ValueError("mapping: server index out of bounds")
    violations = int(np.count_nonzero(~problem.feasible[np.arange(idx.size), idx]))
    if violations:
        return infeasible_penalty + violations
    if idx.size == 0:
        return 0.0
    return float(server_loads(problem, idx).max())


def _assignment(problem: AssignmentProblem, mapping) -> Assignment:
    return Assignment(mapping=tuple(int(j) for j in mapping), objective=objective(problem, mapping))


class SearchTooLarge(ValueError):
    pass


def solve_brute_force(
    problem: AssignmentProblem, cap: int = DEFAULT_ENUMERATION_CAP, prune: bool = True
) -> Assignment:
    """Exact minimum of the max-load objective.

    With ``prune=False`` every mapping is enumerated in lexicographic order and
    ``servers ** tasks`` must not exceed ``cap``. With ``prune=True`` (default)
    the same search space is explored depth-first with bound pruning, and
    ``cap`` limits the number of search nodes visited instead. Both return the
    lexicographically smallest optimal mapping.
    """
    n, m = problem.n_tasks, problem.n_servers
    if n == 0:
        return Assignment(mapping=(), objective=0.0)
    if not prune:
        if m**n > cap:
            raise SearchTooLarge("instance too large for exhaustive search")
        choices = [np.flatnonzero(problem.feasible[i]).tolist() for i in range(n)]
        best, best_val = None, math.inf
        for mapping in itertools.product(*choices):
            val = objective(problem, mapping)
            if val < best_val:
                best, best_val = mapping, val
        return _assignment(problem, best)
    return _BranchAndBound(problem, cap).solve()


class _BranchAndBound:
    """Two passes: find the optimal value, then the lexicographically first mapping reaching it."""

    def __init__(self, problem: AssignmentProblem, cap: int):
        self.p = problem
        self.cap = cap
        self.nodes = 0
        self.d = problem.demands.tolist()
        self.c = problem.capacities.tolist()
        self.feas = [np.flatnonzero(row).tolist() for row in problem.feasible]
        self.total_cap = float(problem.capacities.sum())

    def _tick(self):
        self.nodes += 1
        if self.nodes > self.cap:
            raise SearchTooLarge("instance too large for exhaustive search")

    def solve(self) -> Assignment:
        p = self.p
        self.best = solve_greedy(p).objective
        # servers interchangeable when capacity and feasibility column agree
        cols = [(self.c[j], p.feasible[:, j].tobytes()) for j in range(p.n_servers)]
        self.twin = [[k for k in range(j) if cols[k] == cols[j]] for j in range(p.n_servers)]
        order = sorted(range(p.n_tasks), key=lambda i: (-self.d[i], i))
        self.lb = sum(self.d) / self.total_cap
        if self.best > self.lb:
            self._value(order, 0, [0.0] * p.n_servers, 0.0)
        thr = self.best * (1 + 1e-9)
        self.rem = [0.0] * (p.n_tasks + 1)
        for i in range(p.n_tasks - 1, -1, -1):
            self.rem[i] = self.rem[i + 1] + self.d[i]
        mapping = self._first(0, [0.0] * p.n_servers, [], thr)
        assert mapping is not None
        return _assignment(p, mapping)

    def _value(self, order, k, sums, cur):
        self._tick()
        if k == len(order):
            self.best = cur
            return
        i = order[k]
        d = self.d[i]
        for j in self.feas[i]:
            if any(sums[t] == sums[j] for t in self.twin[j]):
                continue
            load = (sums[j] + d) / self.c[j]
            bound = max(cur, load, self.lb)
            if bound >= self.best:
                continue
            sums[j] += d
            self._value(order, k + 1, sums, max(cur, load))
            sums[j] -= d
            if self.best <= self.lb:
                return

    def _first(self, i, sums, prefix, thr):
        self._tick()
        if i == len(self.d):
            return list(prefix)
        slack = sum(max(0.0, thr * self.c[j] - sums[j]) for j in range(len(sums)))
        if slack < self.rem[i] * (1 - 1e-12):
            return None
        d = self.d[i]
        for j in self.feas[i]:
            if (sums[j] + d) / self.c[j] > thr:
                continue
            sums[j] += d
            prefix.append(j)
            found = self._first(i + 1, sums, prefix, thr)
            prefix.pop()
            sums[j] -= d
            if found is not None:
                return found
        return None


def solve_greedy(problem: AssignmentProblem) -> Assignment:
    """Longest-processing-time list scheduling.

    Tasks in descending demand order each go to the feasible server with the
    smallest resulting load; ties go to the lower task and server index.
    """
    sums = np.zeros(problem.n_servers)
    mapping = [0] * problem.n_tasks
    order = sorted(range(problem.n_tasks), key=lambda i: (-problem.demands[i], i))
    for i in order:
        cols = np.flatnonzero(problem.feasible[i])
        if cols.size == 0:
            raise ValueError(f"task {i} has no feasible server")
        loads = (sums[cols] + problem.demands[i]) / problem.capacities[cols]
        j = int(cols[int(np.argmin(loads))])
        mapping[i] = j
        sums[j] += problem.demands[i]
    return _assignment(problem, mapping)


def _swarm_fitness(problem: AssignmentProblem, idx: np.ndarray, penalty: float) -> np.ndarray:
    """Objective of every particle at once; row order is particle order."""
    n_particles, n = idx.shape
    m = problem.n_servers
    if n == 0:
        return np.zeros(n_particles)
    offsets = (np.arange(n_particles) * m)[:, None]
    sums = np.bincount(
        (idx + offsets).ravel(), weights=np.tile(problem.demands, n_particles), minlength=n_particles * m
    ).reshape(n_particles, m)
    fit = (sums / problem.capacities).max(axis=1)
    violations = np.count_nonzero(~problem.feasible[np.arange(n), idx], axis=1)
    return np.where(violations > 0, penalty + violations, fit)


def _discretize(x: np.ndarray, m: int) -> np.ndarray:
    return np.floor(np.clip(x, 0, m - 1) + 0.5).astype(np.intp)


def solve_pso(problem: AssignmentProblem, config: PsoConfig = PsoConfig()) -> Assignment:
    """Global-best particle swarm over continuous positions rounded to server indices.

    Each particle holds one coordinate per task. Positions start uniform in
    ``[0, servers - 1]`` with zero velocity; velocities are clamped to half the
    index span. Infeasible particles score ``infeasible_penalty`` plus their
    violation count so the swarm is pulled back toward feasibility.
    """
    n, m = problem.n_tasks, problem.n_servers
    rng = np.random.default_rng(config.rng_seed)
    P = config.particles
    vmax = (m - 1) / 2.0
    x = rng.uniform(0.0, m - 1, size=(P, n)) if m > 1 else np.zeros((P, n))
    v = np.zeros((P, n))
    idx = _discretize(x, m)
    fit = _swarm_fitness(problem, idx, config.infeasible_penalty)
    pbest_x, pbest_idx, pbest_fit = x.copy(), idx.copy(), fit.copy()
    g = int(np.argmin(pbest_fit))
    gbest_x, gbest_idx, gbest_fit = pbest_x[g].copy(), pbest_idx[g].copy(), pbest_fit[g]

    for _ in range(config.iterations):
        r1 = rng.random((P, n))
        r2 = rng.random((P, n))
        v = config.inertia * v + config.cognitive * r1 * (pbest_x - x) + config.social * r2 * (gbest_x - x)
        np.clip(v, -vmax, vmax, out=v)
        x = np.clip(x + v, 0.0, m - 1)
        idx = _discretize(x, m)
        fit = _swarm_fitness(problem, idx, config.infeasible_penalty)
        better = fit < pbest_fit
        pbest_x[better] = x[better]
        pbest_idx[better] = idx[better]
        pbest_fit[better] = fit[better]
        g = int(np.argmin(pbest_fit))
        if pbest_fit[g] < gbest_fit:
            gbest_x, gbest_idx, gbest_fit = pbest_x[g].copy(), pbest_idx[g].copy(), pbest_fit[g]

    return Assignment(mapping=tuple(gbest_idx.tolist()), objective=objective(problem, gbest_idx, config.infeasible_penalty))


SOLVERS: Dict[str, Callable[..., Assignment]] = {
    "bf": solve_brute_force,
    "pso": solve_pso,
    "greedy": solve_greedy,
}


def run_solver(name: str, problem: AssignmentProblem, pso_config: Optional[PsoConfig] = None) -> Assignment:
    if name not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
    if name == "pso":
        return solve_pso(problem, pso_config or PsoConfig())
    return SOLVERS[name](problem)


@dataclass(frozen=True)
class TimingStats:
    mean_ms: float
    min_ms: float
    max_ms: float
    repetitions: int


def measure_solver(
    problem: AssignmentProblem, solver: str, repetitions: int = 5, pso_config: Optional[PsoConfig] = None
) -> TimingStats:
    """Wall-clock statistics for ``repetitions`` runs on the same, pre-built input."""
    if repetitions < 1:
        raise ValueError(f"repetitions: must be >= 1, got {repetitions}")
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        run_solver(solver, problem, pso_config)
        times.append((time.perf_counter() - t0) * 1000.0)
    return TimingStats(mean_ms=sum(times) / len(times), min_ms=min(times), max_ms=max(times), repetitions=repetitions)


def random_problem(
    n_tasks: int,
    n_servers: int,
    seed,
    demand_range: Tuple[float, float] = (1.0, 10.0),
    capacity_range: Tuple[float, float] = (1.0, 3.0),
    infeasible_prob: float = 0.2,
) -> AssignmentProblem:
    """Seeded random instance: uniform demands and capacities, random exclusions.

    ``seed`` is anything ``numpy.random.default_rng`` accepts. Each task
    keeps at least one feasible server.
    """
    if n_tasks < 0 or n_servers < 1:
        raise ValueError("need n_tasks >= 0 and n_servers >= 1")
    rng = np.random.default_rng(seed)
    demands = rng.uniform(*demand_range, size=n_tasks)
    capacities = rng.uniform(*capacity_range, size=n_servers)
    feasible = rng.random((n_tasks, n_servers)) >= infeasible_prob
    keep = rng.integers(0, n_servers, size=n_tasks)
    feasible[np.arange(n_tasks), keep] = True
    return AssignmentProblem(
        demands=demands, capacities=capacities, feasible=feasible, server_ids=tuple(f"S{j}" for j in range(n_servers))
    )


def assign_batch(
    requests: Sequence[OffloadRequest],
    servers: Sequence[ServerDescriptor],
    estimates: Sequence[RttEstimate],
    weights: PenaltyWeights,
    config: PsoConfig = PsoConfig(),
    utilization_cap: float = 1.0,
) -> List[DecisionRecord]:
    """Place several simultaneous requests with the swarm.

    Feasibility per (request, server) pair comes from :func:`feasible_servers`;
    requests with no feasible server run locally. The swarm balances
    ``compute_demand / capacity`` across the servers it may use.
    """
    if len(estimates) != len(requests):
        raise ValueError("estimates: need one RttEstimate per request")
    by_id = {s.id: j for j, s in enumerate(servers)}
    cand = [
        {c.server_id: c for c in _candidates(r, servers, e, weights, utilization_cap)}
        for r, e in zip(requests, estimates)
    ]
    offload = [k for k, cs in enumerate(cand) if cs]
    records: List[Optional[DecisionRecord]] = [None] * len(requests)
    if offload:
        feasible = np.zeros((len(offload), len(servers)), dtype=bool)
        for row, k in enumerate(offload):
            for sid in cand[k]:
                feasible[row, by_id[sid]] = True
        problem = AssignmentProblem.from_servers(
            [requests[k].service.compute_demand for k in offload], servers, feasible
        )
        result = solve_pso(problem, config)
        for row, k in enumerate(offload):
            c = cand[k][servers[result.mapping[row]].id]
            records[k] = DecisionRecord(
                request=requests[k],
                target=c.server_id,
                predicted_rtt=c.predicted_rtt,
                direction_cost=c.direction_cost,
                distance_cost=c.distance_cost,
                total_cost=c.total_cost,
            )
    for k, r in enumerate(requests):
        if records[k] is None:
            local = r.service.local_rtt
            records[k] = DecisionRecord(request=r, target=LOCAL, predicted_rtt=local, total_cost=local)
    return records
