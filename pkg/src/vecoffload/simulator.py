"""Fixed-step scenario engine.

Each tick moves the vehicle along its trajectory, applies the failure schedule
(the decision layer only learns about failures and recoveries after the
profile's detection delays), samples predicted RTTs, decides, and emulates the
execution to obtain a measured RTT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from statistics import NormalDist
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .decision import PsoConfig, decide_single
from .detection import OutcomePolicy
from .domain import (
    LOCAL,
    DecisionRecord,
    OffloadRequest,
    Outcome,
    Point,
    ServerDescriptor,
    ServerStatus,
    ServiceSpec,
    VehicleState,
)
from .geometry import PenaltyWeights

# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineTrajectory:
    start: Point
    direction: Point
    speed: float

    def __post_init__(self):
        dx, dy = (float(c) for c in self.direction)
        norm = math.hypot(dx, dy)
        if norm == 0:
            raise ValueError("direction: must be nonzero")
        if not self.speed > 0:
            raise ValueError(f"speed: must be > 0, got {self.speed}")
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "direction", (dx / norm, dy / norm))
        object.__setattr__(self, "speed", float(self.speed))


@dataclass(frozen=True)
class EllipseTrajectory:
    """Constant angular-speed traversal, counter-clockwise from ``phase``."""

    center: Point
    semi_major: float
    semi_minor: float
    angular_speed: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        for name in ("semi_major", "semi_minor", "angular_speed", "phase"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.semi_major >= self.semi_minor > 0:
            raise ValueError(
                f"semi_major >= semi_minor > 0 required, got {self.semi_major}, {self.semi_minor}"
            )
        if not self.angular_speed > 0:
            raise ValueError(f"angular_speed: must be > 0, got {self.angular_speed}")

    @property
    def period_ms(self) -> float:
        return 2 * math.pi / self.angular_speed * 1000.0


Trajectory = Union[LineTrajectory, EllipseTrajectory]


def vehicle_at(trajectory: Trajectory, t: float, vehicle_id: str = "vehicle") -> VehicleState:
    """Vehicle state at ``t`` ms, heading along the analytic tangent."""
    if t < 0:
        raise ValueError(f"t: must be >= 0, got {t}")
    s = t / 1000.0
    if isinstance(trajectory, LineTrajectory):
        (x0, y0), (ux, uy), v = trajectory.start, trajectory.direction, trajectory.speed
        return VehicleState(position=(x0 + ux * v * s, y0 + uy * v * s), direction=(ux, uy), speed=v, id=vehicle_id)
    tr = trajectory
    theta = tr.phase + tr.angular_speed * s
    c, sn = math.cos(theta), math.sin(theta)
    pos = (tr.center[0] + tr.semi_major * c, tr.center[1] + tr.semi_minor * sn)
    tx, ty = -tr.semi_major * sn, tr.semi_minor * c
    norm = math.hypot(tx, ty)
    return VehicleState(position=pos, direction=(tx / norm, ty / norm), speed=tr.angular_speed * norm, id=vehicle_id)


# ---------------------------------------------------------------------------
# RTT model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"lo < hi required, got lo={self.lo} hi={self.hi}")
        if not self.lo > 0:
            raise ValueError(f"lo: must be > 0, got {self.lo}")


@dataclass(frozen=True)
class TruncNormal:
    mean: float
    stddev: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"lo < hi required, got lo={self.lo} hi={self.hi}")
        if not self.lo > 0:
            raise ValueError(f"lo: must be > 0, got {self.lo}")
        if self.stddev < 0:
            raise ValueError(f"stddev: must be >= 0, got {self.stddev}")
        if not self.lo <= self.mean <= self.hi:
            raise ValueError(f"mean: must lie in [lo, hi], got {self.mean}")


Distribution = Union[Uniform, TruncNormal]


def constant(value: float, lo: float = None, hi: float = None) -> TruncNormal:
    """Degenerate distribution that always yields ``value``."""
    lo = value if lo is None else lo
    hi = value * 2 if hi is None else hi
    return TruncNormal(mean=value, stddev=0.0, lo=lo, hi=hi)


@dataclass(frozen=True)
class RttModel:
    """Per-service predicted-RTT distributions plus the measurement noise model.

    ``per_server`` overrides a service's distribution for one server.
    ``noise`` bounds the uniform multiplicative factor applied to the
    predicted RTT when a task actually runs on a server.
    """

    distributions: Mapping[str, Distribution]
    per_server: Mapping[str, Mapping[str, Distribution]] = field(default_factory=dict)
    noise: Tuple[float, float] = (1.0, 3.0)
    timeout: float = 10000.0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.noise)
        if not 0 < lo <= hi:
            raise ValueError(f"noise: need 0 < lo <= hi, got {self.noise}")
        object.__setattr__(self, "noise", (lo, hi))
        if not self.timeout > 0:
            raise ValueError(f"timeout: must be > 0, got {self.timeout}")

    def distribution(self, service: str, server: str) -> Distribution:
        override = self.per_server.get(server, {})
        if service in override:
            return override[service]
        if service not in self.distributions:
            raise ValueError(f"rtt_model: no distribution for service {service!r}")
        return self.distributions[service]


_STD_NORMAL = NormalDist()


def _sample(dist: Distribution, rng: np.random.Generator) -> float:
    u = rng.random()
    if isinstance(dist, Uniform):
        return min(dist.hi, dist.lo + (dist.hi - dist.lo) * u)
    if dist.stddev == 0.0:
        return float(dist.mean)
    # inverse-CDF draw restricted to [lo, hi]
    a = _STD_NORMAL.cdf((dist.lo - dist.mean) / dist.stddev)
    b = _STD_NORMAL.cdf((dist.hi - dist.mean) / dist.stddev)
    p = min(max(a + u * (b - a), 1e-300), 1 - 1e-16)
    x = dist.mean + dist.stddev * _STD_NORMAL.inv_cdf(p)
    return min(dist.hi, max(dist.lo, x))


def sample_predicted_rtt(
    model: RttModel, service: ServiceSpec, server: ServerDescriptor, rng: np.random.Generator
) -> float:
    """One predicted RTT draw in ms, always within the distribution's bounds."""
    return _sample(model.distribution(service.name, server.id), rng)


def execute(
    decision: DecisionRecord, model: RttModel, rng: np.random.Generator, server_failed: bool = False
) -> DecisionRecord:
    """Attach a measured RTT.

    Local runs measure exactly their local RTT. Server runs scale the
    predicted RTT by a noise factor; a failed target yields the timeout value
    and an Incorrect outcome.
    """
    if decision.is_local:
        return replace(decision, measured_rtt=decision.request.service.local_rtt)
    if server_failed:
        return replace(decision, measured_rtt=model.timeout, timed_out=True, outcome=Outcome.INCORRECT)
    lo, hi = model.noise
    factor = lo if lo == hi else lo + (hi - lo) * rng.random()
    return replace(decision, measured_rtt=decision.predicted_rtt * factor)


# ---------------------------------------------------------------------------
# Failures
# ---------------------------------------------------------------------------


class FailureKind(str, Enum):
    FAIL = "fail"
    RECOVER = "recover"


@dataclass(frozen=True)
class FailureEvent:
    t: int
    server: str
    kind: FailureKind

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 0:
            raise ValueError(f"t: must be a non-negative integer ms, got {self.t}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "kind", FailureKind(self.kind))


@dataclass(frozen=True)
class OrchestratorProfile:
    """Cluster control plane: slow to notice failures, restarts take a while."""

    mark_unavailable_delay: int = 30000
    restart_delay: int = 15000

    @property
    def detect_delay(self) -> int:
        return self.mark_unavailable_delay

    @property
    def recover_delay(self) -> int:
        return self.restart_delay

    def __post_init__(self):
        if self.mark_unavailable_delay < 0 or self.restart_delay < 0:
            raise ValueError("delays must be >= 0")


@dataclass(frozen=True)
class CustomApiProfile:
    """Dedicated failure-notification endpoint."""

    detect_delay: int = 2000
    recover_delay: int = 4000

    def __post_init__(self):
        if not 500 <= self.detect_delay <= 2000:
            raise ValueError(f"detect_delay: must lie in [500, 2000] ms, got {self.detect_delay}")
        if self.recover_delay < 0:
            raise ValueError(f"recover_delay: must be >= 0, got {self.recover_delay}")


DetectionProfile = Union[OrchestratorProfile, CustomApiProfile]


@dataclass(frozen=True)
class FailureSchedule:
    events: Tuple[FailureEvent, ...] = ()
    profile: DetectionProfile = field(default_factory=OrchestratorProfile)

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        times = [e.t for e in events]
        if times != sorted(times):
            raise ValueError("events: must be ordered by time")


@dataclass(frozen=True)
class StatusChange:
    """From ``t`` on, ``server`` is listed as ``registry`` and is physically up iff ``up``."""

    t: int
    server: str
    registry: ServerStatus
    up: bool


def build_timeline(servers: Sequence[ServerDescriptor], schedule: FailureSchedule) -> List[StatusChange]:
    """Expand failure events into registry and physical status changes.

    Per server, events must alternate Fail/Recover, and a new Fail may only
    happen once the previous restart has completed.
    """
    dd, rd = schedule.profile.detect_delay, schedule.profile.recover_delay
    known = {s.id: s for s in servers}
    per: Dict[str, List[FailureEvent]] = {s.id: [] for s in servers}
    for e in schedule.events:
        if e.server not in known:
            raise ValueError(f"events: unknown server {e.server!r}")
        per[e.server].append(e)

    changes: List[StatusChange] = []
    for sid, evs in per.items():
        initial = known[sid].status
        down = initial is not ServerStatus.AVAILABLE
        if initial is ServerStatus.RECOVERING:
            changes.append(StatusChange(rd, sid, ServerStatus.AVAILABLE, True))
            ready_at = rd
            down = False
        else:
            ready_at = 0
        failed_at = None
        for e in evs:
            if e.kind is FailureKind.FAIL:
                if down:
                    raise ValueError(f"events: {sid} fails at {e.t} while already down")
                if e.t < ready_at:
                    raise ValueError(f"events: {sid} fails at {e.t} before its restart completes at {ready_at}")
                changes.append(StatusChange(e.t, sid, ServerStatus.AVAILABLE, False))
                down, failed_at = True, e.t
            else:
                if not down:
                    raise ValueError(f"events: {sid} recovers at {e.t} without a preceding failure")
                if failed_at is not None and failed_at + dd < e.t:
                    changes.append(StatusChange(failed_at + dd, sid, ServerStatus.FAILED, False))
                changes.append(StatusChange(e.t, sid, ServerStatus.RECOVERING, False))
                changes.append(StatusChange(e.t + rd, sid, ServerStatus.AVAILABLE, True))
                down, failed_at, ready_at = False, None, e.t + rd
        if failed_at is not None:
            changes.append(StatusChange(failed_at + dd, sid, ServerStatus.FAILED, False))
    order = {s.id: k for k, s in enumerate(servers)}
    changes.sort(key=lambda c: (c.t, order[c.server]))
    return changes


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    servers: Tuple[ServerDescriptor, ...]
    services: Tuple[ServiceSpec, ...]
    trajectory: Trajectory
    rtt_model: RttModel
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    decision_interval: int = 5
    duration: int = 1000
    pso: PsoConfig = field(default_factory=PsoConfig)
    failures: FailureSchedule = field(default_factory=FailureSchedule)
    rng_seed: int = 0
    outcome_policy: OutcomePolicy = field(default_factory=OutcomePolicy)
    utilization_cap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(self, "services", tuple(self.services))
        if int(self.decision_interval) != self.decision_interval or self.decision_interval <= 0:
            raise ValueError(f"decision_interval: must be a positive integer ms, got {self.decision_interval}")
        if int(self.duration) != self.duration or self.duration < self.decision_interval:
            raise ValueError(f"duration: must be an integer >= decision_interval, got {self.duration}")
        if not self.services:
            raise ValueError("services: need at least one service")
        ids = [s.id for s in self.servers]
        if len(set(ids)) != len(ids):
            raise ValueError("servers: ids must be unique")
        names = [s.name for s in self.services]
        if len(set(names)) != len(names):
            raise ValueError("services: names must be unique")
        for svc in self.services:
            for srv in self.servers:
                self.rtt_model.distribution(svc.name, srv.id)
        build_timeline(self.servers, self.failures)

    @property
    def n_ticks(self) -> int:
        return self.duration // self.decision_interval


@dataclass(frozen=True)
class DecisionTrace:
    """Result of :func:`run_scenario`.

    ``estimates[k]`` and ``registry[k]`` hold the predicted RTT and listed
    status of every server (in ``server_ids`` order) at tick ``k``.
    """

    server_ids: Tuple[str, ...]
    records: Tuple[DecisionRecord, ...]
    estimates: Tuple[Tuple[float, ...], ...]
    registry: Tuple[Tuple[ServerStatus, ...], ...]
    timeline: Tuple[StatusChange, ...]
    decision_interval: int

    def __len__(self):
        return len(self.records)


def run_scenario(config: ScenarioConfig) -> DecisionTrace:
    ss = np.random.SeedSequence(config.rng_seed)
    rtt_rng, exec_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    timeline = build_timeline(config.servers, config.failures)
    registry = {s.id: s.status for s in config.servers}
    up = {s.id: s.status is ServerStatus.AVAILABLE for s in config.servers}
    listed = list(config.servers)
    pos = 0

    records, estimates, snapshots = [], [], []
    for k in range(config.n_ticks):
        t = k * config.decision_interval
        changed = False
        while pos < len(timeline) and timeline[pos].t <= t:
            ch = timeline[pos]
            registry[ch.server], up[ch.server] = ch.registry, ch.up
            pos += 1
            changed = True
        if changed:
            listed = [s if s.status is registry[s.id] else s.with_status(registry[s.id]) for s in config.servers]

        vehicle = vehicle_at(config.trajectory, t)
        service = config.services[k % len(config.services)]
        est = {s.id: sample_predicted_rtt(config.rtt_model, service, s, rtt_rng) for s in config.servers}
        request = OffloadRequest(vehicle=vehicle, service=service, issued_at=t)
        rec = decide_single(request, listed, est, config.weights, config.utilization_cap)
        failed = not rec.is_local and not up[rec.target]
        records.append(execute(rec, config.rtt_model, exec_rng, server_failed=failed))
        estimates.append(tuple(est[s.id] for s in config.servers))
        snapshots.append(tuple(s.status for s in listed))

    return DecisionTrace(
        server_ids=tuple(s.id for s in config.servers),
        records=tuple(records),
        estimates=tuple(estimates),
        registry=tuple(snapshots),
        timeline=tuple(timeline),
        decision_interval=config.decision_interval,
    )
