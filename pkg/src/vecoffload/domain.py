"""Core data model shared by the extraction, decision, execution and detection layers.

All types are frozen dataclasses. Constructors validate their invariants and
raise ``ValueError`` with a message naming the offending field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

Point = Tuple[float, float]

#: Target label used for on-vehicle execution.
LOCAL = "local"

_UNIT_TOL = 1e-9


class ServerStatus(str, Enum):
    AVAILABLE = "available"
    FAILED = "failed"
    RECOVERING = "recovering"


class Criticality(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _CRIT_RANK[self]


_CRIT_RANK = {Criticality.LOW: 0, Criticality.MEDIUM: 1, Criticality.HIGH: 2}


class Outcome(str, Enum):
    SUCCESSFUL = "successful"
    INCORRECT = "incorrect"


def _point(value, name: str) -> Point:
    try:
        x, y = value
        p = (float(x), float(y))
    except (TypeError, ValueError):
        raise ValueError(f"{name}: expected a 2-D point, got {value!r}") from None
    if not all(math.isfinite(c) for c in p):
        raise ValueError(f"{name}: coordinates must be finite, got {value!r}")
    return p


@dataclass(frozen=True)
class VehicleState:
    """Mobile client requesting offloading.

    ``position`` in meters, ``direction`` a unit vector, ``speed`` in m/s.
    """

    position: Point
    direction: Point
    speed: float
    id: str = "vehicle"

    def __post_init__(self):
        object.__setattr__(self, "position", _point(self.position, "position"))
        object.__setattr__(self, "direction", _point(self.direction, "direction"))
        object.__setattr__(self, "speed", float(self.speed))
        if not self.speed >= 0:
            raise ValueError(f"speed: must be >= 0, got {self.speed}")
        if self.speed > 0:
            norm = math.hypot(*self.direction)
            if abs(norm - 1.0) > _UNIT_TOL:
                raise ValueError(f"direction: must be a unit vector when speed > 0, |direction|={norm}")


@dataclass(frozen=True)
class ServerDescriptor:
    """One backend target as listed in the server registry."""

    id: str
    position: Point
    comm_range: float
    capacity: float = 1.0
    status: ServerStatus = ServerStatus.AVAILABLE
    address: Tuple[str, int] = ("0.0.0.0", 0)
    utilization: float = 0.0

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError(f"id: must be a non-empty string, got {self.id!r}")
        if self.id == LOCAL:
            raise ValueError(f"id: {LOCAL!r} is reserved for local execution")
        object.__setattr__(self, "position", _point(self.position, "position"))
        object.__setattr__(self, "status", ServerStatus(self.status))
        host, port = self.address
        object.__setattr__(self, "address", (str(host), int(port)))
        for name in ("comm_range", "capacity", "utilization"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.comm_range > 0:
            raise ValueError(f"comm_range: must be > 0, got {self.comm_range}")
        if not self.capacity > 0:
            raise ValueError(f"capacity: must be > 0, got {self.capacity}")
        if not 0.0 <= self.utilization <= 1.0:
            raise ValueError(f"utilization: must lie in [0, 1], got {self.utilization}")

    def with_status(self, status: ServerStatus) -> "ServerDescriptor":
        return replace(self, status=ServerStatus(status))


@dataclass(frozen=True)
class ServiceSpec:
    """A vehicle function and its functional requirements (times in ms)."""

    name: str
    criticality: Criticality
    max_rtt: float
    payload_size: int = 0
    compute_demand: float = 1.0
    local_rtt: float = 550.0

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError(f"name: must be a non-empty string, got {self.name!r}")
        try:
            object.__setattr__(self, "criticality", Criticality(self.criticality))
        except ValueError:
            raise ValueError(f"criticality: unknown level {self.criticality!r}") from None
        object.__setattr__(self, "payload_size", int(self.payload_size))
        for name in ("max_rtt", "compute_demand", "local_rtt"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.max_rtt > 0:
            raise ValueError(f"max_rtt: must be > 0, got {self.max_rtt}")
        if not self.compute_demand > 0:
            raise ValueError(f"compute_demand: must be > 0, got {self.compute_demand}")
        if self.payload_size < 0:
            raise ValueError(f"payload_size: must be >= 0, got {self.payload_size}")
        if not self.local_rtt > 0:
            raise ValueError(f"local_rtt: must be > 0, got {self.local_rtt}")


@dataclass(frozen=True)
class OffloadRequest:
    vehicle: VehicleState
    service: ServiceSpec
    issued_at: int = 0

    def __post_init__(self):
        if int(self.issued_at) != self.issued_at or self.issued_at < 0:
            raise ValueError(f"issued_at: must be a non-negative integer ms, got {self.issued_at}")
        object.__setattr__(self, "issued_at", int(self.issued_at))


@dataclass(frozen=True)
class DecisionRecord:
    """One offloading decision, later enriched with measurement and outcome.

    ``target`` is a server id or :data:`LOCAL`.
    """

    request: OffloadRequest
    target: str
    predicted_rtt: float
    direction_cost: float = 0.0
    distance_cost: float = 0.0
    total_cost: float = 0.0
    measured_rtt: Optional[float] = None
    timed_out: bool = False
    outcome: Optional[Outcome] = None
    penalty: float = 0.0

    def __post_init__(self):
        if self.outcome is not None:
            object.__setattr__(self, "outcome", Outcome(self.outcome))
            if self.measured_rtt is None:
                raise ValueError("outcome: cannot be set before measured_rtt")
        if self.target == LOCAL:
            if self.total_cost != self.predicted_rtt:
                raise ValueError("total_cost: must equal predicted local RTT for local execution")
        else:
            expected = self.predicted_rtt + self.direction_cost + self.distance_cost
            if self.total_cost != expected:
                raise ValueError(
                    f"total_cost: {self.total_cost} != predicted_rtt + direction_cost + distance_cost ({expected})"
                )

    @property
    def is_local(self) -> bool:
        return self.target == LOCAL


@dataclass(frozen=True, eq=False)
class AssignmentProblem:
    """Batch of task demands over candidate servers.

    ``feasible[i, j]`` is True when task ``i`` may run on server ``j``.
    """

    demands: np.ndarray
    capacities: np.ndarray
    feasible: np.ndarray
    server_ids: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        demands = np.asarray(self.demands, dtype=float).reshape(-1)
        capacities = np.asarray(self.capacities, dtype=float).reshape(-1)
        n, m = demands.size, capacities.size
        if m < 1:
            raise ValueError("capacities: need at least one server")
        if self.feasible is None:
            feasible = np.ones((n, m), dtype=bool)
        else:
            feasible = np.asarray(self.feasible, dtype=bool)
        if feasible.shape != (n, m):
            raise ValueError(f"feasible: expected shape {(n, m)}, got {feasible.shape}")
        if np.any(demands <= 0) or not np.all(np.isfinite(demands)):
            raise ValueError("demands: must be positive and finite")
        if np.any(capacities <= 0) or not np.all(np.isfinite(capacities)):
            raise ValueError("capacities: must be positive and finite")
        if n and not feasible.any(axis=1).all():
            bad = int(np.flatnonzero(~feasible.any(axis=1))[0])
            raise ValueError(f"feasible: task {bad} has no feasible server")
        ids = tuple(self.server_ids) or tuple(f"S{j}" for j in range(m))
        if len(ids) != m:
            raise ValueError(f"server_ids: expected {m} ids, got {len(ids)}")
        for arr in (demands, capacities, feasible):
            arr.setflags(write=False)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacities", capacities)
        object.__setattr__(self, "feasible", feasible)
        object.__setattr__(self, "server_ids", ids)

    @classmethod
    def from_servers(cls, demands, servers, feasible=None) -> "AssignmentProblem":
        return cls(
            demands=np.asarray(demands, dtype=float),
            capacities=np.array([s.capacity for s in servers], dtype=float),
            feasible=feasible,
            server_ids=tuple(s.id for s in servers),
        )

    @property
    def n_tasks(self) -> int:
        return self.demands.size

    @property
    def n_servers(self) -> int:
        return self.capacities.size

    def __eq__(self, other):
        if not isinstance(other, AssignmentProblem):
            return NotImplemented
        return (
            self.server_ids == other.server_ids
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.capacities, other.capacities)
            and np.array_equal(self.feasible, other.feasible)
        )

    __hash__ = None


@dataclass(frozen=True)
class Assignment:
    """Task -> server index mapping with its min-max load objective."""

    mapping: Tuple[int, ...]
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(int(j) for j in self.mapping))
        object.__setattr__(self, "objective", float(self.objective))
