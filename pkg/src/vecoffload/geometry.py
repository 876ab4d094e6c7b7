"""Spatial penalties, range membership and remaining stay time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .domain import ServerDescriptor, VehicleState

#: Returned by :func:`distance_cost` when the server is out of range.
INFEASIBLE = None


@dataclass(frozen=True)
class PenaltyWeights:
    """Relative weight of each spatial penalty and its full-scale cost in ms."""

    w_direction: float = 0.625
    w_distance: float = 0.375
    scale: float = 100.0

    def __post_init__(self):
        for name in ("w_direction", "w_distance", "scale"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("w_direction", "w_distance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}: must lie in [0, 1], got {v}")
        if self.w_direction + self.w_distance > 1.0 + 1e-12:
            raise ValueError(
                f"w_direction + w_distance must be <= 1, got {self.w_direction + self.w_distance}"
            )
        if not self.scale >= 0:
            raise ValueError(f"scale: must be >= 0, got {self.scale}")


def cosine_similarity(a, b) -> float:
    na = math.hypot(a[0], a[1])
    nb = math.hypot(b[0], b[1])
    if na == 0.0 or nb == 0.0:
        raise ValueError("undefined direction: zero-length vector")
    c = (a[0] * b[0] + a[1] * b[1]) / (na * nb)
    return min(1.0, max(-1.0, c))


def direction_penalty(vehicle_dir, to_server) -> float:
    """``1 + cos(angle)`` between the heading and the vector to the server.

    Ranges over [0, 2]; 2 when heading straight at the server.
    """
    return 1.0 + cosine_similarity(vehicle_dir, to_server)


def to_server(vehicle: VehicleState, server: ServerDescriptor):
    return (server.position[0] - vehicle.position[0], server.position[1] - vehicle.position[1])


def distance(vehicle: VehicleState, server: ServerDescriptor) -> float:
    dx, dy = to_server(vehicle, server)
    return math.hypot(dx, dy)


def in_range(vehicle: VehicleState, server: ServerDescriptor) -> bool:
    return distance(vehicle, server) <= server.comm_range


def direction_cost(vehicle: VehicleState, server: ServerDescriptor, weights: PenaltyWeights) -> float:
    """Direction offset in ms: zero moving toward the server, ``w_direction * scale`` moving away.

    A stationary vehicle, or one sitting exactly on the server, has no
    directional preference and pays nothing.
    """
    if vehicle.speed == 0.0:
        return 0.0
    b = to_server(vehicle, server)
    if b == (0.0, 0.0):
        return 0.0
    # (2 - penalty) / 2 == (1 - cos) / 2
    factor = (2.0 - direction_penalty(vehicle.direction, b)) / 2.0
    return weights.w_direction * weights.scale * factor


def distance_cost(
    vehicle: VehicleState, server: ServerDescriptor, weights: PenaltyWeights
) -> Optional[float]:
    """Distance offset in ms, linear in ``d / comm_range``; ``INFEASIBLE`` when out of range."""
    d = distance(vehicle, server)
    if d > server.comm_range:
        return INFEASIBLE
    return weights.w_distance * weights.scale * (d / server.comm_range)


def stay_time(vehicle: VehicleState, server: ServerDescriptor) -> float:
    """Milliseconds until the vehicle leaves the server's circle on its current heading."""
    wx, wy = to_server(vehicle, server)
    r = server.comm_range
    if math.hypot(wx, wy) > r:
        raise ValueError(f"not in range: vehicle {vehicle.id} is outside server {server.id}")
    if vehicle.speed == 0.0:
        return math.inf
    ux, uy = vehicle.direction
    a = wx * ux + wy * uy
    p2 = wx * wx + wy * wy - a * a
    remaining = a + math.sqrt(max(0.0, r * r - p2))
    return max(0.0, remaining) / vehicle.speed * 1000.0
