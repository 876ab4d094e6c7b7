"""Built-in scenarios mirroring the three evaluation settings.

Coordinates and ranges are plausible choices, not measured values; the
experiments built on them check structural behavior only.
"""

from __future__ import annotations

import math

from .domain import Criticality, ServerDescriptor, ServiceSpec
from .geometry import PenaltyWeights
from .simulator import (
    CustomApiProfile,
    EllipseTrajectory,
    FailureEvent,
    FailureKind,
    FailureSchedule,
    LineTrajectory,
    OrchestratorProfile,
    RttModel,
    ScenarioConfig,
    Uniform,
    constant,
)

OBJECT_RECOGNITION = ServiceSpec(
    name="object_recognition",
    criticality=Criticality.HIGH,
    max_rtt=590.0,
    payload_size=140_000,
    compute_demand=1.0,
    local_rtt=550.0,
)

EMOTION_RECOGNITION = ServiceSpec(
    name="emotion_recognition",
    criticality=Criticality.MEDIUM,
    max_rtt=630.0,
    payload_size=140_000,
    compute_demand=1.0,
    local_rtt=600.0,
)

OBJECT_RTT = Uniform(400.0, 750.0)
EMOTION_RTT = Uniform(500.0, 750.0)


def trajectory_run(seed: int = 7, duration: int = 50_000, noise=(1.0, 3.0)) -> ScenarioConfig:
    """Straight drive past two servers with overlapping coverage."""
    servers = (
        ServerDescriptor("S1", (300.0, 80.0), 250.0, address=("10.0.0.11", 8080)),
        ServerDescriptor("S2", (700.0, -60.0), 250.0, address=("10.0.0.12", 8080)),
    )
    return ScenarioConfig(
        servers=servers,
        services=(OBJECT_RECOGNITION,),
        trajectory=LineTrajectory(start=(0.0, 0.0), direction=(1.0, 0.0), speed=20.0),
        rtt_model=RttModel({OBJECT_RECOGNITION.name: OBJECT_RTT}, noise=noise),
        weights=PenaltyWeights(0.625, 0.375, 100.0),
        decision_interval=5,
        duration=duration,
        rng_seed=seed,
    )


def penalty_study(weights: PenaltyWeights = PenaltyWeights(0.625, 0.375, 100.0), seed: int = 3) -> ScenarioConfig:
    """Elliptical loop around two edge servers with constant, equal RTT."""
    servers = (
        ServerDescriptor("S1", (-150.0, 0.0), 1000.0, address=("10.0.1.11", 8080)),
        ServerDescriptor("S2", (150.0, 0.0), 1000.0, address=("10.0.1.12", 8080)),
    )
    return ScenarioConfig(
        servers=servers,
        services=(OBJECT_RECOGNITION,),
        trajectory=EllipseTrajectory(
            center=(0.0, 0.0), semi_major=400.0, semi_minor=250.0, angular_speed=2 * math.pi / 60.0, phase=0.1
        ),
        rtt_model=RttModel({OBJECT_RECOGNITION.name: constant(450.0, 400.0, 750.0)}, noise=(1.0, 1.0)),
        weights=weights,
        decision_interval=20,
        duration=60_000,
        rng_seed=seed,
    )


def failure_drill(profile: str = "orchestrator", mode: str = "sequential", seed: int = 11) -> ScenarioConfig:
    """Slow drive between two servers that are shut down and later restarted.

    ``mode`` is ``sequential`` (S1 then S2) or ``simultaneous``.
    """
    prof = OrchestratorProfile() if profile == "orchestrator" else CustomApiProfile(2000, 4000)
    if mode == "sequential":
        events = [(10_000, "S1", "fail"), (20_000, "S2", "fail"), (60_000, "S1", "recover"), (65_000, "S2", "recover")]
    elif mode == "simultaneous":
        events = [(10_000, "S1", "fail"), (10_000, "S2", "fail"), (60_000, "S1", "recover"), (60_000, "S2", "recover")]
    else:
        raise ValueError(f"mode: expected 'sequential' or 'simultaneous', got {mode!r}")
    servers = (
        ServerDescriptor("S1", (30.0, 40.0), 2000.0, address=("10.0.2.11", 8080)),
        ServerDescriptor("S2", (30.0, -40.0), 2000.0, address=("10.0.2.12", 8080)),
    )
    svc = EMOTION_RECOGNITION
    return ScenarioConfig(
        servers=servers,
        services=(svc,),
        trajectory=LineTrajectory(start=(0.0, 0.0), direction=(1.0, 0.0), speed=1.0),
        rtt_model=RttModel(
            {svc.name: constant(500.0, 450.0, 750.0)},
            per_server={"S1": {svc.name: constant(450.0, 400.0, 750.0)}},
            noise=(1.0, 1.0),
        ),
        decision_interval=50,
        duration=90_000,
        failures=FailureSchedule(
            events=tuple(FailureEvent(t, s, FailureKind(k)) for t, s, k in events), profile=prof
        ),
        rng_seed=seed,
    )


BUILTIN = {
    "trajectory-run": trajectory_run,
    "penalty-study": penalty_study,
    "failure-drill-orchestrator": lambda: failure_drill("orchestrator", "sequential"),
    "failure-drill-custom-api": lambda: failure_drill("custom_api", "sequential"),
    "failure-drill-simultaneous": lambda: failure_drill("orchestrator", "simultaneous"),
}
