"""Feedback classification of executed decisions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Mapping

from .domain import LOCAL, Criticality, DecisionRecord, Outcome

_DEFAULT_TOLERANCE = {Criticality.HIGH: 1.0, Criticality.MEDIUM: 1.1, Criticality.LOW: 1.25}
_DEFAULT_PENALTY = {Criticality.HIGH: 3.0, Criticality.MEDIUM: 2.0, Criticality.LOW: 1.0}


@dataclass(frozen=True)
class OutcomePolicy:
    """Per-criticality slack on ``max_rtt`` and weight of the overshoot penalty.

    Safety-critical services get the tightest tolerance.
    """

    tolerance: Mapping[Criticality, float] = field(default_factory=lambda: dict(_DEFAULT_TOLERANCE))
    penalty_weight: Mapping[Criticality, float] = field(default_factory=lambda: dict(_DEFAULT_PENALTY))

    def __post_init__(self):
        tol = {Criticality(k): float(v) for k, v in self.tolerance.items()}
        pw = {Criticality(k): float(v) for k, v in self.penalty_weight.items()}
        for level in Criticality:
            if level not in tol or level not in pw:
                raise ValueError(f"policy: missing entry for criticality {level.value!r}")
            if tol[level] < 1.0:
                raise ValueError(f"tolerance[{level.value}]: must be >= 1, got {tol[level]}")
            if pw[level] < 0:
                raise ValueError(f"penalty_weight[{level.value}]: must be >= 0, got {pw[level]}")
        if not tol[Criticality.HIGH] <= tol[Criticality.MEDIUM] <= tol[Criticality.LOW]:
            raise ValueError("tolerance: must be non-increasing with criticality (high <= medium <= low)")
        object.__setattr__(self, "tolerance", tol)
        object.__setattr__(self, "penalty_weight", pw)


def classify(record: DecisionRecord, policy: OutcomePolicy = OutcomePolicy()) -> DecisionRecord:
    """Label ``record`` Successful or Incorrect from its measured RTT.

    The boundary ``measured == max_rtt * tolerance`` counts as Successful.
    Incorrect records carry ``penalty_weight * (measured / max_rtt - 1)``.
    Timeouts are always Incorrect.
    """
    if record.measured_rtt is None:
        raise ValueError("classify: record has no measured_rtt")
    service = record.request.service
    level = service.criticality
    ok = not record.timed_out and record.measured_rtt <= service.max_rtt * policy.tolerance[level]
    if ok:
        return replace(record, outcome=Outcome.SUCCESSFUL, penalty=0.0)
    overshoot = max(0.0, record.measured_rtt / service.max_rtt - 1.0)
    return replace(record, outcome=Outcome.INCORRECT, penalty=policy.penalty_weight[level] * overshoot)


@dataclass(frozen=True)
class TraceSummary:
    decisions: int
    success_rate: float
    target_counts: Dict[str, int]
    mean_predicted_ms: float
    mean_measured_ms: float
    penalty_total: float
    offloaded: int
    offloaded_incorrect: int
    timeouts: int

    @property
    def offloaded_incorrect_fraction(self) -> float:
        return self.offloaded_incorrect / self.offloaded if self.offloaded else 0.0

    def as_dict(self) -> dict:
        return {
            "decisions": self.decisions,
            "success_rate": self.success_rate,
            "target_counts": dict(self.target_counts),
            "mean_predicted_ms": self.mean_predicted_ms,
            "mean_measured_ms": self.mean_measured_ms,
            "penalty_total": self.penalty_total,
            "offloaded": self.offloaded,
            "offloaded_incorrect": self.offloaded_incorrect,
            "offloaded_incorrect_fraction": self.offloaded_incorrect_fraction,
            "timeouts": self.timeouts,
        }


def classify_all(records: Iterable[DecisionRecord], policy: OutcomePolicy = OutcomePolicy()):
    return tuple(classify(r, policy) for r in records)


def trace_report(trace, policy: OutcomePolicy = OutcomePolicy()) -> TraceSummary:
    """Aggregate a trace (or any sequence of records) into quality statistics.

    Records are (re)classified under ``policy`` first; classification is
    idempotent, so already-labelled traces are unaffected.
    """
    records = classify_all(getattr(trace, "records", trace), policy)
    if not records:
        raise ValueError("empty trace")
    n = len(records)
    counts = Counter(r.target for r in records)
    offloaded = [r for r in records if r.target != LOCAL]
    return TraceSummary(
        decisions=n,
        success_rate=sum(r.outcome is Outcome.SUCCESSFUL for r in records) / n,
        target_counts=dict(sorted(counts.items())),
        mean_predicted_ms=sum(r.total_cost for r in records) / n,
        mean_measured_ms=sum(r.measured_rtt for r in records) / n,
        penalty_total=sum(r.penalty for r in records),
        offloaded=len(offloaded),
        offloaded_incorrect=sum(r.outcome is Outcome.INCORRECT for r in offloaded),
        timeouts=sum(r.timed_out for r in records),
    )
