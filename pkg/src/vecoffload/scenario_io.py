"""Scenario files (YAML) and trace serialization.

Validation failures raise :class:`ScenarioError`, whose ``field`` is a dotted
path such as ``servers[1].comm_range_m``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import yaml

from .decision import PsoConfig
from .detection import OutcomePolicy
from .domain import Criticality, ServerDescriptor, ServiceSpec
from .geometry import PenaltyWeights
from .simulator import (
    CustomApiProfile,
    DecisionTrace,
    EllipseTrajectory,
    FailureEvent,
    FailureSchedule,
    LineTrajectory,
    OrchestratorProfile,
    RttModel,
    ScenarioConfig,
    TruncNormal,
    Uniform,
)


class ScenarioError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class _Reader:
    """Walks a parsed mapping, tracking the path for diagnostics."""

    def __init__(self, data, path: str = ""):
        if not isinstance(data, dict):
            raise ScenarioError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, default=..., kind=None):
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise ScenarioError(self._p(key), "missing required field")
            return default
        value = self.data[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScenarioError(self._p(key), f"expected a number, got {value!r}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioError(self._p(key), f"expected an integer, got {value!r}")
            return value
        if kind is str and not isinstance(value, str):
            raise ScenarioError(self._p(key), f"expected a string, got {value!r}")
        if kind is list and not isinstance(value, list):
            raise ScenarioError(self._p(key), f"expected a list, got {value!r}")
        return value

    def point(self, key):
        value = self.get(key, kind=list)
        if len(value) != 2 or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value):
            raise ScenarioError(self._p(key), f"expected [x, y], got {value!r}")
        return (float(value[0]), float(value[1]))

    def sub(self, key, default=...):
        value = self.get(key, default)
        if value is default and default is not ...:
            return None
        return _Reader(value, self._p(key))

    def items(self, key):
        return [(f"{self._p(key)}[{i}]", v) for i, v in enumerate(self.get(key, kind=list))]

    def done(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ScenarioError(self._p(extra[0]), "unknown field")


# constructor attribute -> scenario file key
_FILE_KEY = {
    "position": "position_m",
    "comm_range": "comm_range_m",
    "max_rtt": "max_rtt_ms",
    "payload_size": "payload_bytes",
    "local_rtt": "local_rtt_ms",
    "start": "start_m",
    "speed": "speed_mps",
    "center": "center_m",
    "semi_major": "semi_major_m",
    "semi_minor": "semi_minor_m",
    "angular_speed": "angular_speed_radps",
    "phase": "phase_rad",
    "lo": "lo_ms",
    "hi": "hi_ms",
    "mean": "mean_ms",
    "stddev": "stddev_ms",
    "noise": "noise_factor",
    "timeout": "timeout_ms",
    "scale": "scale_ms",
    "detect_delay": "detect_delay_ms",
    "recover_delay": "recover_delay_ms",
    "t": "t_ms",
    "decision_interval": "decision_interval_ms",
    "duration": "duration_ms",
}


def _build(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        # domain errors lead with the attribute name; map it onto the file path
        head, _, rest = msg.partition(": ")
        if rest and head.isidentifier():
            head = _FILE_KEY.get(head, head)
            raise ScenarioError(f"{path}.{head}" if path else head, rest) from None
        raise ScenarioError(path, msg) from None


def _distribution(r: _Reader):
    kind = r.get("kind", kind=str)
    if kind == "uniform":
        d = _build(r.path, Uniform, r.get("lo_ms", kind=float), r.get("hi_ms", kind=float))
    elif kind == "truncnormal":
        d = _build(
            r.path,
            TruncNormal,
            r.get("mean_ms", kind=float),
            r.get("stddev_ms", kind=float),
            r.get("lo_ms", kind=float),
            r.get("hi_ms", kind=float),
        )
    else:
        raise ScenarioError(f"{r.path}.kind", f"unknown distribution {kind!r}")
    r.done()
    return d


def _dist_dict(d) -> dict:
    if isinstance(d, Uniform):
        return {"kind": "uniform", "lo_ms": float(d.lo), "hi_ms": float(d.hi)}
    return {
        "kind": "truncnormal",
        "mean_ms": float(d.mean),
        "stddev_ms": float(d.stddev),
        "lo_ms": float(d.lo),
        "hi_ms": float(d.hi),
    }


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    root = _Reader(data)

    servers = []
    for path, raw in root.items("servers"):
        r = _Reader(raw, path)
        addr = r.sub("address", None)
        address = ("0.0.0.0", 0)
        if addr is not None:
            address = (addr.get("host", kind=str), addr.get("port", kind=int))
            addr.done()
        servers.append(
            _build(
                path,
                ServerDescriptor,
                id=r.get("id", kind=str),
                position=r.point("position_m"),
                comm_range=r.get("comm_range_m", kind=float),
                capacity=r.get("capacity", 1.0, kind=float),
                status=_enum(r, "status", "available"),
                address=address,
                utilization=r.get("utilization", 0.0, kind=float),
            )
        )
        r.done()

    services = []
    for path, raw in root.items("services"):
        r = _Reader(raw, path)
        services.append(
            _build(
                path,
                ServiceSpec,
                name=r.get("name", kind=str),
                criticality=_enum(r, "criticality"),
                max_rtt=r.get("max_rtt_ms", kind=float),
                payload_size=r.get("payload_bytes", 0, kind=int),
                compute_demand=r.get("compute_demand", 1.0, kind=float),
                local_rtt=r.get("local_rtt_ms", 550.0, kind=float),
            )
        )
        r.done()

    tr = root.sub("trajectory")
    kind = tr.get("kind", kind=str)
    if kind == "line":
        trajectory = _build(
            tr.path, LineTrajectory, tr.point("start_m"), tr.point("direction"), tr.get("speed_mps", kind=float)
        )
    elif kind == "ellipse":
        trajectory = _build(
            tr.path,
            EllipseTrajectory,
            tr.point("center_m"),
            tr.get("semi_major_m", kind=float),
            tr.get("semi_minor_m", kind=float),
            tr.get("angular_speed_radps", kind=float),
            tr.get("phase_rad", 0.0, kind=float),
        )
    else:
        raise ScenarioError(f"{tr.path}.kind", f"unknown trajectory {kind!r}")
    tr.done()

    rm = root.sub("rtt_model")
    dists = rm.sub("distributions")
    distributions = {name: _distribution(_Reader(v, f"{dists.path}.{name}")) for name, v in dists.data.items()}
    per_server = {}
    ps = rm.sub("per_server", None)
    if ps is not None:
        for sid, block in ps.data.items():
            sr = _Reader(block, f"{ps.path}.{sid}")
            per_server[sid] = {name: _distribution(_Reader(v, f"{sr.path}.{name}")) for name, v in block.items()}
    noise = rm.get("noise_factor", [1.0, 3.0], kind=list)
    rtt_model = _build(rm.path, RttModel, distributions, per_server, tuple(noise), rm.get("timeout_ms", 10000.0, kind=float))
    rm.used.update(("distributions", "per_server"))
    rm.done()

    pw = root.sub("penalty", None)
    weights = PenaltyWeights()
    if pw is not None:
        weights = _build(
            pw.path,
            PenaltyWeights,
            pw.get("w_direction", kind=float),
            pw.get("w_distance", kind=float),
            pw.get("scale_ms", kind=float),
        )
        pw.done()

    pso = PsoConfig()
    pr = root.sub("pso", None)
    if pr is not None:
        pso = _build(
            pr.path,
            PsoConfig,
            particles=pr.get("particles", 10, kind=int),
            iterations=pr.get("iterations", 80, kind=int),
            inertia=pr.get("inertia", 0.5, kind=float),
            cognitive=pr.get("cognitive", 1.5, kind=float),
            social=pr.get("social", 1.5, kind=float),
            rng_seed=pr.get("rng_seed", 0, kind=int),
            infeasible_penalty=pr.get("infeasible_penalty", 1e9, kind=float),
        )
        pr.done()

    failures = FailureSchedule()
    fr = root.sub("failures", None)
    if fr is not None:
        prof = fr.sub("profile")
        pkind = prof.get("kind", kind=str)
        if pkind == "orchestrator":
            profile = _build(
                prof.path,
                OrchestratorProfile,
                prof.get("mark_unavailable_delay_ms", 30000, kind=int),
                prof.get("restart_delay_ms", 15000, kind=int),
            )
        elif pkind == "custom_api":
            profile = _build(
                prof.path,
                CustomApiProfile,
                prof.get("detect_delay_ms", 2000, kind=int),
                prof.get("recover_delay_ms", 4000, kind=int),
            )
        else:
            raise ScenarioError(f"{prof.path}.kind", f"unknown detection profile {pkind!r}")
        prof.done()
        events = []
        for path, raw in fr.items("events") if "events" in fr.data else []:
            er = _Reader(raw, path)
            events.append(
                _build(path, FailureEvent, er.get("t_ms", kind=int), er.get("server", kind=str), _enum(er, "event"))
            )
            er.done()
        fr.used.add("events")
        failures = _build(fr.path, FailureSchedule, tuple(events), profile)
        fr.done()

    policy = OutcomePolicy()
    op = root.sub("outcome_policy", None)
    if op is not None:
        tol = op.sub("tolerance")
        pen = op.sub("penalty_weight")
        policy = _build(op.path, OutcomePolicy, dict(tol.data), dict(pen.data))
        op.used.update(("tolerance", "penalty_weight"))
        op.done()

    config = _build(
        "",
        ScenarioConfig,
        servers=tuple(servers),
        services=tuple(services),
        trajectory=trajectory,
        rtt_model=rtt_model,
        weights=weights,
        decision_interval=root.get("decision_interval_ms", 5, kind=int),
        duration=root.get("duration_ms", kind=int),
        pso=pso,
        failures=failures,
        rng_seed=root.get("seed", 0, kind=int),
        outcome_policy=policy,
        utilization_cap=root.get("utilization_cap", 1.0, kind=float),
    )
    root.done()
    return config


def _enum(r: _Reader, key, default=...):
    value = r.get(key, default, kind=str)
    return value.lower()


def scenario_to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    tr = config.trajectory
    if isinstance(tr, LineTrajectory):
        traj = {"kind": "line", "start_m": list(tr.start), "direction": list(tr.direction), "speed_mps": tr.speed}
    else:
        traj = {
            "kind": "ellipse",
            "center_m": list(tr.center),
            "semi_major_m": tr.semi_major,
            "semi_minor_m": tr.semi_minor,
            "angular_speed_radps": tr.angular_speed,
            "phase_rad": tr.phase,
        }
    prof = config.failures.profile
    if isinstance(prof, OrchestratorProfile):
        profile = {
            "kind": "orchestrator",
            "mark_unavailable_delay_ms": prof.mark_unavailable_delay,
            "restart_delay_ms": prof.restart_delay,
        }
    else:
        profile = {"kind": "custom_api", "detect_delay_ms": prof.detect_delay, "recover_delay_ms": prof.recover_delay}
    model = config.rtt_model
    return {
        "seed": config.rng_seed,
        "decision_interval_ms": config.decision_interval,
        "duration_ms": config.duration,
        "utilization_cap": config.utilization_cap,
        "servers": [
            {
                "id": s.id,
                "position_m": list(s.position),
                "comm_range_m": s.comm_range,
                "capacity": s.capacity,
                "status": s.status.value,
                "address": {"host": s.address[0], "port": s.address[1]},
                "utilization": s.utilization,
            }
            for s in config.servers
        ],
        "services": [
            {
                "name": s.name,
                "criticality": s.criticality.value,
                "max_rtt_ms": s.max_rtt,
                "payload_bytes": s.payload_size,
                "compute_demand": s.compute_demand,
                "local_rtt_ms": s.local_rtt,
            }
            for s in config.services
        ],
        "trajectory": traj,
        "rtt_model": {
            "distributions": {k: _dist_dict(v) for k, v in model.distributions.items()},
            "per_server": {sid: {k: _dist_dict(v) for k, v in m.items()} for sid, m in model.per_server.items()},
            "noise_factor": list(model.noise),
            "timeout_ms": model.timeout,
        },
        "penalty": {
            "w_direction": config.weights.w_direction,
            "w_distance": config.weights.w_distance,
            "scale_ms": config.weights.scale,
        },
        "pso": {
            "particles": config.pso.particles,
            "iterations": config.pso.iterations,
            "inertia": config.pso.inertia,
            "cognitive": config.pso.cognitive,
            "social": config.pso.social,
            "rng_seed": config.pso.rng_seed,
            "infeasible_penalty": config.pso.infeasible_penalty,
        },
        "failures": {
            "profile": profile,
            "events": [{"t_ms": e.t, "server": e.server, "event": e.kind.value} for e in config.failures.events],
        },
        "outcome_policy": {
            "tolerance": {k.value: v for k, v in config.outcome_policy.tolerance.items()},
            "penalty_weight": {k.value: v for k, v in config.outcome_policy.penalty_weight.items()},
        },
    }


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(where, f"invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        raise ScenarioError("", "empty scenario file")
    return scenario_from_dict(data)


def load_scenario(path) -> ScenarioConfig:
    return loads_scenario(Path(path).read_text())


def dumps_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(config), sort_keys=False, default_flow_style=None)


def save_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps_scenario(config))


# ---------------------------------------------------------------------------
# Tabular output
# ---------------------------------------------------------------------------


def trace_rows(trace: DecisionTrace) -> List[Dict[str, Any]]:
    """Plot-ready rows, one per decision; numeric column names carry their unit."""
    rows = []
    for k, (rec, est) in enumerate(zip(trace.records, trace.estimates)):
        v = rec.request.vehicle
        row = {
            "tick": k,
            "t_ms": rec.request.issued_at,
            "x_m": v.position[0],
            "y_m": v.position[1],
            "heading_x": v.direction[0],
            "heading_y": v.direction[1],
            "service": rec.request.service.name,
            "max_rtt_ms": rec.request.service.max_rtt,
            "target": rec.target,
            "predicted_rtt_ms": rec.predicted_rtt,
            "direction_cost_ms": rec.direction_cost,
            "distance_cost_ms": rec.distance_cost,
            "total_cost_ms": rec.total_cost,
            "measured_rtt_ms": rec.measured_rtt,
            "timed_out": rec.timed_out,
            "outcome": rec.outcome.value if rec.outcome else "",
            "penalty": rec.penalty,
        }
        for sid, value in zip(trace.server_ids, est):
            row[f"rtt_{sid}_ms"] = value
        rows.append(row)
    return rows


def timeline_rows(trace: DecisionTrace) -> List[Dict[str, Any]]:
    return [{"t_ms": c.t, "server": c.server, "registry": c.registry.value, "up": c.up} for c in trace.timeline]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_rows(rows: Sequence[Dict[str, Any]], fmt: str, columns: Sequence[str] = None) -> str:
    if fmt == "json-lines":
        return "".join(json.dumps(r, sort_keys=False, allow_nan=False) + "\n" for r in rows)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_rows(path, rows: Sequence[Dict[str, Any]], fmt: str, columns: Sequence[str] = None) -> Path:
    path = Path(path)
    path.write_text(format_rows(rows, fmt, columns))
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path
