"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with the measured quantities; the
lines are repeated in the terminal summary. Run with ``pytest -m acceptance``.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from vecoffload import experiments
from vecoffload.cli import main
from vecoffload.decision import PsoConfig, measure_solver, random_problem, solve_brute_force, solve_greedy, solve_pso
from vecoffload.detection import trace_report
from vecoffload.domain import LOCAL, ServerStatus
from vecoffload.geometry import PenaltyWeights
from vecoffload.scenarios import failure_drill, penalty_study, trajectory_run
from vecoffload.simulator import build_timeline, run_scenario

pytestmark = pytest.mark.acceptance

REFERENCE_PSO = PsoConfig(particles=10, iterations=80, inertia=0.5, cognitive=1.5, social=1.5)
EPS = 1e-9


def test_c1_pso_accuracy_10x10(criterion):
    result = experiments.bench(10, 10, 100, seed=0, solvers=("bf", "pso"), pso_config=REFERENCE_PSO, timing=False)
    gaps = [r["pso_gap_pct"] for r in result.instances]
    assert None not in gaps, "brute force must finish on every instance"
    mean, median = float(np.mean(gaps)), float(np.median(gaps))
    ok = mean <= 2.0 and median <= EPS
    criterion(1, ok, f"mean gap {mean:.3f} % (<= 2), median gap {median:.3f} % (== 0) over {len(gaps)} instances")
    assert ok


def test_c2_oracle_dominance_small(criterion):
    rng = np.random.default_rng(2024)
    dominance_violations, optimal = 0, 0
    n = 500
    for k in range(n):
        m, t = int(rng.integers(1, 5)), int(rng.integers(1, 9))
        problem = random_problem(t, m, seed=[1, k])
        bf = solve_brute_force(problem).objective
        pso = solve_pso(problem, replace(REFERENCE_PSO, rng_seed=k)).objective
        greedy = solve_greedy(problem).objective
        tol = EPS * max(1.0, bf)
        dominance_violations += (pso < bf - tol) + (greedy < bf - tol)
        optimal += pso <= bf + tol
    frac = optimal / n
    ok = dominance_violations == 0 and frac >= 0.90
    criterion(2, ok, f"dominance violations {dominance_violations} (== 0), PSO optimal on {100 * frac:.1f} % (>= 90 %)")
    assert ok


def test_c3_pso_scaling(criterion):
    small = random_problem(100, 15, seed=[3, 0])
    large = random_problem(1000, 15, seed=[3, 1])
    measure_solver(small, "pso", 1, REFERENCE_PSO)  # warm-up
    t_small = measure_solver(small, "pso", 5, REFERENCE_PSO).min_ms
    t_large = measure_solver(large, "pso", 5, REFERENCE_PSO).min_ms
    ratio = t_large / t_small
    t_10 = measure_solver(random_problem(10, 10, seed=[3, 2]), "pso", 5, REFERENCE_PSO).mean_ms
    ok = ratio <= 15.0
    criterion(
        3,
        ok,
        f"time ratio 1000/100 tasks = {ratio:.2f} (<= 15); {t_small:.1f} ms vs {t_large:.1f} ms; 10x10 mean {t_10:.1f} ms",
    )
    assert ok


def _feasible_oracle(rec, servers, estimates, weights):
    """Independent re-derivation of which servers could serve this tick."""
    v, svc = rec.request.vehicle, rec.request.service
    out = []
    for s, rtt in zip(servers, estimates):
        dx, dy = s.position[0] - v.position[0], s.position[1] - v.position[1]
        d = math.hypot(dx, dy)
        if d > s.comm_range or s.status is not ServerStatus.AVAILABLE:
            continue
        cos = (dx * v.direction[0] + dy * v.direction[1]) / d if d > 0 and v.speed > 0 else 1.0
        total = rtt + weights.scale * (weights.w_direction * (1 - cos) / 2 + weights.w_distance * d / s.comm_range)
        # remaining chord length ahead of the vehicle inside the disc
        a = dx * v.direction[0] + dy * v.direction[1]
        perp2 = max(d * d - a * a, 0.0)
        stay = (a + math.sqrt(s.comm_range**2 - perp2)) / v.speed * 1000.0
        if total <= svc.max_rtt and stay >= total:
            out.append((total, s.id))
    return out


def test_c4_threshold_and_fallback(criterion):
    cfg = trajectory_run()
    trace = run_scenario(cfg)
    assert len(trace.records) == 10_000
    over, wrong_local, missed_local, offloaded = 0, 0, 0, 0
    for rec, est in zip(trace.records, trace.estimates):
        feasible = _feasible_oracle(rec, cfg.servers, est, cfg.weights)
        if rec.is_local:
            wrong_local += bool(feasible)
        else:
            offloaded += 1
            over += rec.total_cost > 590.0
            missed_local += not feasible
    violations = over + wrong_local + missed_local
    ok = violations == 0 and 0 < offloaded < len(trace.records)
    criterion(
        4,
        ok,
        f"{violations} violations over {len(trace.records)} ticks "
        f"(over threshold {over}, Local despite feasible {wrong_local}, offloaded with none feasible {missed_local}); "
        f"{offloaded} offloaded",
    )
    assert ok


def test_c5_measurement_divergence(criterion):
    def incorrect_fraction(noise):
        cfg = trajectory_run(noise=noise)
        s = trace_report(run_scenario(cfg), cfg.outcome_policy)
        return s.offloaded_incorrect_fraction, s.offloaded

    noisy, n1 = incorrect_fraction((1.0, 3.0))
    exact, n2 = incorrect_fraction((1.0, 1.0))
    ok = noisy > 0 and exact == 0 and n1 > 0 and n2 > 0
    criterion(5, ok, f"incorrect fraction with noise <= 3: {noisy:.4f} (> 0); with noise 1: {exact} (== 0)")
    assert ok


def test_c6_penalty_argmax(criterion):
    cfg = penalty_study()
    rows = experiments.penalty_study(cfg, sweep=((1.0, 0.0), (0.0, 1.0)))
    dir_bad = dist_bad = 0
    for row in rows:
        p, h = (row["x_m"], row["y_m"]), (row["heading_x"], row["heading_y"])
        cos, dist = {}, {}
        for s in cfg.servers:
            d = math.dist(s.position, p)
            cos[s.id] = ((s.position[0] - p[0]) * h[0] + (s.position[1] - p[1]) * h[1]) / d
            if d <= s.comm_range:
                dist[s.id] = d
        best_cos = max(sorted(cos), key=lambda sid: cos[sid])
        nearest = min(sorted(dist), key=lambda sid: dist[sid])
        if row["w_direction"] == 1.0:
            dir_bad += row["target"] != best_cos
        else:
            dist_bad += row["target"] != nearest
    ok = dir_bad == 0 and dist_bad == 0
    criterion(6, ok, f"direction-only mismatches {dir_bad}, distance-only mismatches {dist_bad} over {len(rows) // 2} ticks")
    assert ok


def _no_target_while_unavailable(cfg, trace):
    """Count decisions that hit a server between its detection and its return to service."""
    bad = 0
    changes = build_timeline(cfg.servers, cfg.failures)
    for sid in {c.server for c in changes}:
        spans, start = [], None
        for c in (c for c in changes if c.server == sid):
            if c.registry is not ServerStatus.AVAILABLE and start is None:
                start = c.t
            elif c.registry is ServerStatus.AVAILABLE and start is not None:
                spans.append((start, c.t))
                start = None
        if start is not None:
            spans.append((start, math.inf))
        bad += sum(
            1 for r in trace.records if r.target == sid and any(a <= r.request.issued_at < b for a, b in spans)
        )
    return bad


def test_c7_failure_drill(criterion):
    parts, ok = [], True
    for profile, expected in (("orchestrator", 30_000), ("custom_api", 2_000)):
        cfg = failure_drill(profile)
        trace = run_scenario(cfg)
        windows = [r.stale_window_ms for r in experiments.failure_drill(cfg, trace)]
        tick = cfg.decision_interval
        good = all(w is not None and abs(w - expected) <= tick for w in windows)
        after = _no_target_while_unavailable(cfg, trace)
        ok &= good and after == 0
        parts.append(f"{profile}: windows {windows} ms (expect {expected} +/- {tick}), post-detection hits {after}")
    criterion(7, ok, "; ".join(parts))
    assert ok


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "bench_timing.csv"}


def test_c8_determinism(criterion, tmp_path, capsys):
    commands = {
        "run": ["run", "--scenario", "builtin:trajectory-run"],
        "bench": ["bench", "--tasks", "8", "--servers", "4", "--instances", "10"],
        "failure-drill": ["failure-drill", "--scenario", "builtin:failure-drill-orchestrator"],
        "penalty-study": ["penalty-study", "--scenario", "builtin:penalty-study"],
        "validate": ["validate", "--scenario", "builtin:failure-drill-custom-api"],
    }
    differing = []
    for name, argv in commands.items():
        snaps = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}"
            extra = [] if name == "validate" else ["--out", str(out), "--seed", "5"]
            capsys.readouterr()
            assert main(argv + extra) == 0
            stdout = capsys.readouterr().out.replace(str(out), "<out>")
            snaps.append((_outputs(out) if out.exists() else {}, stdout if name != "bench" else ""))
        if snaps[0] != snaps[1]:
            differing.append(name)
    ok = not differing
    with capsys.disabled():
        criterion(8, ok, f"{len(commands)} commands re-run; differing outputs: {differing or 'none'}")
    assert ok
