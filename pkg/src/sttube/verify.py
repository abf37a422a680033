"""Post-hoc checking of recorded trajectories: task completion, tube
containment, and inter-agent separation; report generation.

All checks are pure functions of trajectories + scenario + tubes and run
on the recorded samples.  Inter-sample excursions are covered by the
reported sampling-robustness number: the smallest safety margin minus the
largest single-step motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .scenario import ScenarioSpec, unsafe_box_at
from .sim import Trajectory
from .tube import TubeSet, eval_face_array


@dataclass
class AgentCheck:
    agent: int
    name: str
    status: str  # pass | fail | inconclusive
    start_ok: bool
    goal_ok: bool
    avoid_ok: bool
    containment_pass: bool
    worst_containment_margin: float
    goal_distance: float
    first_violation_time: float | None = None

    @property
    def tras_pass(self) -> bool:
        return self.status == "pass"


@dataclass
class VerificationReport:
    agents: list[AgentCheck]
    ca_pass: bool
    min_pairwise_distance: float
    min_tube_gap: float
    sampling_robustness: float
    max_step_motion: float

    @property
    def all_pass(self) -> bool:
        return self.ca_pass and all(
            a.tras_pass and a.containment_pass for a in self.agents
        )

    def failed_checks(self) -> list[str]:
        out = []
        for a in self.agents:
            label = a.name or f"agent {a.agent + 1}"
            if a.status == "inconclusive":
                out.append(f"{label}: trajectory shorter than horizon")
            else:
                if not a.start_ok:
                    out.append(f"{label}: start outside the initial set")
                if not a.goal_ok:
                    out.append(f"{label}: goal missed by {a.goal_distance:.4g}")
                if not a.avoid_ok:
                    out.append(
                        f"{label}: unsafe set entered at t={a.first_violation_time:.4g}"
                    )
                if not a.containment_pass:
                    out.append(
                        f"{label}: tube containment lost "
                        f"(worst margin {a.worst_containment_margin:.4g})"
                    )
        if not self.ca_pass:
            out.append(
                f"inter-agent distance reached {self.min_pairwise_distance:.4g}"
            )
        return out


def _box_distance(point: np.ndarray, bounds: list[list[float]]) -> float:
    d = 0.0
    for v, (lo, hi) in zip(point, bounds):
        if v < lo:
            d += (lo - v) ** 2
        elif v > hi:
            d += (v - hi) ** 2
    return float(np.sqrt(d))


def check_tras(traj: Trajectory, spec: ScenarioSpec) -> AgentCheck:
    """Start membership, goal membership at t_c, unsafe-set avoidance at
    every recorded sample.  A trajectory not covering the horizon is
    inconclusive, never a pass."""
    task = spec.agents[traj.agent]
    y = traj.output(spec.dims)
    covers = (
        traj.aborted is None
        and abs(float(traj.times[-1]) - spec.horizon) < 1e-9
    )
    start_ok = task.start.contains_point(y[0])
    goal_dist = _box_distance(y[-1], task.goal.to_bounds())
    goal_ok = covers and task.goal.contains_point(y[-1])
    avoid_ok = True
    violation_t = None
    for region in spec.obstacles:
        for k, t in enumerate(traj.times):
            box = unsafe_box_at(region, float(t), spec.horizon)
            if box.contains_point(y[k]):
                avoid_ok = False
                violation_t = float(t)
                break
        if not avoid_ok:
            break
    if not covers:
        status = "inconclusive"
    else:
        status = "pass" if (start_ok and goal_ok and avoid_ok) else "fail"
    return AgentCheck(
        agent=traj.agent,
        name=traj.name,
        status=status,
        start_ok=start_ok,
        goal_ok=goal_ok,
        avoid_ok=avoid_ok,
        containment_pass=True,
        worst_containment_margin=float("nan"),
        goal_distance=goal_dist,
        first_violation_time=violation_t,
    )


def check_containment(traj: Trajectory, tubes: TubeSet) -> np.ndarray:
    """Margin series: per step the min over dims of the distance to either
    tube wall.  Strictly positive throughout means contained."""
    dims = tubes.agents[traj.agent].dims
    y = traj.output(len(dims))
    t = np.asarray(traj.times)
    margins = np.full(len(t), np.inf)
    for i, d in enumerate(dims):
        lo = eval_face_array(d.lower, t)
        hi = eval_face_array(d.upper, t)
        margins = np.minimum(margins, np.minimum(y[:, i] - lo, hi - y[:, i]))
    return margins


def check_ca(trajectories: list[Trajectory], dims: int) -> tuple[bool, float]:
    """Minimum pairwise output distance over the common time base.

    A single agent passes vacuously with infinite distance.
    """
    if len(trajectories) < 2:
        return True, float("inf")
    n = min(len(tr.times) for tr in trajectories)
    outputs = [tr.output(dims)[:n] for tr in trajectories]
    min_d = float("inf")
    for a, b in combinations(range(len(outputs)), 2):
        d = float(np.sqrt(((outputs[a] - outputs[b]) ** 2).sum(axis=1)).min())
        min_d = min(min_d, d)
    return min_d > 0.0, min_d


def verify_run(
    trajectories: list[Trajectory],
    spec: ScenarioSpec,
    tubes: TubeSet,
    min_tube_gap: float = float("nan"),
) -> VerificationReport:
    """Full report over a recorded run.

    ``min_tube_gap`` is the worst pairwise tube-separation margin from the
    dense tube validation (negative = separated); tube disjointness is the
    stronger collision-avoidance statement, so both are reported.
    """
    agents = []
    max_step = 0.0
    for traj in trajectories:
        check = check_tras(traj, spec)
        margins = check_containment(traj, tubes)
        check.worst_containment_margin = float(margins.min())
        check.containment_pass = bool((margins > 0.0).all()) and traj.aborted is None
        agents.append(check)
        y = traj.output(spec.dims)
        if len(y) > 1:
            step = float(np.sqrt(((y[1:] - y[:-1]) ** 2).sum(axis=1)).max())
            max_step = max(max_step, step)
    ca_pass, min_dist = check_ca(trajectories, spec.dims)
    worst_margin = min(a.worst_containment_margin for a in agents)
    gap = abs(min_tube_gap) if np.isfinite(min_tube_gap) else np.inf
    robustness = min(worst_margin, gap) - max_step
    return VerificationReport(
        agents=agents,
        ca_pass=ca_pass,
        min_pairwise_distance=min_dist,
        min_tube_gap=min_tube_gap,
        sampling_robustness=float(robustness),
        max_step_motion=max_step,
    )


def report_to_dict(report: VerificationReport) -> dict:
    return {
        "all_pass": report.all_pass,
        "ca": {
            "pass": report.ca_pass,
            "min_pairwise_distance": report.min_pairwise_distance,
            "min_tube_gap": report.min_tube_gap,
        },
        "sampling_robustness": report.sampling_robustness,
        "max_step_motion": report.max_step_motion,
        "agents": [
            {
                "agent": a.agent + 1,
                "name": a.name,
                "status": a.status,
                "tras_pass": a.tras_pass,
                "start_ok": a.start_ok,
                "goal_ok": a.goal_ok,
                "avoid_ok": a.avoid_ok,
                "containment_pass": a.containment_pass,
                "worst_containment_margin": a.worst_containment_margin,
                "goal_distance": a.goal_distance,
                "first_violation_time": a.first_violation_time,
            }
            for a in report.agents
        ],
    }


def save_report(report: VerificationReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2) + "\n")


def report_to_text(report: VerificationReport) -> str:
    lines = ["verification summary", "-" * 40]
    for a in report.agents:
        label = a.name or f"agent {a.agent + 1}"
        lines.append(
            f"{label:>10}: {a.status:12} goal_dist={a.goal_distance:8.4f} "
            f"containment_margin={a.worst_containment_margin:8.4f}"
        )
    lines.append(
        f"collision: {'pass' if report.ca_pass else 'FAIL'}  "
        f"min_distance={report.min_pairwise_distance:.4f}  "
        f"tube_gap={report.min_tube_gap:.4f}"
    )
    lines.append(
        f"sampling robustness: {report.sampling_robustness:.4f} "
        f"(max step motion {report.max_step_motion:.6f})"
    )
    lines.append("overall: " + ("PASS" if report.all_pass else "FAIL"))
    return "\n".join(lines)
