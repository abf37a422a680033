"""Tube synthesis: assemble the sampled optimization problem, search over
disjunction witnesses, solve, and certify.

Every constraint is affine in the face coefficients and slack variables
once each existential disjunction (which dimension separates, and on
which side) is assigned a witness.  Synthesis therefore alternates:
solve the LP under the current assignment, then flip the witnesses of
the binding disjunctions using the solved tube geometry.  The heuristic's
incompleteness is harmless: the certificate plus the dense validation
oracle gate every result.

Constraint families, per time sample:
  endpoints  -- face values pinned to the start/goal box bounds (equalities)
  arena      -- faces confined to the arena (hard rows, no slack; see note)
  width      -- lower + min_width - upper <= slack
  unsafe     -- witnessed face clears the obstacle's extreme face <= slack
  collision  -- witnessed face pair of two agents separates <= slack
  ordering   -- per-dim slack < global slack (strictness via a small gap)

Note on the arena family: start and goal boxes may touch the arena
boundary, and the endpoint equalities then pin face values exactly onto
it (the published case studies do exactly this, including a face riding
the boundary for the whole horizon).  A slack-coupled arena row can
therefore never be negative, which would make the sampled-to-robust
margin test unsatisfiable for every scenario of this shape.  Arena rows
are instead enforced exactly at every sample, and the dense validation
bounds the between-sample excursion through the faces' curvature.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import LpNumericalError, LpProblem, solve_lp
from .sampling import SampleSet, sample_unsafe
from .scenario import ScenarioSpec, unsafe_box_at
from .tube import (
    AgentTubes,
    TubeDim,
    TubeFace,
    TubeSet,
    eval_face_array,
    slope_bounds,
)

ETA_GAP = 1e-6  # realizes strict inequalities; absorbed by the margin
_VIOL_TOL = 1e-9


class SynthesisError(RuntimeError):
    """Construction failure (e.g. degree too low for the endpoint pins)."""


class SynthesisInfeasible(RuntimeError):
    """The LP under the current assignment admits no solution."""


class SynthesisFailure(RuntimeError):
    """Refinement budget exhausted without a certified result."""

    def __init__(self, message: str, best_margin: float):
        super().__init__(message)
        self.best_margin = best_margin


# ---------------------------------------------------------------------------
# Variable layout and instance


@dataclass(frozen=True)
class TubeTemplate:
    """Per-agent, per-dim polynomial degrees and minimum widths."""

    degrees: tuple[tuple[int, ...], ...]
    min_widths: tuple[tuple[float, ...], ...]

    @staticmethod
    def from_spec(spec: ScenarioSpec, degree_override: int | None = None) -> "TubeTemplate":
        degrees = tuple(
            tuple(
                degree_override if degree_override is not None else d
                for d in a.tube_degree
            )
            for a in spec.agents
        )
        widths = tuple(tuple(a.min_width) for a in spec.agents)
        return TubeTemplate(degrees=degrees, min_widths=widths)


class SopInstance:
    """The finite constraint system for one scenario + sample set.

    Holds the variable layout (coefficient blocks per face, per-dim
    slacks, the global slack last) and produces constraint rows on
    demand, so the solver can work from a lazily grown active subset
    while violations are scanned vectorized over all samples.
    """

    def __init__(self, spec: ScenarioSpec, samples: SampleSet, template: TubeTemplate):
        self.spec = spec
        self.samples = samples
        self.template = template
        self.n = spec.dims
        self.m = spec.agent_count
        self.times = np.asarray(samples.time_samples)
        self.n_t = len(self.times)

        offset = 0
        self.coeff_offset: dict[tuple[int, int, str], tuple[int, int]] = {}
        for j in range(self.m):
            for i in range(self.n):
                z = template.degrees[j][i] + 1
                if z < 2:
                    s, g = spec.agents[j].start.axes[i], spec.agents[j].goal.axes[i]
                    if s.lo != g.lo or s.hi != g.hi:
                        raise SynthesisError(
                            f"agent {j + 1} dim {i + 1}: degree "
                            f"{template.degrees[j][i]} cannot satisfy both endpoint "
                            "equalities; a higher-degree polynomial is required"
                        )
                for side in ("lower", "upper"):
                    self.coeff_offset[(j, i, side)] = (offset, z)
                    offset += z
        self.eta_offset = {}
        for j in range(self.m):
            for i in range(self.n):
                self.eta_offset[(j, i)] = offset
                offset += 1
        self.eta_global = offset
        self.n_vars = offset + 1

        z_max = max(max(d) for d in template.degrees) + 1
        self.powers = np.vander(self.times, N=z_max, increasing=True)
        # obstacle extreme faces per sample: (n_t, regions, n, 2) lo/hi
        n_reg = len(spec.obstacles)
        self.obstacle_bounds = np.zeros((self.n_t, n_reg, self.n, 2))
        for r_idx in range(self.n_t):
            for r, box in samples.unsafe_boxes[r_idx] if samples.unsafe_boxes else []:
                b = np.array(box.to_bounds())
                self.obstacle_bounds[r_idx, r, :, 0] = b[:, 0]
                self.obstacle_bounds[r_idx, r, :, 1] = b[:, 1]
        self.pairs = [
            (j, k) for j in range(self.m) for k in range(j + 1, self.m)
        ]

    # -- row builders (row . x <= rhs) --------------------------------------

    def _face_row(self, row, key, t_power_row, sign=1.0):
        off, z = self.coeff_offset[key]
        row[off : off + z] += sign * t_power_row[:z]

    def equality_rows(self):
        """Endpoint pins: face(0) and face(t_c) equal the box bounds."""
        rows, rhs = [], []
        p0 = self.powers[0]
        pc = np.vander([self.spec.horizon], N=self.powers.shape[1], increasing=True)[0]
        for j, task in enumerate(self.spec.agents):
            for i in range(self.n):
                for side, s_val, g_val in (
                    ("lower", task.start.axes[i].lo, task.goal.axes[i].lo),
                    ("upper", task.start.axes[i].hi, task.goal.axes[i].hi),
                ):
                    for pw, val in ((p0, s_val), (pc, g_val)):
                        row = np.zeros(self.n_vars)
                        self._face_row(row, (j, i, side), pw)
                        rows.append(row)
                        rhs.append(val)
        return np.array(rows), np.array(rhs)

    def arena_row(self, j, i, side, r_idx):
        """Two hard rows: arena_lo <= face(t_r) <= arena_hi."""
        ax = self.spec.arena.axes[i]
        pw = self.powers[r_idx]
        low = np.zeros(self.n_vars)
        self._face_row(low, (j, i, side), pw, sign=-1.0)
        high = np.zeros(self.n_vars)
        self._face_row(high, (j, i, side), pw)
        return [(low, -ax.lo), (high, ax.hi)]

    def width_row(self, j, i, r_idx):
        pw = self.powers[r_idx]
        row = np.zeros(self.n_vars)
        self._face_row(row, (j, i, "lower"), pw)
        self._face_row(row, (j, i, "upper"), pw, sign=-1.0)
        row[self.eta_offset[(j, i)]] = -1.0
        return row, -self.template.min_widths[j][i]

    def unsafe_row(self, j, region, r_idx, dim, side):
        """side "above": tube lower face above the obstacle's top face;
        side "below": tube upper face below the obstacle's bottom face."""
        pw = self.powers[r_idx]
        row = np.zeros(self.n_vars)
        row[self.eta_offset[(j, dim)]] = -1.0
        if side == "above":
            self._face_row(row, (j, dim, "lower"), pw, sign=-1.0)
            rhs = -self.obstacle_bounds[r_idx, region, dim, 1]
        else:
            self._face_row(row, (j, dim, "upper"), pw)
            rhs = self.obstacle_bounds[r_idx, region, dim, 0]
        return row, float(rhs)

    def collision_row(self, j, k, r_idx, dim, order):
        """order "jk": agent j's upper face below agent k's lower face."""
        pw = self.powers[r_idx]
        row = np.zeros(self.n_vars)
        row[self.eta_offset[(j, dim)]] = -1.0
        if order == "jk":
            self._face_row(row, (j, dim, "upper"), pw)
            self._face_row(row, (k, dim, "lower"), pw, sign=-1.0)
        else:
            self._face_row(row, (k, dim, "upper"), pw)
            self._face_row(row, (j, dim, "lower"), pw, sign=-1.0)
        return row, 0.0

    def ordering_rows(self):
        rows, rhs = [], []
        for (j, i), off in self.eta_offset.items():
            row = np.zeros(self.n_vars)
            row[off] = 1.0
            row[self.eta_global] = -1.0
            rows.append(row)
            rhs.append(-ETA_GAP)
        return np.array(rows), np.array(rhs)

    # -- vectorized evaluation ----------------------------------------------

    def face_values(self, x: np.ndarray) -> dict[tuple[int, int, str], np.ndarray]:
        """Every face evaluated at every time sample."""
        out = {}
        for key, (off, z) in self.coeff_offset.items():
            out[key] = self.powers[:, :z] @ x[off : off + z]
        return out

    def tubes_from_solution(self, x: np.ndarray) -> TubeSet:
        agents = []
        for j in range(self.m):
            dims = []
            for i in range(self.n):
                off_l, z_l = self.coeff_offset[(j, i, "lower")]
                off_u, z_u = self.coeff_offset[(j, i, "upper")]
                dims.append(
                    TubeDim(
                        lower=TubeFace(tuple(x[off_l : off_l + z_l]), side="lower"),
                        upper=TubeFace(tuple(x[off_u : off_u + z_u]), side="upper"),
                        min_width=self.template.min_widths[j][i],
                    )
                )
            agents.append(AgentTubes(dims=tuple(dims), name=self.spec.agents[j].name))
        return TubeSet(horizon=self.spec.horizon, agents=tuple(agents))


def build_sop(
    spec: ScenarioSpec,
    samples: SampleSet,
    template: TubeTemplate | None = None,
) -> SopInstance:
    """Assemble the instance; raises SynthesisError when a declared degree
    cannot satisfy the endpoint equalities."""
    if template is None:
        template = TubeTemplate.from_spec(spec)
    return SopInstance(spec, samples, template)


# ---------------------------------------------------------------------------
# Disjunct assignment


@dataclass
class DisjunctAssignment:
    """One witness per disjunction: (dim, side) for unsafe rows keyed by
    (agent, region, sample); (dim, order) for collision rows keyed by
    (j, k, sample) with j < k."""

    unsafe: dict[tuple[int, int, int], tuple[int, str]] = field(default_factory=dict)
    collision: dict[tuple[int, int, int], tuple[int, str]] = field(default_factory=dict)

    def copy(self) -> "DisjunctAssignment":
        return DisjunctAssignment(unsafe=dict(self.unsafe), collision=dict(self.collision))


def _reference_points(spec: ScenarioSpec, times: np.ndarray) -> np.ndarray:
    """Straight-line start-center to goal-center path per agent: (M, n_t, n)."""
    out = np.zeros((spec.agent_count, len(times), spec.dims))
    for j, task in enumerate(spec.agents):
        s = np.array(task.start.center)
        g = np.array(task.goal.center)
        w = (times / spec.horizon)[:, None]
        out[j] = s[None, :] * (1.0 - w) + g[None, :] * w
    return out


def seed_assignment(spec: ScenarioSpec, samples: SampleSet) -> DisjunctAssignment:
    """Geometric heuristic from straight-line reference paths.

    Unsafe rows pick the dimension with the largest signed clearance
    between the reference point and the obstacle box (side by sign);
    collision rows pick the dimension with the largest reference
    separation (order by sign).  Ties break to the lowest dimension.
    """
    times = np.asarray(samples.time_samples)
    refs = _reference_points(spec, times)
    asg = DisjunctAssignment()
    for r_idx, t in enumerate(times):
        for r, region in enumerate(spec.obstacles):
            box = unsafe_box_at(region, float(t), spec.horizon)
            for j in range(spec.agent_count):
                best = None
                for i in range(spec.dims):
                    lo, hi = box.axes[i].lo, box.axes[i].hi
                    p = refs[j, r_idx, i]
                    below = lo - p  # positive when reference is below the box
                    above = p - hi  # positive when reference is above the box
                    clearance, side = max((below, "below"), (above, "above"))
                    if best is None or clearance > best[0] + 1e-15:
                        best = (clearance, i, side)
                asg.unsafe[(j, r, r_idx)] = (best[1], best[2])
        for j in range(spec.agent_count):
            for k in range(j + 1, spec.agent_count):
                gaps = refs[j, r_idx] - refs[k, r_idx]
                i = int(np.argmax(np.abs(gaps)))
                order = "jk" if gaps[i] < 0 else "kj"
                asg.collision[(j, k, r_idx)] = (i, order)
    return asg


# ---------------------------------------------------------------------------
# Solving (lazy active-set loop around the dense simplex)


@dataclass
class SolveDiagnostics:
    eta_star: float = float("nan")
    tubes: TubeSet | None = None
    x: np.ndarray | None = None
    binding_unsafe: list = field(default_factory=list)
    binding_collision: list = field(default_factory=list)
    lp_rows: int = 0
    lp_solves: int = 0
    active_keys: tuple = ()


def _assignment_row_values(instance, assignment, faces, etas):
    """Slack of every disjunct row at the current solution: value - eta_i.

    Returns two dicts keyed like the assignment, mapping to the row's
    slack (<= 0 satisfied; ~0 binding)."""
    unsafe_vals = {}
    for (j, r, r_idx), (i, side) in assignment.unsafe.items():
        if side == "above":
            v = instance.obstacle_bounds[r_idx, r, i, 1] - faces[(j, i, "lower")][r_idx]
        else:
            v = faces[(j, i, "upper")][r_idx] - instance.obstacle_bounds[r_idx, r, i, 0]
        unsafe_vals[(j, r, r_idx)] = v - etas[(j, i)]
    collision_vals = {}
    for (j, k, r_idx), (i, order) in assignment.collision.items():
        if order == "jk":
            v = faces[(j, i, "upper")][r_idx] - faces[(k, i, "lower")][r_idx]
        else:
            v = faces[(k, i, "upper")][r_idx] - faces[(j, i, "lower")][r_idx]
        collision_vals[(j, k, r_idx)] = v - etas[(j, i)]
    return unsafe_vals, collision_vals


def _build_row(instance, assignment, key):
    kind = key[0]
    if kind == "arena":
        _, j, i, s_idx, half, r_idx = key
        side = ("lower", "upper")[s_idx]
        return instance.arena_row(j, i, side, r_idx)[half]
    if kind == "width":
        _, j, i, r_idx = key
        return instance.width_row(j, i, r_idx)
    if kind == "unsafe":
        _, j, r, r_idx = key
        i, side = assignment.unsafe[(j, r, r_idx)]
        return instance.unsafe_row(j, r, r_idx, i, side)
    _, j, k, r_idx = key
    i, order = assignment.collision[(j, k, r_idx)]
    return instance.collision_row(j, k, r_idx, i, order)


def solve_sop(
    instance: SopInstance,
    assignment: DisjunctAssignment,
    diagnostics: SolveDiagnostics | None = None,
    warm_keys: tuple = (),
) -> tuple[TubeSet, float]:
    """Minimize the global slack under the assigned witnesses.

    A cutting-plane loop around the dense simplex: solve on a small
    working set, scan every constraint row vectorized, add the violated
    ones, drop rows that have gone slack, repeat until the full sampled
    system is satisfied at the optimum.  Deterministic throughout;
    ``warm_keys`` seeds the working set from a related earlier solve.
    """
    diag = diagnostics if diagnostics is not None else SolveDiagnostics()
    eq_rows, eq_rhs = instance.equality_rows()
    ord_rows, ord_rhs = instance.ordering_rows()

    active: dict[tuple, tuple[np.ndarray, float]] = {}
    add_count: dict[tuple, int] = {}

    def activate(key) -> int:
        if key in active:
            return 0
        active[key] = _build_row(instance, assignment, key)
        add_count[key] = add_count.get(key, 0) + 1
        return 1

    # The seed rows bound every face at a handful of times, which keeps
    # the subproblem bounded regardless of what the warm start carries.
    seed_idx = sorted(
        {0, instance.n_t // 4, instance.n_t // 2, 3 * instance.n_t // 4,
         instance.n_t - 1}
    )
    for r_idx in seed_idx:
        for j in range(instance.m):
            for i in range(instance.n):
                for s_idx in (0, 1):
                    for half in (0, 1):
                        activate(("arena", j, i, s_idx, half, r_idx))
                activate(("width", j, i, r_idx))
            for r in range(len(instance.spec.obstacles)):
                activate(("unsafe", j, r, r_idx))
            for k in range(j + 1, instance.m):
                activate(("coll", j, k, r_idx))
    for key in warm_keys:
        activate(key)

    objective = np.zeros(instance.n_vars)
    objective[instance.eta_global] = 1.0

    x = None
    for _round in range(300):
        keys = sorted(active.keys())
        rows = np.vstack([np.array([active[k][0] for k in keys]), ord_rows])
        rhs = np.concatenate(
            [np.array([active[k][1] for k in keys]), ord_rhs]
        )
        problem = LpProblem(
            objective=objective,
            ineq_matrix=rows,
            ineq_rhs=rhs,
            eq_matrix=eq_rows,
            eq_rhs=eq_rhs,
        )
        sol = solve_lp(problem)
        diag.lp_solves += 1
        diag.lp_rows = max(diag.lp_rows, len(rhs))
        if sol.status == "infeasible":
            raise SynthesisInfeasible(
                "no tube satisfies the endpoint pins and arena bounds at the "
                "declared degrees; a higher-degree polynomial may be required"
            )
        if sol.status != "optimal":
            raise SynthesisInfeasible(f"LP terminated with status {sol.status}")
        x = sol.x

        faces = instance.face_values(x)
        etas = {
            (j, i): x[instance.eta_offset[(j, i)]]
            for j in range(instance.m)
            for i in range(instance.n)
        }
        new = 0
        scale = max(1.0, float(np.abs(x).max()))
        tol = _VIOL_TOL * scale

        for j in range(instance.m):
            for i in range(instance.n):
                ax = instance.spec.arena.axes[i]
                for s_idx, side in enumerate(("lower", "upper")):
                    vals = faces[(j, i, side)]
                    for half, viol in enumerate((ax.lo - vals, vals - ax.hi)):
                        bad = np.flatnonzero(viol > tol)
                        for r_idx in bad[np.argsort(-viol[bad])][:8]:
                            new += activate(("arena", j, i, s_idx, half, int(r_idx)))
                w_viol = (
                    faces[(j, i, "lower")]
                    + instance.template.min_widths[j][i]
                    - faces[(j, i, "upper")]
                    - etas[(j, i)]
                )
                bad = np.flatnonzero(w_viol > tol)
                for r_idx in bad[np.argsort(-w_viol[bad])][:8]:
                    new += activate(("width", j, i, int(r_idx)))

        unsafe_vals, coll_vals = _assignment_row_values(
            instance, assignment, faces, etas
        )
        for v, key in sorted(
            ((v, k) for k, v in unsafe_vals.items() if v > tol), reverse=True
        )[:120]:
            new += activate(("unsafe",) + key)
        for v, key in sorted(
            ((v, k) for k, v in coll_vals.items() if v > tol), reverse=True
        )[:120]:
            new += activate(("coll",) + key)
        if new == 0:
            break
        # Drop rows that have gone slack at this optimum, except ones that
        # keep coming back (pinned after three re-adds to avoid cycling).
        slack_rows = rows[: len(keys)] @ x - rhs[: len(keys)]
        for key, s in zip(keys, slack_rows):
            if s < -1e-6 * scale and add_count.get(key, 0) < 3:
                del active[key]
    else:
        raise SynthesisInfeasible("lazy constraint loop failed to converge")

    eta_star = float(x[instance.eta_global])
    tubes = instance.tubes_from_solution(x)
    diag.eta_star = eta_star
    diag.tubes = tubes
    diag.x = x
    # Binding disjunct rows: the row sits at its slack AND that slack pins
    # the global optimum through the ordering chain.
    binding_tol = 1e-7
    pinned = {
        (j, i)
        for (j, i), v in etas.items()
        if v >= eta_star - ETA_GAP - binding_tol
    }
    diag.binding_unsafe = sorted(
        k
        for k, v in unsafe_vals.items()
        if v >= -binding_tol and (k[0], assignment.unsafe[k][0]) in pinned
    )
    diag.binding_collision = sorted(
        k
        for k, v in coll_vals.items()
        if v >= -binding_tol and (k[0], assignment.collision[k][0]) in pinned
    )
    diag.active_keys = tuple(sorted(active.keys()))
    return tubes, eta_star


# ---------------------------------------------------------------------------
# Assignment refinement


def _best_unsafe_choice(instance, faces, j, r, r_idx):
    """Most-negative-clearance (dim, side) for one unsafe disjunction under
    the current face geometry."""
    best = None
    for i in range(instance.n):
        b_lo = instance.obstacle_bounds[r_idx, r, i, 0]
        b_hi = instance.obstacle_bounds[r_idx, r, i, 1]
        above = b_hi - faces[(j, i, "lower")][r_idx]
        below = faces[(j, i, "upper")][r_idx] - b_lo
        for v, side in ((above, "above"), (below, "below")):
            if best is None or v < best[0] - 1e-15:
                best = (v, i, side)
    return best[1], best[2], best[0]


def _best_collision_choice(instance, faces, j, k, r_idx):
    best = None
    for i in range(instance.n):
        jk = faces[(j, i, "upper")][r_idx] - faces[(k, i, "lower")][r_idx]
        kj = faces[(k, i, "upper")][r_idx] - faces[(j, i, "lower")][r_idx]
        for v, order in ((jk, "jk"), (kj, "kj")):
            if best is None or v < best[0] - 1e-15:
                best = (v, i, order)
    return best[1], best[2], best[0]


def _subsample(window: list[int], cap: int = 12) -> list[int]:
    if len(window) <= cap:
        return window
    step = (len(window) - 1) / (cap - 1)
    return [window[round(q * step)] for q in range(cap)]


def _face_lp_columns(instance, key, r_indices):
    off, z = instance.coeff_offset[key]
    return instance.powers[np.asarray(r_indices)][:, :z], off, z


def _score_unsafe_option(instance, j, r, window, i, side) -> float:
    """Best achievable slack for one face honoring one witness uniformly.

    A tiny LP over that single face: endpoint pins, arena bounds, room
    for the opposite face at minimum width, and the witness rows over a
    subsampled window.  The optimum ranks how viable the option is.
    """
    sub = _subsample(sorted(window))
    face = "lower" if side == "above" else "upper"
    powers, _, z = _face_lp_columns(instance, (j, i, face), sub)
    task = instance.spec.agents[j]
    ax = instance.spec.arena.axes[i]
    width = instance.template.min_widths[j][i]
    t_c = instance.spec.horizon
    p0 = np.zeros(z)
    p0[0] = 1.0
    pc = np.array([t_c**k for k in range(z)])
    if face == "lower":
        e0, ec = task.start.axes[i].lo, task.goal.axes[i].lo
        lo_room, hi_room = ax.lo, ax.hi - width
    else:
        e0, ec = task.start.axes[i].hi, task.goal.axes[i].hi
        lo_room, hi_room = ax.lo + width, ax.hi
    nv = z + 1  # coefficients plus the slack being minimized
    rows, rhs = [], []
    for r_idx, p in zip(sub, powers):
        low = np.zeros(nv)
        low[:z] = -p
        rows.append(low)
        rhs.append(-lo_room)
        high = np.zeros(nv)
        high[:z] = p
        rows.append(high)
        rhs.append(hi_room)
        wit = np.zeros(nv)
        wit[-1] = -1.0
        if side == "above":
            wit[:z] = -p
            rows.append(wit)
            rhs.append(-instance.obstacle_bounds[r_idx, r, i, 1])
        else:
            wit[:z] = p
            rows.append(wit)
            rhs.append(instance.obstacle_bounds[r_idx, r, i, 0])
    eq = np.zeros((2, nv))
    eq[0, :z] = p0
    eq[1, :z] = pc
    obj = np.zeros(nv)
    obj[-1] = 1.0
    sol = solve_lp(
        LpProblem(
            objective=obj,
            ineq_matrix=np.array(rows),
            ineq_rhs=np.array(rhs),
            eq_matrix=eq,
            eq_rhs=np.array([e0, ec]),
        )
    )
    return sol.objective_value if sol.status == "optimal" else float("inf")


def _score_collision_option(instance, j, k, window, i, order) -> float:
    """Best achievable separation slack for one pair witnessing dim i."""
    sub = _subsample(sorted(window))
    low_agent, high_agent = (j, k) if order == "jk" else (k, j)
    p_u, _, z_u = _face_lp_columns(instance, (low_agent, i, "upper"), sub)
    p_l, _, z_l = _face_lp_columns(instance, (high_agent, i, "lower"), sub)
    spec = instance.spec
    ax = spec.arena.axes[i]
    t_c = spec.horizon
    nv = z_u + z_l + 1
    rows, rhs = [], []
    for a, b in zip(p_u, p_l):
        gap = np.zeros(nv)
        gap[:z_u] = a
        gap[z_u : z_u + z_l] = -b
        gap[-1] = -1.0
        rows.append(gap)
        rhs.append(0.0)
        for block, offset, zz, width in (
            (a, 0, z_u, instance.template.min_widths[low_agent][i]),
            (b, z_u, z_l, instance.template.min_widths[high_agent][i]),
        ):
            low = np.zeros(nv)
            low[offset : offset + zz] = -block
            rows.append(low)
            rhs.append(-(ax.lo + (width if offset == 0 else 0.0)))
            high = np.zeros(nv)
            high[offset : offset + zz] = block
            rows.append(high)
            rhs.append(ax.hi - (0.0 if offset == 0 else width))
    eq = np.zeros((4, nv))
    eq_rhs = np.zeros(4)
    eq[0, :z_u] = [1.0] + [0.0] * (z_u - 1)
    eq_rhs[0] = spec.agents[low_agent].start.axes[i].hi
    eq[1, :z_u] = [t_c**p for p in range(z_u)]
    eq_rhs[1] = spec.agents[low_agent].goal.axes[i].hi
    eq[2, z_u : z_u + z_l] = [1.0] + [0.0] * (z_l - 1)
    eq_rhs[2] = spec.agents[high_agent].start.axes[i].lo
    eq[3, z_u : z_u + z_l] = [t_c**p for p in range(z_l)]
    eq_rhs[3] = spec.agents[high_agent].goal.axes[i].lo
    obj = np.zeros(nv)
    obj[-1] = 1.0
    sol = solve_lp(
        LpProblem(
            objective=obj,
            ineq_matrix=np.array(rows),
            ineq_rhs=np.array(rhs),
            eq_matrix=eq,
            eq_rhs=eq_rhs,
        )
    )
    return sol.objective_value if sol.status == "optimal" else float("inf")


def _stuck_window_candidates(instance, assignment, faces):
    """Alternative witnesses for disjunction groups the local geometry
    cannot improve (the tube straddles what it must avoid, so every
    per-sample flip looks equally bad at the current solution).

    For each stuck (agent, region) or (agent, agent) group the conflicted
    time window is re-witnessed uniformly; options are ranked by the
    slack a single face could achieve for them in isolation.
    """
    out = []
    groups: dict[tuple[int, int], list[int]] = {}
    stuck: dict[tuple[int, int], bool] = {}
    for (j, r, r_idx), choice in assignment.unsafe.items():
        _, _, best_v = _best_unsafe_choice(instance, faces, j, r, r_idx)
        if best_v > -0.05:
            groups.setdefault((j, r), []).append(r_idx)
            if best_v > -1e-9:
                stuck[(j, r)] = True
    for (j, r), window in sorted(groups.items()):
        if not stuck.get((j, r)):
            continue
        options = []
        for i in range(instance.n):
            for side in ("above", "below"):
                score = _score_unsafe_option(instance, j, r, window, i, side)
                if score < float("inf"):
                    options.append((score, i, side))
        options.sort()
        if options:
            out.append(("unsafe", (j, r), sorted(window), options[:2]))
    cgroups: dict[tuple[int, int], list[int]] = {}
    cstuck: dict[tuple[int, int], bool] = {}
    for (j, k, r_idx), choice in assignment.collision.items():
        _, _, best_v = _best_collision_choice(instance, faces, j, k, r_idx)
        if best_v > -0.05:
            cgroups.setdefault((j, k), []).append(r_idx)
            if best_v > -1e-9:
                cstuck[(j, k)] = True
    for (j, k), window in sorted(cgroups.items()):
        if not cstuck.get((j, k)):
            continue
        options = []
        for i in range(instance.n):
            for order in ("jk", "kj"):
                score = _score_collision_option(instance, j, k, window, i, order)
                if score < float("inf"):
                    options.append((score, i, order))
        options.sort()
        if options:
            out.append(("coll", (j, k), sorted(window), options[:2]))
    return out


def _boundary_shift_candidates(instance, assignment, failure):
    """Move binding witness handoffs.

    Where the separating dimension changes over time, the flip rule
    settles the boundary exactly at the gap crossover of the current
    solution, which pins the slack at zero: both witnesses are active
    with no margin at adjacent samples.  Shifting the handoff makes one
    witness take over while the other still has slack, letting the
    re-solve buy margin.  Both directions and two scales are proposed.
    """
    n_t = instance.n_t

    def boundaries(table, keys):
        found = set()
        for key in keys:
            head, r = key[:-1], key[-1]
            for rr in range(max(0, r - 3), min(n_t - 1, r + 3)):
                a = table.get(head + (rr,))
                b = table.get(head + (rr + 1,))
                if a is not None and b is not None and a != b:
                    found.add((head, rr, a, b))
        return sorted(found)

    coll_b = boundaries(assignment.collision, failure.binding_collision)
    unsafe_b = boundaries(assignment.unsafe, failure.binding_unsafe)
    if not coll_b and not unsafe_b:
        return []
    out = []
    for direction in ("left", "right"):
        for scale in (max(2, n_t // 40), max(4, n_t // 12)):
            cand = assignment.copy()
            changed = False
            for table, blist in ((cand.collision, coll_b), (cand.unsafe, unsafe_b)):
                for head, rr, a, b in blist:
                    if direction == "left":
                        span = range(max(0, rr - scale + 1), rr + 1)
                        choice = b
                    else:
                        span = range(rr + 1, min(n_t, rr + 1 + scale))
                        choice = a
                    for q in span:
                        if table.get(head + (q,)) != choice:
                            table[head + (q,)] = choice
                            changed = True
            if changed:
                out.append(cand)
    return out


def refine_assignment(
    instance: SopInstance,
    assignment: DisjunctAssignment,
    failure: SolveDiagnostics,
    beam_width: int = 8,
) -> DisjunctAssignment:
    """One local-search step over disjunction witnesses.

    Candidates, scored by re-solving: uniform re-witnessings of stuck
    conflict windows, handoff-boundary shifts around binding rows,
    per-row flips to the geometrically best witness at the current
    solution (whole set, then shrinking prefixes of the worst rows).
    Up to ``beam_width`` candidates are solved and the best assignment
    returned.  Deterministic given its inputs.
    """
    if failure.tubes is None or failure.x is None:
        raise ValueError("refinement needs diagnostics from a previous solve")
    faces = instance.face_values(failure.x)
    etas = {
        (j, i): failure.x[instance.eta_offset[(j, i)]]
        for j in range(instance.m)
        for i in range(instance.n)
    }
    unsafe_vals, coll_vals = _assignment_row_values(instance, assignment, faces, etas)

    flips = []
    for key, (i_cur, side_cur) in assignment.unsafe.items():
        i, side, _ = _best_unsafe_choice(instance, faces, key[0], key[1], key[2])
        if (i, side) != (i_cur, side_cur):
            flips.append((unsafe_vals[key], "unsafe", key, (i, side)))
    for key, (i_cur, order_cur) in assignment.collision.items():
        i, order, _ = _best_collision_choice(instance, faces, key[0], key[1], key[2])
        if (i, order) != (i_cur, order_cur):
            flips.append((coll_vals[key], "coll", key, (i, order)))
    flips.sort(key=lambda f: (-f[0], f[1], f[2]))

    def apply_flips(base, flip_list):
        cand = base.copy()
        for _, kind, key, choice in flip_list:
            if kind == "unsafe":
                cand.unsafe[key] = choice
            else:
                cand.collision[key] = choice
        return cand

    candidates: list[DisjunctAssignment] = []
    windows = _stuck_window_candidates(instance, assignment, faces)
    if windows:
        # Primary escape: best-ranked option applied to every stuck window
        # at once (on top of the geometric per-row flips), then the
        # second-ranked variations one window at a time.
        base = apply_flips(assignment, flips)
        combo = base.copy()
        for kind, group, window, options in windows:
            _, i, choice = options[0]
            for r_idx in window:
                if kind == "unsafe":
                    combo.unsafe[(group[0], group[1], r_idx)] = (i, choice)
                else:
                    combo.collision[(group[0], group[1], r_idx)] = (i, choice)
        candidates.append(combo)
        for g_idx, (kind, group, window, options) in enumerate(windows):
            if len(options) < 2:
                continue
            variant = combo.copy()
            _, i, choice = options[1]
            for r_idx in window:
                if kind == "unsafe":
                    variant.unsafe[(group[0], group[1], r_idx)] = (i, choice)
                else:
                    variant.collision[(group[0], group[1], r_idx)] = (i, choice)
            candidates.append(variant)
    candidates.extend(_boundary_shift_candidates(instance, assignment, failure))
    if flips:
        sizes = []
        size = len(flips)
        while size >= 1 and len(sizes) + len(candidates) < beam_width:
            sizes.append(size)
            size //= 2
        for sz in sizes:
            candidates.append(apply_flips(assignment, flips[:sz]))
    if not candidates:
        return assignment

    best = None
    for cand in candidates[:beam_width]:
        diag = SolveDiagnostics()
        try:
            _, eta = solve_sop(instance, cand, diag, warm_keys=failure.active_keys)
        except (SynthesisInfeasible, LpNumericalError):
            continue
        if best is None or eta < best[0]:
            best = (eta, cand)
    return best[1] if best is not None else assignment


# ---------------------------------------------------------------------------
# Certification


@dataclass(frozen=True)
class SynthesisCertificate:
    """Sampled-to-robust margin: eta + L * epsilon must be nonpositive."""

    eta_star: float
    lipschitz_lower: float
    lipschitz_upper: float
    lipschitz_composite: float
    epsilon: float
    margin: float
    passed: bool
    lipschitz_source: str = "analytic"

    def to_dict(self) -> dict:
        return {
            "eta_star": self.eta_star,
            "L_L": self.lipschitz_lower,
            "L_U": self.lipschitz_upper,
            "L": self.lipschitz_composite,
            "epsilon": self.epsilon,
            "margin": self.margin,
            "passed": self.passed,
            "lipschitz_source": self.lipschitz_source,
        }


def composite_lipschitz(l_lower: float, l_upper: float) -> float:
    return max(
        l_lower, l_upper, l_lower + l_upper, l_lower + 1.0, l_upper + 1.0
    )


def certify(
    eta_star: float,
    tubes: TubeSet,
    epsilon: float,
    lipschitz_source: str = "analytic",
    slope_cfg=None,
) -> SynthesisCertificate:
    """Evaluate the sampled-to-robust condition for a solved tube set."""
    if lipschitz_source == "analytic":
        l_lower, l_upper = slope_bounds(tubes)
    elif lipschitz_source == "estimated":
        from .lipschitz import SlopeSampleConfig, estimate_L

        cfg = slope_cfg or SlopeSampleConfig(alpha=tubes.horizon / 1000.0)
        l_lower, l_upper = estimate_L(tubes, cfg)
    else:
        raise ValueError(f"unknown lipschitz source {lipschitz_source!r}")
    l_comp = composite_lipschitz(l_lower, l_upper)
    margin = eta_star + l_comp * epsilon
    return SynthesisCertificate(
        eta_star=eta_star,
        lipschitz_lower=l_lower,
        lipschitz_upper=l_upper,
        lipschitz_composite=l_comp,
        epsilon=epsilon,
        margin=margin,
        passed=margin <= 0.0,
        lipschitz_source=lipschitz_source,
    )


def save_certificate(cert: SynthesisCertificate, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cert.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Dense validation oracle


@dataclass
class FamilyResult:
    name: str
    worst_margin: float
    passed: bool
    where: str = ""


@dataclass
class ValidationReport:
    families: dict[str, FamilyResult]
    resolution: float
    tolerance: float
    endpoint_equality_residual: float = float("nan")

    @property
    def all_pass(self) -> bool:
        return all(f.passed for f in self.families.values())

    def summary(self) -> str:
        lines = []
        for f in self.families.values():
            status = "pass" if f.passed else "FAIL"
            lines.append(
                f"  {f.name:<10} worst margin {f.worst_margin:+.6f}  {status}"
                + (f"  ({f.where})" if f.where else "")
            )
        return "\n".join(lines)


def validate_tubes(
    tubes: TubeSet,
    spec: ScenarioSpec,
    resolution: float,
    tolerance: float = 0.0,
) -> ValidationReport:
    """Dense-grid ground-truth check of every constraint family.

    Endpoint containment uses the task's own boxes (outward violations
    count; the exact equality residual is reported separately).  A family
    passes when its worst margin is at most the tolerance.
    """
    n_grid = int(math.ceil(spec.horizon / resolution)) + 1
    grid = np.linspace(0.0, spec.horizon, n_grid)
    faces = {
        (j, i, side): eval_face_array(face, grid)
        for j, i, side, face in tubes.faces()
    }
    m, n = tubes.agent_count, tubes.dims

    # endpoints: containment of the tube box in the start/goal boxes
    worst_ep = -np.inf
    where_ep = ""
    eq_resid = 0.0
    for j, task in enumerate(spec.agents):
        for i in range(n):
            lo0, loc = faces[(j, i, "lower")][0], faces[(j, i, "lower")][-1]
            hi0, hic = faces[(j, i, "upper")][0], faces[(j, i, "upper")][-1]
            s, g = task.start.axes[i], task.goal.axes[i]
            eq_resid = max(
                eq_resid,
                abs(lo0 - s.lo), abs(hi0 - s.hi), abs(loc - g.lo), abs(hic - g.hi),
            )
            for v, name in (
                (s.lo - lo0, f"agent {j + 1} dim {i + 1} start lower"),
                (hi0 - s.hi, f"agent {j + 1} dim {i + 1} start upper"),
                (g.lo - loc, f"agent {j + 1} dim {i + 1} goal lower"),
                (hic - g.hi, f"agent {j + 1} dim {i + 1} goal upper"),
            ):
                if v > worst_ep:
                    worst_ep, where_ep = v, name
    families = {
        "endpoints": FamilyResult(
            "endpoints", float(worst_ep), worst_ep <= tolerance, where_ep
        )
    }

    # arena confinement
    worst_ar, where_ar = -np.inf, ""
    for j in range(m):
        for i in range(n):
            ax = spec.arena.axes[i]
            for side in ("lower", "upper"):
                vals = faces[(j, i, side)]
                lo_v = float((ax.lo - vals).max())
                hi_v = float((vals - ax.hi).max())
                for v, tag in ((lo_v, "below"), (hi_v, "above")):
                    if v > worst_ar:
                        worst_ar = v
                        where_ar = f"agent {j + 1} dim {i + 1} {side} face {tag} arena"
    families["arena"] = FamilyResult(
        "arena", worst_ar, worst_ar <= tolerance, where_ar
    )

    # width
    worst_w, where_w = -np.inf, ""
    for j, agent in enumerate(tubes.agents):
        for i, d in enumerate(agent.dims):
            gap = faces[(j, i, "lower")] + d.min_width - faces[(j, i, "upper")]
            v = float(gap.max())
            if v > worst_w:
                worst_w = v
                where_w = f"agent {j + 1} dim {i + 1} at t={grid[int(gap.argmax())]:.3f}"
    families["width"] = FamilyResult("width", worst_w, worst_w <= tolerance, where_w)

    # unsafe separation: exists a dim whose faces clear the obstacle box
    worst_u, where_u = -np.inf, ""
    if spec.obstacles:
        for r, region in enumerate(spec.obstacles):
            bounds = np.array(
                [unsafe_box_at(region, float(t), spec.horizon).to_bounds() for t in grid]
            )  # (grid, n, 2)
            for j in range(m):
                best = np.full(len(grid), np.inf)
                for i in range(n):
                    above = bounds[:, i, 1] - faces[(j, i, "lower")]
                    below = faces[(j, i, "upper")] - bounds[:, i, 0]
                    best = np.minimum(best, np.minimum(above, below))
                v = float(best.max())
                if v > worst_u:
                    worst_u = v
                    where_u = (
                        f"agent {j + 1} vs region {r + 1} at "
                        f"t={grid[int(best.argmax())]:.3f}"
                    )
    else:
        worst_u, where_u = -np.inf, "no obstacles"
    families["unsafe"] = FamilyResult(
        "unsafe", worst_u, worst_u <= tolerance, where_u
    )

    # collision separation per pair
    worst_c, where_c = -np.inf, ""
    for j in range(m):
        for k in range(j + 1, m):
            best = np.full(len(grid), np.inf)
            for i in range(n):
                jk = faces[(j, i, "upper")] - faces[(k, i, "lower")]
                kj = faces[(k, i, "upper")] - faces[(j, i, "lower")]
                best = np.minimum(best, np.minimum(jk, kj))
            v = float(best.max())
            if v > worst_c:
                worst_c = v
                where_c = f"pair ({j + 1},{k + 1}) at t={grid[int(best.argmax())]:.3f}"
    if m < 2:
        worst_c, where_c = -np.inf, "single agent"
    families["collision"] = FamilyResult(
        "collision", worst_c, worst_c <= tolerance, where_c
    )

    return ValidationReport(
        families=families,
        resolution=resolution,
        tolerance=tolerance,
        endpoint_equality_residual=eq_resid,
    )


# ---------------------------------------------------------------------------
# Top-level driver


@dataclass
class SynthesisResult:
    tubes: TubeSet
    certificate: SynthesisCertificate
    assignment: DisjunctAssignment
    iterations: int
    lp_solves: int
    wall_time: float
    validation: ValidationReport


def synthesize(
    spec: ScenarioSpec,
    degree_override: int | None = None,
    max_iterations: int = 200,
    beam_width: int = 8,
    lipschitz_source: str = "analytic",
) -> SynthesisResult:
    """Full pipeline: sample, seed, solve, refine until certified.

    Raises SynthesisFailure with the best margin found when the
    refinement budget runs out.
    """
    t0 = time.perf_counter()
    samples = sample_unsafe(spec)
    template = TubeTemplate.from_spec(spec, degree_override)
    instance = build_sop(spec, samples, template)
    assignment = seed_assignment(spec, samples)

    best_margin = float("inf")
    lp_solves = 0
    warm: tuple = ()
    since_improved = 0
    for iteration in range(1, max_iterations + 1):
        diag = SolveDiagnostics()
        tubes, eta = solve_sop(instance, assignment, diag, warm_keys=warm)
        warm = diag.active_keys
        lp_solves += diag.lp_solves
        cert = certify(eta, tubes, spec.epsilon, lipschitz_source)
        if cert.margin < best_margin - 1e-12:
            best_margin = cert.margin
            since_improved = 0
        else:
            since_improved += 1
        if cert.passed:
            report = validate_tubes(
                tubes, spec, resolution=spec.epsilon / 4.0, tolerance=1e-4
            )
            return SynthesisResult(
                tubes=tubes,
                certificate=cert,
                assignment=assignment,
                iterations=iteration,
                lp_solves=lp_solves,
                wall_time=time.perf_counter() - t0,
                validation=report,
            )
        refined = refine_assignment(instance, assignment, diag, beam_width)
        if refined is assignment or since_improved >= 6:
            raise SynthesisFailure(
                "assignment search stalled without certification "
                f"(best margin {best_margin:.6f}); a higher-degree polynomial "
                "may be required",
                best_margin,
            )
        assignment = refined
    raise SynthesisFailure(
        f"refinement budget exhausted (best margin {best_margin:.6f}); "
        "a higher-degree polynomial may be required",
        best_margin,
    )
