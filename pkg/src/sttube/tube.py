"""Polynomial tube faces, their derivatives, and analytic slope bounds.

A tube face is a monomial-basis polynomial of time,
``gamma(t) = c0 + c1 t + ... + c_{z-1} t^{z-1}``.  A TubeSet holds, per
agent and per output dimension, a lower and an upper face plus the
required minimum separation between them.  All operations are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Box, Interval


class TubeIntegrityError(ValueError):
    """A tube set violates its own width invariant."""


@dataclass(frozen=True)
class TubeFace:
    """One polynomial boundary curve, ``side`` in {"lower", "upper"}."""

    coeffs: tuple[float, ...]
    side: str = "lower"

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("a tube face needs at least one coefficient")
        if self.side not in ("lower", "upper"):
            raise ValueError(f"unknown face side {self.side!r}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1


def eval_face(face: TubeFace, t: float) -> float:
    """Horner evaluation of the face polynomial at time ``t``."""
    acc = 0.0
    for c in reversed(face.coeffs):
        acc = acc * t + c
    return acc


def derivative_coeffs(coeffs) -> tuple[float, ...]:
    if len(coeffs) == 1:
        return (0.0,)
    return tuple(k * c for k, c in enumerate(coeffs) if k >= 1)


def eval_face_derivative(face: TubeFace, t: float) -> float:
    """Exact time derivative of the face polynomial at ``t``."""
    acc = 0.0
    for c in reversed(derivative_coeffs(face.coeffs)):
        acc = acc * t + c
    return acc


def eval_face_array(face: TubeFace, times: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(times, np.asarray(face.coeffs))


def analytic_slope_bound(
    face: TubeFace, horizon: tuple[float, float], grid_points: int = 10_000
) -> float:
    """max over the horizon of |d gamma / dt|.

    For degree <= 3 the derivative's extrema are located exactly from the
    roots of the second derivative.  Higher degrees fall back to a dense
    grid with an over-approximation margin of max|gamma''| * (spacing/2)
    added, so the returned value is always an upper bound.
    """
    t0, t1 = horizon
    dcoeffs = derivative_coeffs(face.coeffs)
    if len(dcoeffs) == 1:
        return abs(dcoeffs[0])
    if face.degree <= 3:
        # gamma'' has degree <= 1: its real roots are exact.
        candidates = [t0, t1]
        ddcoeffs = derivative_coeffs(dcoeffs)
        if len(ddcoeffs) == 1:
            if ddcoeffs[0] != 0.0:
                pass  # linear derivative, extrema at endpoints only
        else:
            roots = np.polynomial.polynomial.polyroots(np.asarray(ddcoeffs))
            for r in roots:
                if abs(r.imag) < 1e-12 and t0 <= r.real <= t1:
                    candidates.append(float(r.real))
        dpoly = np.asarray(dcoeffs)
        return float(
            max(abs(np.polynomial.polynomial.polyval(t, dpoly)) for t in candidates)
        )
    grid = np.linspace(t0, t1, grid_points)
    dpoly = np.asarray(dcoeffs)
    ddpoly = np.asarray(derivative_coeffs(dcoeffs))
    dvals = np.abs(np.polynomial.polynomial.polyval(grid, dpoly))
    curvature = float(np.max(np.abs(np.polynomial.polynomial.polyval(grid, ddpoly))))
    spacing = (t1 - t0) / (grid_points - 1)
    return float(np.max(dvals)) + 0.5 * curvature * spacing


@dataclass(frozen=True)
class TubeDim:
    lower: TubeFace
    upper: TubeFace
    min_width: float


@dataclass(frozen=True)
class AgentTubes:
    dims: tuple[TubeDim, ...]
    name: str = ""


@dataclass(frozen=True)
class TubeSet:
    """Per-agent, per-dimension tube faces over a common horizon."""

    horizon: float
    agents: tuple[AgentTubes, ...]

    @property
    def agent_count(self) -> int:
        return len(self.agents)

    @property
    def dims(self) -> int:
        return len(self.agents[0].dims)

    def faces(self):
        """Iterate (agent_idx, dim_idx, side, face) over all faces."""
        for j, agent in enumerate(self.agents):
            for i, d in enumerate(agent.dims):
                yield j, i, "lower", d.lower
                yield j, i, "upper", d.upper


def tube_box_at(tubes: TubeSet, agent: int, t: float) -> Box:
    """Per-dimension interval [lower(t), upper(t)] for one agent.

    Raises TubeIntegrityError when a face pair is inverted or closer than
    the declared minimum width, naming agent, dim, and t.
    """
    axes = []
    for i, d in enumerate(tubes.agents[agent].dims):
        lo = eval_face(d.lower, t)
        hi = eval_face(d.upper, t)
        if hi - lo < d.min_width:
            raise TubeIntegrityError(
                f"agent {agent + 1} dim {i + 1} at t={t:g}: "
                f"width {hi - lo:.6g} below minimum {d.min_width:g}"
            )
        axes.append(Interval(lo, hi))
    return Box(tuple(axes))


def slope_bounds(tubes: TubeSet) -> tuple[float, float]:
    """(L_lower, L_upper): analytic slope bounds over all faces per side."""
    span = (0.0, tubes.horizon)
    ll = max(
        analytic_slope_bound(d.lower, span) for a in tubes.agents for d in a.dims
    )
    lu = max(
        analytic_slope_bound(d.upper, span) for a in tubes.agents for d in a.dims
    )
    return ll, lu


# ---------------------------------------------------------------------------
# Serialization (coefficients full precision)


def tubes_to_dict(tubes: TubeSet) -> dict:
    return {
        "horizon": tubes.horizon,
        "dims": tubes.dims,
        "agents": [
            {
                "name": a.name,
                "dims": [
                    {
                        "lower": list(d.lower.coeffs),
                        "upper": list(d.upper.coeffs),
                        "min_width": d.min_width,
                    }
                    for d in a.dims
                ],
            }
            for a in tubes.agents
        ],
    }


def tubes_from_dict(raw: dict) -> TubeSet:
    agents = []
    for a in raw["agents"]:
        dims = tuple(
            TubeDim(
                lower=TubeFace(tuple(float(c) for c in d["lower"]), side="lower"),
                upper=TubeFace(tuple(float(c) for c in d["upper"]), side="upper"),
                min_width=float(d["min_width"]),
            )
            for d in a["dims"]
        )
        agents.append(AgentTubes(dims=dims, name=str(a.get("name", ""))))
    return TubeSet(horizon=float(raw["horizon"]), agents=tuple(agents))


def save_tubes(tubes: TubeSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tubes_to_dict(tubes), indent=2) + "\n")


def load_tubes(path: str | Path) -> TubeSet:
    return tubes_from_dict(json.loads(Path(path).read_text()))
