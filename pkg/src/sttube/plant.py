"""Simulation-side ground-truth dynamics and disturbance injection.

The controller never sees anything in this module.  Plants follow the
control-affine pure-feedback chain: stage i is driven by stage i+1's
state, the last stage by the input, each with additive bounded
disturbance.  Two case-study plants are built in:

* ``omnidirectional``: planar robot pose, input rotated by the heading
  (single stage, 3 outputs); the input-gain symmetric part has minimum
  eigenvalue cos(heading), positive while |heading| < pi/2.
* ``drone_chain``: position driven by velocity, velocity by the input
  (two integrator stages, 3 outputs each).

Custom plants supply per-stage f_i / g_i callables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .scenario import PlantConfig


class PlantStateError(RuntimeError):
    """Non-finite state encountered; the simulation must abort."""


@dataclass(frozen=True)
class PlantModel:
    kind: str
    stages: int
    dims: int
    g_sign: str = "positive"
    heading_band: tuple[float, float] = (-math.pi / 3, math.pi / 3)
    f: tuple[Callable, ...] = ()
    g: tuple[Callable, ...] = ()

    @property
    def state_dim(self) -> int:
        return self.stages * self.dims

    @property
    def g_negative_definite(self) -> bool:
        return self.g_sign == "negative"


def make_plant(cfg: PlantConfig, scenario_dims: int) -> PlantModel:
    if cfg.kind == "omnidirectional":
        if scenario_dims != 2:
            raise ValueError("omnidirectional plant expects a 2-D scenario")
        return PlantModel(
            kind="omnidirectional",
            stages=1,
            dims=3,
            g_sign=cfg.g_sign,
            heading_band=tuple(cfg.heading_band),
        )
    if cfg.kind == "drone_chain":
        if scenario_dims != 3:
            raise ValueError("drone chain expects a 3-D scenario")
        return PlantModel(kind="drone_chain", stages=2, dims=3, g_sign=cfg.g_sign)
    raise ValueError(f"unknown plant kind {cfg.kind!r}")


def make_custom_plant(
    stages: int, dims: int, f: Sequence[Callable], g: Sequence[Callable],
    g_sign: str = "positive",
) -> PlantModel:
    if len(f) != stages or len(g) != stages:
        raise ValueError("need one f and one g per stage")
    return PlantModel(
        kind="custom", stages=stages, dims=dims, g_sign=g_sign,
        f=tuple(f), g=tuple(g),
    )


def dynamics(model: PlantModel, state, u, w, t: float) -> tuple[float, ...]:
    """State derivative for the stacked state under input u and disturbance w.

    ``state`` and ``w`` are flat, length stages * dims; ``u`` has length
    dims.  Raises PlantStateError on non-finite state.
    """
    if not all(math.isfinite(v) for v in state):
        raise PlantStateError(f"non-finite state at t={t:.6g}: {state}")
    if model.kind == "omnidirectional":
        c, s = math.cos(state[2]), math.sin(state[2])
        return (
            c * u[0] - s * u[1] + w[0],
            s * u[0] + c * u[1] + w[1],
            u[2] + w[2],
        )
    if model.kind == "drone_chain":
        return (
            state[3] + w[0],
            state[4] + w[1],
            state[5] + w[2],
            u[0] + w[3],
            u[1] + w[4],
            u[2] + w[5],
        )
    # Generic pure-feedback chain.
    n = model.dims
    out = []
    for i in range(model.stages):
        xbar = np.asarray(state[: (i + 1) * n], dtype=float)
        drive = (
            np.asarray(u, dtype=float)
            if i == model.stages - 1
            else np.asarray(state[(i + 1) * n : (i + 2) * n], dtype=float)
        )
        fx = np.asarray(model.f[i](xbar), dtype=float)
        gx = np.asarray(model.g[i](xbar), dtype=float)
        dx = fx + gx @ drive + np.asarray(w[i * n : (i + 1) * n], dtype=float)
        out.extend(float(v) for v in dx)
    return tuple(out)


def omni_gain_min_eigenvalue(heading: float) -> float:
    """Smallest eigenvalue of the omnidirectional input-gain symmetric part.

    The rotation block symmetrizes to diag(cos, cos, 1), so the minimum
    over the planar dims is cos(heading); positive iff |heading| < pi/2.
    """
    return min(math.cos(heading), 1.0)


@dataclass(frozen=True)
class Disturbance:
    """Bounded per-component disturbance, sampled once per step (zero-order hold)."""

    bound: float
    kind: str = "uniform"  # zero | uniform | sinusoidal
    seed: int = 0
    frequency: float = 1.0

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("disturbance bound must be nonnegative")
        if self.kind not in ("zero", "uniform", "sinusoidal"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    def make_sampler(self, agent: int, size: int) -> Callable[[float], tuple[float, ...]]:
        """Per-agent sampler: call once per step with the step's start time."""
        if self.kind == "zero" or self.bound == 0.0:
            zeros = (0.0,) * size
            return lambda t: zeros
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(agent,))
        )
        if self.kind == "uniform":
            bound = self.bound

            def uniform_sampler(t: float) -> tuple[float, ...]:
                return tuple(rng.uniform(-bound, bound, size))

            return uniform_sampler
        phases = rng.uniform(0.0, 2.0 * math.pi, size)
        bound, freq = self.bound, self.frequency

        def sin_sampler(t: float) -> tuple[float, ...]:
            return tuple(bound * math.sin(freq * t + ph) for ph in phases)

        return sin_sampler

    @staticmethod
    def from_config(cfg: PlantConfig) -> "Disturbance":
        return Disturbance(
            bound=cfg.disturbance_bound,
            kind=cfg.disturbance_kind,
            seed=cfg.disturbance_seed,
        )
