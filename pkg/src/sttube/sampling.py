"""Finite sample sets covering time and the augmented unsafe set.

The time grid places samples at spacing <= 2*epsilon so every t in
[0, t_c] lies within epsilon of a sample.  Box obstacles are never
sampled volumetrically: separating an axis-aligned tube box from an
axis-aligned obstacle box only ever needs the obstacle's per-dimension
extreme faces, so per time sample we record the interpolated box itself
(its two extreme corners carry all 2n face values).  This reduction is
exact, which is what keeps small epsilon tractable.

Point-cloud mode remains as the generic path for non-box unsafe sets:
a lattice inside each region, dense enough that radius-epsilon balls
around the samples cover the region jointly in (t, y).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Box, ScenarioSpec, unsafe_box_at


@dataclass(frozen=True)
class SampleSet:
    """Time samples plus per-sample unsafe-set data.

    ``unsafe_boxes[r]`` holds, for time sample r, the list of
    (region_index, box_at_t_r) pairs (exact face reduction).
    ``unsafe_points`` holds generic (t, y, region) cloud samples; empty
    when every region is handled by the box reduction.
    """

    epsilon: float
    time_samples: np.ndarray
    unsafe_boxes: tuple[tuple[tuple[int, Box], ...], ...] = ()
    unsafe_points: tuple[tuple[float, tuple[float, ...], int], ...] = ()
    degenerate: bool = False

    @property
    def count(self) -> int:
        return len(self.time_samples)


def sample_time_grid(t_c: float, epsilon: float) -> np.ndarray:
    """Uniform grid over [0, t_c] with spacing <= 2*epsilon.

    N_t = ceil(t_c / (2 epsilon)) + 1.  When epsilon >= t_c a single
    midpoint sample already covers the horizon; that degenerate grid is
    returned with a warning.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if epsilon >= t_c:
        warnings.warn(
            f"epsilon {epsilon:g} >= horizon {t_c:g}: "
            "degenerate single-sample grid",
            stacklevel=2,
        )
        return np.array([0.5 * t_c])
    n_t = math.ceil(t_c / (2.0 * epsilon)) + 1
    return np.linspace(0.0, t_c, n_t)


def _lattice(box: Box, spacing: float) -> np.ndarray:
    """Axis-aligned lattice inside the box with per-axis step <= spacing."""
    axes = []
    for ax in box.axes:
        k = max(1, math.ceil(ax.width / spacing)) if ax.width > 0 else 1
        axes.append(np.linspace(ax.lo, ax.hi, k + 1) if ax.width > 0 else np.array([ax.lo]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_unsafe(spec: ScenarioSpec, mode: str = "faces") -> SampleSet:
    """Build the sample set for a scenario.

    mode="faces" (default): exact per-sample box faces for every region.
    mode="cloud": generic lattice samples; the joint (t, y) cover uses
    a denser time axis and lattice so that every unsafe point is within
    epsilon of a sample in the combined Euclidean norm.
    """
    eps = spec.epsilon
    times = sample_time_grid(spec.horizon, eps)
    degenerate = len(times) == 1 and eps >= spec.horizon
    if mode == "faces":
        boxes = tuple(
            tuple(
                (r, unsafe_box_at(region, float(t), spec.horizon))
                for r, region in enumerate(spec.obstacles)
            )
            for t in times
        )
        return SampleSet(
            epsilon=eps,
            time_samples=times,
            unsafe_boxes=boxes,
            degenerate=degenerate,
        )
    if mode != "cloud":
        raise ValueError(f"unknown sampling mode {mode!r}")
    # Joint cover: split the epsilon budget evenly between the time and
    # space axes, so sqrt(eps_t^2 + eps_s^2) <= eps.
    eps_t = eps / math.sqrt(2.0)
    eps_s = eps / math.sqrt(2.0)
    cloud_times = sample_time_grid(spec.horizon, eps_t)
    points = []
    for t in cloud_times:
        for r, region in enumerate(spec.obstacles):
            box = unsafe_box_at(region, float(t), spec.horizon)
            # Cell diagonal <= 2*eps_s: per-axis step 2*eps_s/sqrt(n).
            step = 2.0 * eps_s / math.sqrt(spec.dims)
            for y in _lattice(box, step):
                points.append((float(t), tuple(float(v) for v in y), r))
    return SampleSet(
        epsilon=eps,
        time_samples=times,
        unsafe_points=tuple(points),
        degenerate=degenerate,
    )


def verify_cover(
    samples: SampleSet, spec: ScenarioSpec, grid_resolution: float
) -> tuple[bool, float]:
    """Dense-grid audit of the epsilon cover.

    Checks that every grid time over [0, t_c] is within epsilon of a time
    sample, and (cloud mode) that every point of a dense grid over
    [0, t_c] x U(t) is within epsilon of an unsafe sample.  Face mode
    instead re-derives each stored box and requires an exact match.
    Returns (ok, worst observed gap).
    """
    if grid_resolution >= samples.epsilon:
        raise ValueError("grid resolution must be finer than epsilon")
    eps = samples.epsilon
    n_grid = int(math.ceil(spec.horizon / grid_resolution)) + 1
    grid = np.linspace(0.0, spec.horizon, n_grid)
    ts = np.sort(np.asarray(samples.time_samples))
    idx = np.searchsorted(ts, grid)
    idx_lo = np.clip(idx - 1, 0, len(ts) - 1)
    idx_hi = np.clip(idx, 0, len(ts) - 1)
    time_gap = np.minimum(np.abs(grid - ts[idx_lo]), np.abs(grid - ts[idx_hi]))
    worst = float(time_gap.max())
    slack = eps * (1.0 + 1e-12) + 1e-15  # the worst gap can equal eps exactly
    ok = worst <= slack
    if samples.unsafe_boxes:
        for r_idx, t in enumerate(samples.time_samples):
            for r, box in samples.unsafe_boxes[r_idx]:
                truth = unsafe_box_at(spec.obstacles[r], float(t), spec.horizon)
                if box.to_bounds() != truth.to_bounds():
                    return False, worst
    if samples.unsafe_points:
        pts = np.array(
            [(t, *y) for t, y, _ in samples.unsafe_points], dtype=float
        )
        for t in grid:
            for region in spec.obstacles:
                box = unsafe_box_at(region, float(t), spec.horizon)
                probe = _lattice(box, grid_resolution * math.sqrt(spec.dims))
                aug = np.column_stack([np.full(len(probe), t), probe])
                # distance from each probe point to nearest sample
                d2 = ((aug[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
                gap = float(np.sqrt(d2.min(axis=1)).max())
                worst = max(worst, gap)
                ok = ok and gap <= slack
    return ok, worst


def export_samples_csv(samples: SampleSet, path: str | Path) -> None:
    """Audit dump: one row per sample, (t, y_1..y_n, region)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if samples.unsafe_boxes:
            writer.writerow(["t", "kind", "region", "bounds"])
            for r_idx, t in enumerate(samples.time_samples):
                if not samples.unsafe_boxes[r_idx]:
                    writer.writerow([repr(float(t)), "time", "", ""])
                    continue
                for r, box in samples.unsafe_boxes[r_idx]:
                    writer.writerow(
                        [repr(float(t)), "box-faces", r, box.to_bounds()]
                    )
        else:
            writer.writerow(["t", "kind", "region", "y"])
            for t in samples.time_samples:
                writer.writerow([repr(float(t)), "time", "", ""])
            for t, y, r in samples.unsafe_points:
                writer.writerow([repr(t), "point", r, list(y)])
