"""Poisson obstacle configurations in a ball, and the hard-core separation filter.

Obstacle centers form a homogeneous Poisson point process restricted to a
bounded sampling ball.  Configurations can be screened by the minimum
pairwise separation ``3 * eps`` inside a region of interest, and single
phase-space points can be tested for occupancy (distance at least ``eps``
from every center, boundary inclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .streams import block_generator, block_spans, map_blocks

# Stream ids keep nested estimators from reusing each other's randomness.
_STREAM_EXCLUSION = 11


class ResourceLimitError(RuntimeError):
    """Requested expected point count exceeds the configured cap."""


def unit_ball_volume(dim: int) -> float:
    """Lebesgue volume of the unit ball in ``dim`` dimensions."""
    if dim < 0:
        raise ValueError(f"dim must be >= 0, got {dim}")
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


def ball_volume(dim: int, radius: float) -> float:
    return unit_ball_volume(dim) * radius**dim


@dataclass(frozen=True)
class PointConfiguration:
    """A sampled set of obstacle centers inside the ball B(0, sample_radius).

    Center order is the sampling order; the obstacle id used throughout the
    package is the row index into ``centers``.
    """

    dim: int
    centers: np.ndarray  # shape (n, dim)
    sample_radius: float
    intensity: float

    def __post_init__(self) -> None:
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 2 or centers.shape[1] != self.dim:
            raise ValueError(
                f"centers must have shape (n, {self.dim}), got {centers.shape}"
            )
        object.__setattr__(self, "centers", centers)

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]


def sample_configuration(
    dim: int,
    intensity: float,
    radius: float,
    rng: np.random.Generator,
    max_expected_count: float = 5e7,
) -> PointConfiguration:
    """Draw one Poisson configuration in the ball B(0, radius).

    The point count is Poisson with mean ``intensity * |B(0, radius)|``;
    given the count, centers are independent and uniform in the ball.

    Args:
        dim: Spatial dimension, 2 or 3.
        intensity: Expected number of centers per unit volume (>= 0).
        radius: Sampling ball radius (> 0).
        rng: Source of randomness.
        max_expected_count: Cap on the expected count, guards runaway inputs.

    Raises:
        ValueError: Non-finite or out-of-range parameters.
        ResourceLimitError: Expected count above ``max_expected_count``.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if not math.isfinite(intensity) or intensity < 0:
        raise ValueError(f"intensity must be finite and >= 0, got {intensity}")
    if not math.isfinite(radius) or radius <= 0:
        raise ValueError(f"radius must be finite and > 0, got {radius}")

    mean_count = intensity * ball_volume(dim, radius)
    if mean_count > max_expected_count:
        raise ResourceLimitError(
            f"expected count {mean_count:.3g} exceeds cap {max_expected_count:.3g}"
        )

    n = int(rng.poisson(mean_count))
    directions = rng.standard_normal((n, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    # A standard normal vector is never exactly 0 in practice; guard anyway.
    np.maximum(norms, 1e-300, out=norms)
    radii = radius * rng.random(n) ** (1.0 / dim)
    centers = directions / norms * radii[:, None]
    return PointConfiguration(dim=dim, centers=centers, sample_radius=radius, intensity=intensity)


def min_separation_ok(config: PointConfiguration, eps: float, region_radius: float) -> bool:
    """True iff all center pairs inside B(0, region_radius) are more than 3*eps apart.

    Pairs with either center outside the region are ignored; the inequality
    is strict, so a pair at distance exactly ``3 * eps`` fails.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    pts = config.centers
    if pts.shape[0] < 2:
        return True
    inside = pts[np.einsum("ij,ij->i", pts, pts) <= region_radius**2]
    if inside.shape[0] < 2:
        return True
    tree = cKDTree(inside, balanced_tree=False, compact_nodes=False)
    return tree.query_pairs(3.0 * eps, output_type="ndarray").shape[0] == 0


def occupancy_indicator(x: np.ndarray, config: PointConfiguration, eps: float, grid=None) -> int:
    """1 if ``x`` is at distance >= eps from every center, else 0.

    The boundary counts as free: a point at distance exactly ``eps`` from a
    center gets indicator 1.  When a spatial ``grid`` (see billiard.build_grid)
    is supplied only the obstacles near ``x`` are scanned.
    """
    x = np.asarray(x, dtype=float)
    centers = config.centers
    if grid is not None:
        ids = grid.candidates_near_point(x)
        if ids.size == 0:
            return 1
        centers = centers[ids]
    elif centers.shape[0] == 0:
        return 1
    delta = centers - x
    # Coordinate-wise sum: bit-identical whether scanning all obstacles or a
    # grid cell's subset (reduction kernels may differ by array length).
    d2 = delta[:, 0] * delta[:, 0] + delta[:, 1] * delta[:, 1]
    if config.dim == 3:
        d2 = d2 + delta[:, 2] * delta[:, 2]
    return int(d2.min() >= eps * eps)


def estimate_exclusion_probability(
    dim: int,
    eps: float,
    intensity: float,
    region_radius: float,
    n_samples: int,
    seed: int,
    n_threads: int = 1,
    sample_slack: float | None = None,
) -> tuple[float, float]:
    """Monte Carlo probability that a configuration fails the separation filter.

    Configurations are sampled in B(0, region_radius + slack) and screened by
    ``min_separation_ok`` on B(0, region_radius).  Returns the failure
    frequency and its binomial standard error.  Deterministic for a given
    ``(seed, parameters)`` independent of ``n_threads``.
    """
    if n_samples < 100:
        raise ValueError(f"n_samples must be >= 100, got {n_samples}")
    slack = 2.0 * eps if sample_slack is None else sample_slack
    rho = region_radius + slack

    def worker(block: int, start: int, stop: int) -> int:
        rng = block_generator(seed, _STREAM_EXCLUSION, block)
        fails = 0
        for _ in range(stop - start):
            config = sample_configuration(dim, intensity, rho, rng)
            if not min_separation_ok(config, eps, region_radius):
                fails += 1
        return fails

    counts = map_blocks(block_spans(n_samples), worker, n_threads)
    p = float(sum(counts)) / n_samples
    stderr = math.sqrt(p * (1.0 - p) / n_samples)
    return p, stderr
