"""Exact billiard dynamics among fixed spherical obstacles.

A point particle moves at unit speed, reflecting specularly off spheres of
radius ``eps`` centered at the points of a :class:`~lorentzgas.poisson.PointConfiguration`.
First-collision queries can run either as a vectorized scan over all
obstacles or through a uniform spatial grid; both paths must agree, and the
tests enforce that they do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .poisson import PointConfiguration, occupancy_indicator

# Tangency and departure tolerances for the quadratic root finder.
# A discriminant at or below DISC_TOL counts as a miss: tangential hits are
# measure-zero and the reflection normal is ill-conditioned there.
DISC_TOL = 1e-14
# Minimum root accepted against the obstacle just reflected from; implements
# departure "+0" without re-hitting the current sphere at t=0.
SAME_OBSTACLE_MIN_TAU = 1e-12


class RunawayTrajectoryError(RuntimeError):
    """Collision count exceeded the configured cap (geometry bug guard)."""


class StartInsideObstacleError(ValueError):
    """A first-collision query started strictly inside an obstacle."""


@dataclass(frozen=True)
class PhasePoint:
    """Phase-space point (position, unit velocity)."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    def free_flight(self, t: float) -> "PhasePoint":
        """Advance by free transport: (x, v) -> (x + t v, v)."""
        return PhasePoint(self.x + t * self.v, self.v)


class Collision(NamedTuple):
    tau: float
    obstacle_id: int
    normal: np.ndarray  # inward unit normal at the hit point


@dataclass(frozen=True)
class TrajectoryResult:
    """Full record of one billiard trajectory over [0, t]."""

    endpoint: PhasePoint
    collision_times: np.ndarray
    obstacle_ids: np.ndarray
    n_collisions: int
    started_in_table: int
    recollision_free: int


class SpatialGrid:
    """Uniform cell grid mapping lattice coordinates to obstacle ids.

    Every obstacle id is registered in exactly the cells its closed ball of
    radius ``eps`` intersects, so any cell a query point or ray segment
    touches lists a superset of the obstacles it can hit there.
    """

    def __init__(self, cell_size: float, cells: dict[tuple[int, ...], np.ndarray],
                 dim: int, domain_radius: float, eps: float):
        self.cell_size = cell_size
        self.cells = cells
        self.dim = dim
        self.domain_radius = domain_radius
        self.eps = eps
        self._empty = np.empty(0, dtype=np.intp)

    def candidates_near_point(self, x: np.ndarray) -> np.ndarray:
        key = tuple(np.floor(np.asarray(x) / self.cell_size).astype(int))
        return self.cells.get(key, self._empty)

    def traverse(self, x: np.ndarray, v: np.ndarray, t_max: float):
        """Yield (candidate_ids, t_exit) for cells along x + t v, t in [0, t_max].

        Cells are visited in order of increasing entry time; ``t_exit`` is the
        time the ray leaves the yielded cell.
        """
        h = self.cell_size
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        ijk = np.floor(x / h).astype(int)
        step = np.sign(v).astype(int)
        with np.errstate(divide="ignore"):
            t_delta = np.where(v != 0.0, h / np.abs(v), np.inf)
            next_boundary = (ijk + (step > 0)) * h
            t_next = np.where(v != 0.0, (next_boundary - x) / v, np.inf)
        t_cur = 0.0
        while t_cur <= t_max:
            axis = int(np.argmin(t_next))
            t_exit = float(t_next[axis])
            yield self.cells.get(tuple(ijk), self._empty), min(t_exit, t_max)
            if t_exit > t_max:
                return
            ijk[axis] += step[axis]
            t_next[axis] += t_delta[axis]
            t_cur = t_exit


def build_grid(config: PointConfiguration, eps: float) -> SpatialGrid:
    """Index a configuration's obstacles into a uniform grid.

    Cell size is max(4 eps, sample_radius / 64): each obstacle touches O(1)
    cells and rays cross few cells per mean free path.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    h = max(4.0 * eps, config.sample_radius / 64.0)
    raw: dict[tuple[int, ...], list[int]] = {}
    centers = config.centers
    for i in range(config.n_centers):
        c = centers[i]
        lo = np.floor((c - eps) / h).astype(int)
        hi = np.floor((c + eps) / h).astype(int)
        for key in np.ndindex(*(hi - lo + 1)):
            cell = tuple(lo + np.asarray(key))
            cell_lo = np.asarray(cell) * h
            nearest = np.clip(c, cell_lo, cell_lo + h)
            if np.sum((nearest - c) ** 2) <= eps * eps:
                raw.setdefault(cell, []).append(i)
    cells = {k: np.asarray(ids, dtype=np.intp) for k, ids in raw.items()}
    return SpatialGrid(h, cells, config.dim, config.sample_radius, eps)


def reflect(v: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Specular reflection v - 2 (v . n) n, renormalized to unit length."""
    v = np.asarray(v, dtype=float)
    normal = np.asarray(normal, dtype=float)
    w = v - 2.0 * float(v @ normal) * normal
    return w / np.linalg.norm(w)


def _squared_norm_rows(delta: np.ndarray) -> np.ndarray:
    """Row-wise |delta|^2 via fixed-order coordinate arithmetic.

    Matmul/einsum reductions can pick different SIMD kernels for different
    array lengths, giving last-ulp differences between the grid path (small
    candidate subsets) and the full scan.  Billiard trajectories amplify such
    differences exponentially with the collision count, so the reductions are
    written out per coordinate to make both paths bit-identical.
    """
    if delta.shape[1] == 2:
        return delta[:, 0] * delta[:, 0] + delta[:, 1] * delta[:, 1]
    return delta[:, 0] * delta[:, 0] + (
        delta[:, 1] * delta[:, 1] + delta[:, 2] * delta[:, 2]
    )


def _coordinate_dots(delta: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(delta . v, |delta|^2) with the same fixed-order arithmetic."""
    if delta.shape[1] == 2:
        b = delta[:, 0] * v[0] + delta[:, 1] * v[1]
    else:
        b = delta[:, 0] * v[0] + (delta[:, 1] * v[1] + delta[:, 2] * v[2])
    return b, _squared_norm_rows(delta)


def _candidate_collision(
    x: np.ndarray,
    v: np.ndarray,
    centers: np.ndarray,
    ids: np.ndarray,
    eps: float,
    horizon: float,
    exclude_id: int,
) -> Collision | None:
    """Smallest entry root over the given obstacle subset, or None."""
    if ids.size == 0:
        return None
    delta = centers[ids] - x
    b, d2 = _coordinate_dots(delta, v)
    disc = eps * eps - (d2 - b * b)
    hit = (disc > DISC_TOL) & (b > 0.0)
    if not hit.any():
        return None
    tau = b[hit] - np.sqrt(disc[hit])
    cand_ids = ids[hit]
    min_tau = np.where(cand_ids == exclude_id, SAME_OBSTACLE_MIN_TAU, 0.0)
    ok = (tau > min_tau) & (tau <= horizon)
    if not ok.any():
        return None
    k = int(np.argmin(np.where(ok, tau, np.inf)))
    oid = int(cand_ids[k])
    t_hit = float(tau[k])
    normal = (x + t_hit * v) - centers[oid]
    normal /= np.linalg.norm(normal)
    return Collision(t_hit, oid, normal)


def _first_collision_core(
    x: np.ndarray,
    v: np.ndarray,
    config: PointConfiguration,
    eps: float,
    grid: SpatialGrid | None,
    horizon: float,
    exclude_id: int = -1,
) -> Collision | None:
    if grid is None:
        all_ids = np.arange(config.n_centers, dtype=np.intp)
        return _candidate_collision(x, v, config.centers, all_ids, eps, horizon, exclude_id)

    # Cap traversal where the ray leaves the populated domain.
    r_dom = config.sample_radius + eps + grid.cell_size
    xv = float(x @ v)
    disc = xv * xv - (float(x @ x) - r_dom * r_dom)
    t_far = -xv + math.sqrt(disc) if disc > 0.0 else 0.0
    best: Collision | None = None
    for ids, t_exit in grid.traverse(x, v, min(horizon, t_far)):
        hit = _candidate_collision(x, v, config.centers, ids, eps, horizon, exclude_id)
        if hit is not None and (best is None or hit.tau < best.tau):
            best = hit
        if best is not None and best.tau <= t_exit:
            return best
    return best


def first_collision(
    z: PhasePoint,
    config: PointConfiguration,
    eps: float,
    grid: SpatialGrid | None = None,
    horizon: float = math.inf,
) -> Collision | None:
    """First obstacle hit along z within ``horizon``.

    Returns the smallest positive root of |x + tau v - c|^2 = eps^2 over all
    obstacles together with the obstacle id and the inward unit normal at the
    hit point, or None if nothing is hit.  A start point exactly on a sphere
    moving outward does not count as a hit at tau = 0.

    Raises:
        StartInsideObstacleError: Start point strictly inside an obstacle.
        ValueError: Non-positive horizon.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    x = np.asarray(z.x, dtype=float)
    if config.n_centers:
        d2min = float(_squared_norm_rows(config.centers - x).min())
        if d2min < (eps * (1.0 - 1e-9)) ** 2:
            raise StartInsideObstacleError(
                f"start at distance {math.sqrt(d2min):.6g} < eps = {eps:.6g} from a center"
            )
    return _first_collision_core(x, np.asarray(z.v, dtype=float), config, eps, grid, horizon)


def flow(
    z: PhasePoint,
    t: float,
    config: PointConfiguration,
    eps: float,
    grid: SpatialGrid | None = None,
    collision_cap: int = 1_000_000,
) -> TrajectoryResult:
    """Billiard trajectory over [0, t]: free flight between specular bounces.

    A start point strictly inside an obstacle yields a weight-zero record
    (``started_in_table = 0``) with a free-flight endpoint; downstream
    estimators multiply by the occupancy indicator, so the endpoint of such
    records never contributes.

    Raises:
        RunawayTrajectoryError: More than ``collision_cap`` reflections.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    x = np.asarray(z.x, dtype=float)
    v = np.asarray(z.v, dtype=float)
    v = v / np.linalg.norm(v)

    started = occupancy_indicator(x, config, eps, grid)
    if not started or t == 0.0:
        endpoint = PhasePoint(x + t * v, v)
        empty_t = np.empty(0, dtype=float)
        empty_i = np.empty(0, dtype=np.intp)
        return TrajectoryResult(endpoint, empty_t, empty_i, 0, started, 1)

    pos = x.copy()
    vel = v.copy()
    elapsed = 0.0
    times: list[float] = []
    ids: list[int] = []
    last_id = -1
    while True:
        if len(times) > collision_cap:
            raise RunawayTrajectoryError(
                f"more than {collision_cap} collisions before time {t}"
            )
        horizon = t - elapsed
        hit = _first_collision_core(pos, vel, config, eps, grid, horizon, last_id)
        if hit is None:
            pos = pos + horizon * vel
            break
        elapsed += hit.tau
        # Snap onto the sphere to stop round-off drift across many bounces.
        pos = config.centers[hit.obstacle_id] + eps * hit.normal
        times.append(elapsed)
        ids.append(hit.obstacle_id)
        if hit.tau >= horizon:
            # Collision at the final instant: endpoint keeps the incoming
            # velocity (the flow is left-continuous at collision times).
            break
        vel = reflect(vel, hit.normal)
        last_id = hit.obstacle_id

    id_arr = np.asarray(ids, dtype=np.intp)
    result = TrajectoryResult(
        endpoint=PhasePoint(pos, vel),
        collision_times=np.asarray(times, dtype=float),
        obstacle_ids=id_arr,
        n_collisions=len(ids),
        started_in_table=1,
        recollision_free=int(np.unique(id_arr).size == id_arr.size),
    )
    return result


def recollision_filter(record: TrajectoryResult) -> int:
    """1 iff all obstacle ids in the record are pairwise distinct.

    An empty collision record gives 1 (empty product convention).
    """
    ids = record.obstacle_ids
    return int(np.unique(ids).size == ids.size)
