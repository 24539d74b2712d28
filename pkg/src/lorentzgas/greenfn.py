"""Monte Carlo estimation of the recollision-filtered endpoint law.

For a fixed start ``z`` and time ``t`` the estimator draws fresh obstacle
configurations, flows the billiard trajectory, and keeps the endpoint with a
{0,1} weight: (start point unoccupied) x (configuration passes the 3 eps
separation screen) x (no obstacle hit twice).  The resulting weighted atoms
represent the filtered endpoint law; pairings against bounded observables
are the only consumption path (weak-* testing, no density estimation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .billiard import PhasePoint, flow
from .boltzmann import sample_impact, scatter
from .poisson import min_separation_ok, sample_configuration, unit_ball_volume
from .streams import block_generator, block_spans, child_seed, map_blocks

_STREAM_GREEN = 21
_STREAM_INTEQ = 22


@dataclass(frozen=True)
class Observable:
    """Named bounded phase-space function phi(x, v).

    ``fn`` must accept batched arrays of shape (n, d) and return shape (n,);
    ``bound`` records a sup-norm bound used for truncation estimates.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound: float

    def __call__(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x, v), dtype=float)

    def at(self, z: PhasePoint) -> float:
        return float(self(z.x[None, :], z.v[None, :])[0])


def smooth_bump(center: np.ndarray, width: float) -> Callable[[np.ndarray], np.ndarray]:
    """C-infinity bump in x: exp(1 - 1/(1 - r^2)) with r = |x - center| / width."""
    center = np.asarray(center, dtype=float)

    def profile(x: np.ndarray) -> np.ndarray:
        r2 = np.sum((x - center) ** 2, axis=1) / width**2
        out = np.zeros(x.shape[0])
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return profile


def default_observables(dim: int) -> list[Observable]:
    """The standard 8-observable dictionary.

    Constants, velocity coordinates, smooth compactly supported bumps in x at
    three centers, and velocity-bump products; all sup-norms equal 1.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    e1 = np.zeros(dim)
    e1[0] = 1.0
    e2 = np.zeros(dim)
    e2[1] = 1.0
    b0 = smooth_bump(np.zeros(dim), 1.5)
    b1 = smooth_bump(e1, 1.5)
    b2 = smooth_bump(e2, 1.5)

    obs = [
        Observable("one", lambda x, v: np.ones(x.shape[0]), 1.0),
        Observable("v1", lambda x, v: v[:, 0], 1.0),
        Observable("v2", lambda x, v: v[:, 1], 1.0),
    ]
    if dim == 3:
        obs.append(Observable("v3", lambda x, v: v[:, 2], 1.0))
    obs += [
        Observable("bump_origin", lambda x, v: b0(x), 1.0),
        Observable("bump_xplus", lambda x, v: b1(x), 1.0),
        Observable("bump_yplus", lambda x, v: b2(x), 1.0),
        Observable("v1_bump_origin", lambda x, v: v[:, 0] * b0(x), 1.0),
    ]
    if dim == 2:
        obs.append(Observable("v1_bump_xplus", lambda x, v: v[:, 0] * b1(x), 1.0))
    return obs


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted endpoint atoms representing the filtered endpoint law."""

    positions: np.ndarray  # (n, d)
    velocities: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,) in {0, 1}
    n_samples: int
    metadata: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(self.weights.sum()) / self.n_samples

    def pair(self, obs: Observable) -> tuple[float, float]:
        """Monte Carlo pairing <measure, phi> with its standard error."""
        y = self.weights * obs(self.positions, self.velocities)
        est = float(y.sum()) / self.n_samples
        if self.n_samples > 1:
            se = float(np.std(y, ddof=1)) / math.sqrt(self.n_samples)
        else:
            se = 0.0
        return est, se


@dataclass(frozen=True)
class GreenSampleStats:
    """Raw per-sample indicators shared by every estimator on one stream."""

    positions: np.ndarray
    velocities: np.ndarray
    occupied_free: np.ndarray  # start point at distance >= eps from all centers
    separated: np.ndarray  # configuration passes the 3 eps screen
    no_recollision: np.ndarray
    n_collisions: np.ndarray


def _validate_green_args(t: float, z: PhasePoint, eps: float, R: float, T: float) -> None:
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not (0.0 <= t <= T):
        raise ValueError(f"t must lie in [0, T] = [0, {T}], got {t}")
    r = float(np.linalg.norm(z.x))
    if r > R + T - t + 1e-12:
        raise ValueError(
            f"|z.x| = {r:.6g} exceeds R + T - t = {R + T - t:.6g}"
        )


def sample_green_stats(
    t: float,
    z: PhasePoint,
    eps: float,
    R: float,
    T: float,
    n_samples: int,
    seed: int,
    n_threads: int = 1,
    intensity_override: float | None = None,
) -> GreenSampleStats:
    """Draw ``n_samples`` fresh configurations and flow z through each.

    Obstacles are sampled in B(0, R + T + 2 eps); intensity defaults to the
    Boltzmann-Grad value eps**(1 - d).  Deterministic for fixed
    ``(seed, parameters)`` independent of ``n_threads``.
    """
    _validate_green_args(t, z, eps, R, T)
    dim = z.x.shape[0]
    intensity = eps ** (1 - dim) if intensity_override is None else intensity_override
    rho = R + T + 2.0 * eps
    region = R + T

    def worker(block: int, start: int, stop: int):
        rng = block_generator(seed, _STREAM_GREEN, block)
        m = stop - start
        pos = np.empty((m, dim))
        vel = np.empty((m, dim))
        occ = np.empty(m, dtype=bool)
        sep = np.empty(m, dtype=bool)
        lam = np.empty(m, dtype=bool)
        ncol = np.empty(m, dtype=np.int32)
        for i in range(m):
            config = sample_configuration(dim, intensity, rho, rng)
            rec = flow(z, t, config, eps)
            pos[i] = rec.endpoint.x
            vel[i] = rec.endpoint.v
            occ[i] = bool(rec.started_in_table)
            sep[i] = min_separation_ok(config, eps, region)
            lam[i] = bool(rec.recollision_free)
            ncol[i] = rec.n_collisions
        return pos, vel, occ, sep, lam, ncol

    parts = map_blocks(block_spans(n_samples), worker, n_threads)
    return GreenSampleStats(
        positions=np.concatenate([p[0] for p in parts]),
        velocities=np.concatenate([p[1] for p in parts]),
        occupied_free=np.concatenate([p[2] for p in parts]),
        separated=np.concatenate([p[3] for p in parts]),
        no_recollision=np.concatenate([p[4] for p in parts]),
        n_collisions=np.concatenate([p[5] for p in parts]),
    )


def _binomial_se(values: np.ndarray) -> float:
    n = values.size
    if n < 2:
        return 0.0
    return float(np.std(values.astype(float), ddof=1)) / math.sqrt(n)


def estimate_green(
    t: float,
    z: PhasePoint,
    eps: float,
    R: float,
    T: float,
    n_samples: int,
    seed: int,
    n_threads: int = 1,
    intensity_override: float | None = None,
) -> EmpiricalMeasure:
    """Weighted-atom estimate of the filtered endpoint law at (t, z).

    Each sample weight is the product of the occupancy indicator at z.x, the
    3 eps separation screen on B(0, R + T), and the no-recollision indicator
    of the trajectory; the atom is the trajectory endpoint.  The total mass
    is at most 1 by construction.
    """
    stats = sample_green_stats(
        t, z, eps, R, T, n_samples, seed, n_threads, intensity_override
    )
    weights = (stats.occupied_free & stats.separated & stats.no_recollision).astype(float)
    dim = z.x.shape[0]
    metadata = {
        "t": t,
        "z_x": [float(c) for c in z.x],
        "z_v": [float(c) for c in z.v],
        "eps": eps,
        "R": R,
        "T": T,
        "seed": int(seed),
        "n_samples": int(n_samples),
        "intensity": eps ** (1 - dim) if intensity_override is None else intensity_override,
    }
    return EmpiricalMeasure(
        positions=stats.positions,
        velocities=stats.velocities,
        weights=weights,
        n_samples=n_samples,
        metadata=metadata,
    )


@dataclass(frozen=True)
class J1J2Result:
    j1_mass: float
    j2_mass: float
    j1_stderr: float
    j2_stderr: float


def decompose_J1_J2(
    t: float,
    z: PhasePoint,
    eps: float,
    R: float,
    T: float,
    n_samples: int,
    seed: int,
    n_threads: int = 1,
    intensity_override: float | None = None,
) -> J1J2Result:
    """Split the filtered mass by whether the first collision precedes t.

    Runs the same sample stream as :func:`estimate_green` with identical
    arguments, so j1_mass + j2_mass equals that measure's mass exactly.
    """
    stats = sample_green_stats(
        t, z, eps, R, T, n_samples, seed, n_threads, intensity_override
    )
    w = stats.occupied_free & stats.separated & stats.no_recollision
    j1 = w & (stats.n_collisions == 0)
    j2 = w & (stats.n_collisions > 0)
    return J1J2Result(
        j1_mass=float(j1.mean()),
        j2_mass=float(j2.mean()),
        j1_stderr=_binomial_se(j1),
        j2_stderr=_binomial_se(j2),
    )


def recollision_mass_gap(
    t: float,
    z: PhasePoint,
    eps: float,
    R: float,
    T: float,
    n_samples: int,
    seed: int,
    n_threads: int = 1,
    intensity_override: float | None = None,
) -> tuple[float, float]:
    """Mass removed by the recollision filter, on a shared sample stream.

    Gap = (mass without the no-recollision factor) - (filtered mass); this is
    nonnegative sample by sample because the dropped factor is an indicator.
    """
    stats = sample_green_stats(
        t, z, eps, R, T, n_samples, seed, n_threads, intensity_override
    )
    dropped = stats.occupied_free & stats.separated & ~stats.no_recollision
    return float(dropped.mean()), _binomial_se(dropped)


@dataclass(frozen=True)
class IntegralEquationResult:
    lhs: float
    rhs: float
    residual: float
    stderr: float


def verify_integral_equation(
    t: float,
    z: PhasePoint,
    eps: float,
    R: float,
    T: float,
    observable: Observable,
    n_outer: int,
    n_inner: int,
    seed: int,
    n_threads: int = 1,
) -> IntegralEquationResult:
    """Residual of the one-collision renewal identity against its limit value.

    lhs pairs the endpoint-law estimate at (t, z) with the observable.  rhs is
    exp(-sigma t) phi(z + t v) plus a nested Monte Carlo of the first-collision
    integral: collision times drawn from Exp(sigma) conditioned on [0, t],
    impact parameters uniform on the unit (d-1)-ball, and the inner pairing
    estimated from a fresh endpoint-law run started at the post-collision
    state with ``n_inner`` samples.  The returned stderr combines the lhs
    noise with the outer-integral spread (which already includes inner noise).
    """
    _validate_green_args(t, z, eps, R, T)
    dim = z.x.shape[0]
    sigma = unit_ball_volume(dim - 1)

    lhs_measure = estimate_green(
        t, z, eps, R, T, n_outer, child_seed(seed, 1), n_threads
    )
    lhs, lhs_se = lhs_measure.pair(observable)

    surv = math.exp(-sigma * t)
    free_term = surv * observable.at(z.free_flight(t))
    if t == 0.0 or n_outer == 0:
        rhs = free_term
        residual = lhs - rhs
        return IntegralEquationResult(lhs, rhs, residual, lhs_se)

    rng = block_generator(seed, _STREAM_INTEQ, 0)
    inner_vals = np.empty(n_outer)
    p_col = 1.0 - surv
    for k in range(n_outer):
        tau = -math.log1p(-float(rng.random()) * p_col) / sigma
        h = sample_impact(dim, rng)
        y = PhasePoint(z.x + tau * z.v, scatter(z.v, h))
        inner = estimate_green(
            t - tau, y, eps, R, T, n_inner, child_seed(seed, 2, k), n_threads
        )
        inner_vals[k], _ = inner.pair(observable)

    rhs = free_term + p_col * float(inner_vals.mean())
    var_outer = float(np.var(inner_vals, ddof=1)) / n_outer if n_outer > 1 else 0.0
    stderr = math.sqrt(lhs_se**2 + p_col**2 * var_outer)
    return IntegralEquationResult(lhs, rhs, lhs - rhs, stderr)
