"""Limiting linear Boltzmann dynamics as a velocity-jump process.

Collisions happen at rate ``sigma`` (the unit-ball volume in dimension
``d - 1``); each collision resamples the velocity through the impact-parameter
scattering map.  Two independent routes to the same expectations are kept:
forward simulation of the jump process (:func:`evolve_jump`) and a truncated
Duhamel-series evaluation (:func:`duhamel_eval`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .billiard import PhasePoint
from .poisson import unit_ball_volume
from .streams import block_generator

_STREAM_DUHAMEL = 31
_STREAM_DEFLECTION = 32


@dataclass(frozen=True)
class ScatterParams:
    """Collision rate bundle: sigma is the (d-1)-dimensional unit-ball volume."""

    dim: int
    sigma: float

    @classmethod
    def for_dim(cls, dim: int) -> "ScatterParams":
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        return cls(dim=dim, sigma=unit_ball_volume(dim - 1))


@dataclass(frozen=True)
class ParticleEnsemble:
    """Population of unit-speed particles with uniform weights 1/n."""

    positions: np.ndarray  # (n, dim)
    velocities: np.ndarray  # (n, dim)
    time: float = 0.0

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


def sample_impact(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Impact parameter(s) uniform on the unit ball of dimension ``dim - 1``.

    Coordinates are relative to an orthonormal frame perpendicular to the
    velocity.  For dim=2 this is a scalar uniform on [-1, 1]; for dim=3 a
    point uniform on the unit disk.  Returns shape (dim-1,) or (size, dim-1).
    """
    n = 1 if size is None else size
    if dim == 2:
        h = (2.0 * rng.random((n, 1)) - 1.0)
    elif dim == 3:
        r = np.sqrt(rng.random(n))
        angle = 2.0 * math.pi * rng.random(n)
        h = np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
    else:
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    return h[0] if size is None else h


def orthonormal_frame(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane perpendicular to unit vector v.

    Returns shape (dim-1, dim).  For dim=2 the single frame vector is v
    rotated by +pi/2; for dim=3 the first vector comes from Gram-Schmidt on
    the coordinate axis least aligned with v (first index on ties), and the
    second is v x e1.
    """
    v = np.asarray(v, dtype=float)
    if v.shape == (2,):
        return np.array([[-v[1], v[0]]])
    if v.shape == (3,):
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(v)))] = 1.0
        e1 = axis - (axis @ v) * v
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(v, e1)
        return np.stack([e1, e2])
    raise ValueError(f"v must have shape (2,) or (3,), got {v.shape}")


def _frames_batch(vels: np.ndarray) -> np.ndarray:
    """Vectorized orthonormal_frame: (n, d) -> (n, d-1, d)."""
    n, d = vels.shape
    if d == 2:
        frames = np.empty((n, 1, 2))
        frames[:, 0, 0] = -vels[:, 1]
        frames[:, 0, 1] = vels[:, 0]
        return frames
    axes = np.eye(3)[np.argmin(np.abs(vels), axis=1)]
    e1 = axes - np.einsum("ij,ij->i", axes, vels)[:, None] * vels
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(vels, e1)
    return np.stack([e1, e2], axis=1)


def _scatter_batch(vels: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Apply the impact-parameter deflection to each row of ``vels``."""
    frames = _frames_batch(vels)
    h_vec = np.einsum("nk,nkd->nd", h, frames)
    h2 = np.einsum("nk,nk->n", h, h)
    out = (2.0 * h2 - 1.0)[:, None] * vels + 2.0 * np.sqrt(1.0 - h2)[:, None] * h_vec
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out


def scatter(v: np.ndarray, h: np.ndarray | float) -> np.ndarray:
    """Post-collision direction (2|h|^2 - 1) v + 2 sqrt(1 - |h|^2) h.

    ``h`` holds impact coordinates in a frame perpendicular to ``v`` (see
    :func:`orthonormal_frame`); |h| <= 1.  Equals the specular reflection of
    v across the inward normal h - sqrt(1 - |h|^2) v.
    """
    v = np.asarray(v, dtype=float)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return _scatter_batch(v[None, :], h[None, :])[0]


def impact_normal(v: np.ndarray, h: np.ndarray | float) -> np.ndarray:
    """Inward unit normal nu = h - sqrt(1 - |h|^2) v realizing the deflection."""
    v = np.asarray(v, dtype=float)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    h_vec = np.asarray(h, dtype=float) @ orthonormal_frame(v)
    return h_vec - math.sqrt(max(0.0, 1.0 - float(h @ h))) * v


def evolve_jump(
    ensemble: ParticleEnsemble,
    dt: float,
    params: ScatterParams,
    rng: np.random.Generator,
) -> ParticleEnsemble:
    """Advance every particle by ``dt``: free flight with Exp(sigma) collision clocks.

    Each particle independently alternates straight unit-speed flight with
    velocity updates v <- scatter(v, h), h uniform on the impact ball.  The
    particle count never changes (mass conservation is exact by construction).
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    pos = ensemble.positions.copy()
    vel = ensemble.velocities.copy()
    if dt == 0.0:
        return ParticleEnsemble(pos, vel, ensemble.time)
    if params.sigma == 0.0:
        return ParticleEnsemble(pos + dt * vel, vel, ensemble.time + dt)

    remaining = np.full(ensemble.n_particles, float(dt))
    active = np.arange(ensemble.n_particles)
    while active.size:
        tau = rng.exponential(1.0 / params.sigma, size=active.size)
        fly = np.minimum(tau, remaining[active])
        pos[active] += fly[:, None] * vel[active]
        collided = tau < remaining[active]
        hit = active[collided]
        if hit.size:
            h = sample_impact(params.dim, rng, size=hit.size)
            vel[hit] = _scatter_batch(vel[hit], h)
        remaining[active] -= fly
        active = hit
    return ParticleEnsemble(pos, vel, ensemble.time + dt)


@dataclass(frozen=True)
class DeflectionCheck:
    """Goodness-of-fit summary for the single-scatter deflection law."""

    dim: int
    n_samples: int
    counts: np.ndarray
    bin_edges: np.ndarray
    statistic: float
    pvalue: float
    symmetry_pvalue: float | None
    frac_small_angle: float | None  # d=2: empirical P(|theta| <= pi/2)


def _angle_cdf_2d(theta: np.ndarray) -> np.ndarray:
    # CDF of the deflection angle with density (1/4) |sin(theta/2)| on (-pi, pi].
    theta = np.asarray(theta, dtype=float)
    return np.where(theta >= 0.0, 1.0 - 0.5 * np.cos(theta / 2.0), 0.5 * np.cos(theta / 2.0))


def deflection_density_check(
    dim: int,
    n_samples: int,
    seed: int,
    n_bins: int = 40,
) -> DeflectionCheck:
    """Empirical post-collision law versus the analytic deflection density.

    For dim=2 the signed deflection angle is binned and tested (chi-square)
    against the density (1/4)|sin(theta/2)| on (-pi, pi], plus a mirror
    symmetry test.  For dim=3 the cosine of the deflection angle is tested
    against the uniform law on [-1, 1] (Kolmogorov-Smirnov).
    """
    params = ScatterParams.for_dim(dim)
    rng = block_generator(seed, _STREAM_DEFLECTION, 0)
    v0 = np.zeros(dim)
    v0[0] = 1.0
    vels = np.tile(v0, (n_samples, 1))
    h = sample_impact(dim, rng, size=n_samples)
    out = _scatter_batch(vels, h)

    if dim == 2:
        theta = np.arctan2(out[:, 1] * v0[0] - out[:, 0] * v0[1], out @ v0)
        edges = np.linspace(-math.pi, math.pi, n_bins + 1)
        counts, _ = np.histogram(theta, bins=edges)
        probs = np.diff(_angle_cdf_2d(edges))
        expected = n_samples * probs
        statistic = float(np.sum((counts - expected) ** 2 / expected))
        pvalue = float(stats.chi2.sf(statistic, n_bins - 1))
        mirrored = counts[::-1]
        half = n_bins // 2
        a, b = counts[:half], mirrored[:half]
        tot = a + b
        nz = tot > 0
        sym_stat = float(np.sum((a[nz] - b[nz]) ** 2 / tot[nz]))
        sym_p = float(stats.chi2.sf(sym_stat, int(nz.sum())))
        frac = float(np.mean(np.abs(theta) <= math.pi / 2.0))
        return DeflectionCheck(dim, n_samples, counts, edges, statistic, pvalue, sym_p, frac)

    cos_theta = out @ v0
    ks = stats.kstest(cos_theta, stats.uniform(loc=-1.0, scale=2.0).cdf)
    counts, edges = np.histogram(cos_theta, bins=n_bins, range=(-1.0, 1.0))
    return DeflectionCheck(
        dim, n_samples, counts, edges, float(ks.statistic), float(ks.pvalue), None, None
    )


def kernel_mass(dim: int) -> float:
    """Total mass of the gain kernel (1 / (2 |B^{d-1}|)) * integral |v.nu| d nu.

    Computed by quadrature over the sphere; equals 1 for every dimension.
    """
    sigma = unit_ball_volume(dim - 1)
    if dim == 2:
        val, _ = integrate.quad(lambda a: abs(math.cos(a)), 0.0, 2.0 * math.pi)
    elif dim == 3:
        val, _ = integrate.quad(
            lambda th: 2.0 * math.pi * abs(math.cos(th)) * math.sin(th), 0.0, math.pi
        )
    else:
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    return val / (2.0 * sigma)


def deflection_cosine_mean(dim: int) -> float:
    """E[cos(deflection angle)] for one scattering event, by quadrature."""
    if dim == 2:
        val, _ = integrate.quad(
            lambda th: math.cos(th) * 0.25 * abs(math.sin(th / 2.0)), -math.pi, math.pi
        )
        return val
    if dim == 3:
        val, _ = integrate.quad(lambda c: 0.5 * c, -1.0, 1.0)
        return val
    raise ValueError(f"dim must be 2 or 3, got {dim}")


@dataclass(frozen=True)
class DuhamelResult:
    value: float
    stderr: float
    truncation_bound: float


def duhamel_eval(
    phi,
    t: float,
    z: PhasePoint,
    params: ScatterParams,
    n_max: int,
    n_mc: int,
    seed: int,
) -> DuhamelResult:
    """Truncated Duhamel-series estimate of the pairing <law at time t, phi>.

    The series term with k scattering events is sampled with analytic
    survival weights: each level contributes w * exp(-sigma * rem) *
    phi(free flight), then multiplies w by (1 - exp(-sigma * rem)) and draws
    a collision time from the exponential law conditioned on [0, rem] plus a
    uniform impact parameter.  Terms beyond ``n_max`` events are dropped; the
    returned bound is phi's sup-norm times P(Poisson(sigma t) > n_max).

    Args:
        phi: Observable with vectorized call phi(x, v) and recorded ``bound``.
        t: Evaluation time (>= 0).
        z: Starting phase point.
        params: Collision-rate bundle.
        n_max: Maximum number of scattering events kept (>= 0).
        n_mc: Number of Monte Carlo rollouts.
        seed: Stream seed.
    """
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    sigma = params.sigma
    x0 = np.asarray(z.x, dtype=float)
    v0 = np.asarray(z.v, dtype=float)
    if sigma == 0.0 or t == 0.0:
        val = float(np.asarray(phi((x0 + t * v0)[None, :], v0[None, :]))[0])
        return DuhamelResult(val, 0.0, 0.0)

    rng = block_generator(seed, _STREAM_DUHAMEL, 0)
    pos = np.tile(x0, (n_mc, 1))
    vel = np.tile(v0, (n_mc, 1))
    rem = np.full(n_mc, float(t))
    w = np.ones(n_mc)
    acc = np.zeros(n_mc)
    for level in range(n_max + 1):
        surv = np.exp(-sigma * rem)
        acc += w * surv * np.asarray(phi(pos + rem[:, None] * vel, vel), dtype=float)
        if level == n_max:
            break
        p_col = 1.0 - surv
        w = w * p_col
        u = rng.random(n_mc)
        tau = -np.log1p(-u * p_col) / sigma
        pos += tau[:, None] * vel
        vel = _scatter_batch(vel, sample_impact(params.dim, rng, size=n_mc))
        rem -= tau

    value = float(np.mean(acc))
    stderr = float(np.std(acc, ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    bound = float(phi.bound * stats.poisson.sf(n_max, sigma * t))
    return DuhamelResult(value, stderr, bound)
