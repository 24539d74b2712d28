"""Monte Carlo laboratory for a random Lorentz gas and its kinetic limit.

The package simulates a point particle bouncing among Poisson-distributed
spherical obstacles of radius ``eps`` at intensity ``eps**(1 - d)``
(Boltzmann-Grad scaling), estimates the obstacle-averaged endpoint law of
the trajectory, independently simulates the limiting linear Boltzmann
velocity-jump process, and compares the two against a dictionary of test
observables.
"""

__version__ = "0.1.0"

from .billiard import (
    Collision,
    PhasePoint,
    RunawayTrajectoryError,
    SpatialGrid,
    StartInsideObstacleError,
    TrajectoryResult,
    build_grid,
    first_collision,
    flow,
    recollision_filter,
    reflect,
)
from .boltzmann import (
    DeflectionCheck,
    DuhamelResult,
    ParticleEnsemble,
    ScatterParams,
    deflection_density_check,
    duhamel_eval,
    evolve_jump,
    kernel_mass,
    sample_impact,
    scatter,
)
from .greenfn import (
    EmpiricalMeasure,
    Observable,
    decompose_J1_J2,
    default_observables,
    estimate_green,
    recollision_mass_gap,
    verify_integral_equation,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ResultRow,
    run_convergence,
    run_mass_check,
)
from .poisson import (
    PointConfiguration,
    ResourceLimitError,
    ball_volume,
    estimate_exclusion_probability,
    min_separation_ok,
    occupancy_indicator,
    sample_configuration,
    unit_ball_volume,
)

__all__ = [
    "Collision",
    "ConfigError",
    "DeflectionCheck",
    "DuhamelResult",
    "EmpiricalMeasure",
    "ExperimentConfig",
    "Observable",
    "ParticleEnsemble",
    "PhasePoint",
    "PointConfiguration",
    "ResourceLimitError",
    "ResultRow",
    "RunawayTrajectoryError",
    "ScatterParams",
    "SpatialGrid",
    "StartInsideObstacleError",
    "TrajectoryResult",
    "ball_volume",
    "build_grid",
    "decompose_J1_J2",
    "default_observables",
    "deflection_density_check",
    "duhamel_eval",
    "estimate_exclusion_probability",
    "estimate_green",
    "evolve_jump",
    "first_collision",
    "flow",
    "kernel_mass",
    "min_separation_ok",
    "occupancy_indicator",
    "recollision_filter",
    "recollision_mass_gap",
    "reflect",
    "run_convergence",
    "run_mass_check",
    "sample_configuration",
    "sample_impact",
    "scatter",
    "unit_ball_volume",
    "verify_integral_equation",
]
