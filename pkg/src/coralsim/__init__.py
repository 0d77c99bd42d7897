"""Pseudo-spectral simulator for gamete chemotaxis-fluid systems on the torus."""

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    gradient,
    divergence,
    laplacian,
    inv_laplacian,
    dealias,
    leray_project,
)
from .model import (
    ModelParams,
    PotentialSpec,
    StateA,
    StateB,
    StateSingle,
    reaction,
    chemo_flux_div_nonlocal,
    chemo_flux_div_local,
    advect,
    buoyancy_force,
    rhs,
)
from .fluid import (
    FluidState2D,
    FluidState3D,
    curl2d,
    biot_savart2d,
    ns2d_rhs,
    stokes3d_step,
)
from .integrator import StepControl, SimHistory, IntegrationError, step, cfl_dt, run
from .diagnostics import (
    DiagnosticRecord,
    FitResult,
    lp_norm,
    total_mass,
    entropy,
    sobolev_norm,
    weighted_moment,
    kato_norm,
    decay_fit,
    bound_check,
)
from .verification import (
    ExperimentSpec,
    heat_exact,
    check_scaling,
    convergence_order,
    chi_sweep,
    rhs_fd_oracle,
)
from .config import RunConfig, ICSpec, ConfigError, parse_config, serialize_config, default_config

__version__ = "0.1.0"
