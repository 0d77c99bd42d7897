"""Velocity dynamics for variant B.

2D flow (kappa=1) is integrated in vorticity-streamfunction form: the
pressure disappears, incompressibility is structural, and u is recovered
from omega by Biot-Savart with the mean flow gauged to zero.  3D flow
(kappa=0) is the time-dependent Stokes system, advanced per mode by the
exact semigroup response to a force held constant over the step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    leray_project_hat,
)

__all__ = [
    "FluidState2D",
    "FluidState3D",
    "curl2d",
    "biot_savart2d",
    "ns2d_rhs",
    "stokes3d_step",
]


@dataclass
class FluidState2D:
    """Vorticity-form 2D flow state; u is derived, never stored."""

    omega: ScalarField

    def __post_init__(self):
        if self.omega.grid.d != 2:
            raise ValueError("FluidState2D requires a 2D grid")

    def velocity(self) -> VectorField:
        return biot_savart2d(self.omega)


@dataclass
class FluidState3D:
    """Velocity-form 3D Stokes state, kept divergence-free."""

    u: VectorField

    def __post_init__(self):
        if self.u.grid.d != 3:
            raise ValueError("FluidState3D requires a 3D grid")


def curl2d(u: VectorField) -> ScalarField:
    """Scalar vorticity d1(u2) - d2(u1) of a planar field."""
    g = u.grid
    if g.d != 2:
        raise ValueError("curl2d is defined for 2D fields only")
    uh = g.fwd(u.stacked())
    return ScalarField(g, g.inv(g.ik[0] * uh[1] - g.ik[1] * uh[0]))


def biot_savart2d_hat(grid: Grid, omega_hat: np.ndarray) -> np.ndarray:
    """Half-spectra of u = perp-grad(Lap^-1 omega); zero mean flow."""
    psi = grid.inv_k2_mult * omega_hat
    return np.stack([-grid.ik[1] * psi, grid.ik[0] * psi])


def biot_savart2d(omega: ScalarField) -> VectorField:
    """Velocity recovered from vorticity; mean flow gauged to zero."""
    g = omega.grid
    if g.d != 2:
        raise ValueError("biot_savart2d is defined for 2D fields only")
    return VectorField.from_arrays(g, g.inv(biot_savart2d_hat(g, omega.hat())))


def _curl_force_hat(grid: Grid, force: VectorField) -> np.ndarray:
    fh = grid.fwd(force.stacked())
    out = grid.ik[0] * fh[1] - grid.ik[1] * fh[0]
    return np.where(grid.dealias_mask, out, 0.0)


def ns2d_rhs_hat(grid: Grid, omega_vals: np.ndarray, u_vals: np.ndarray,
                 force: VectorField) -> np.ndarray:
    """Spectral non-stiff vorticity tendency -div(u omega) + curl(force)."""
    from .model import _flux_div_hat  # shared dealiased product kernel

    return -_flux_div_hat(grid, omega_vals, u_vals) + _curl_force_hat(grid, force)


def ns2d_rhs(omega: ScalarField, s: ScalarField, e: ScalarField, phi) -> ScalarField:
    """Non-stiff 2D Navier-Stokes tendency in vorticity form.

    Returns -(u.grad)omega + curl(-(s+e) grad phi) with u = Biot-Savart(omega);
    the viscous term Laplace(omega) is left to the exact integrator multiplier.
    """
    from .model import buoyancy_force

    g = omega.grid
    if g.d != 2:
        raise ValueError("ns2d_rhs is defined on 2D grids only")
    u = biot_savart2d(omega)
    force = buoyancy_force(s, e, phi)
    return ScalarField(g, g.inv(ns2d_rhs_hat(g, omega.values, u.stacked(), force)))


def stokes_response_multipliers(grid: Grid, dt: float):
    """Exact per-mode decay and constant-force response over one step."""
    k2 = grid.k2
    decay = np.exp(-k2 * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        resp = np.where(k2 > 0.0, -np.expm1(-k2 * dt) / np.where(k2 > 0.0, k2, 1.0), dt)
    return decay, resp


def stokes3d_step_hat(grid: Grid, u_hat: np.ndarray, force_hat: np.ndarray,
                      dt: float) -> np.ndarray:
    decay, resp = stokes_response_multipliers(grid, dt)
    pf = leray_project_hat(grid, force_hat)
    return decay * u_hat + resp * pf


def stokes3d_step(u: VectorField, force: VectorField, dt: float) -> VectorField:
    """Advance 3D Stokes flow by dt under a force held constant over the step.

    Per mode: u(t+dt) = e^(-|k|^2 dt) u(t) + (1 - e^(-|k|^2 dt))/|k|^2 * P(f),
    with the mean mode advanced by dt * mean(P f).  Exact in the diffusion,
    first order only through the force sampling.
    """
    g = u.grid
    if g.d != 3:
        raise ValueError("stokes3d_step is defined for 3D fields only")
    if dt <= 0:
        raise ValueError("dt must be positive")
    uh = g.fwd(u.stacked())
    fh = g.fwd(force.stacked())
    return VectorField.from_arrays(g, g.inv(stokes3d_step_hat(g, uh, fh, dt)))
