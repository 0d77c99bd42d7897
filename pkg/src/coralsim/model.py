"""Right-hand sides of the gamete chemotaxis model variants.

Variants:

* ``SINGLE`` - one density n with self-attraction and sink -eps*n^q,
* ``KR``     - two densities (e, s) with per-species diffusivities and the
               shared sink -eps*(s*e)^(q/2), no chemotaxis,
* ``A``      - (e, s) with nonlocal attraction chi*div(s grad(Lap^-1 e)),
* ``B``      - (e, s, c) plus incompressible flow u forced by -(s+e)*grad(phi);
               2D evolves vorticity (Navier-Stokes), 3D evolves u (Stokes).

All advection is written in conservative form -div(u f), so transport moves
no mass on the discrete grid.  Every nonlinear product is 2/3-dealiased.
Diffusion never appears in the assembled tendencies; it is reported as a
per-field diffusivity so the integrator can apply the exact semigroup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    grad_inv_laplacian_hat,
)

VARIANTS = ("SINGLE", "KR", "A", "B")

__all__ = [
    "VARIANTS",
    "PotentialSpec",
    "ModelParams",
    "StateSingle",
    "StateA",
    "StateB",
    "Tendencies",
    "reaction",
    "chemo_flux_div_nonlocal",
    "chemo_flux_div_local",
    "advect",
    "buoyancy_force",
    "rhs",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Potential phi(x) = amplitude * cos(2*pi*mode.x / L).

    Single-mode cosines keep grad(phi) and all higher derivatives bounded on
    the torus, and the gradient is evaluated analytically so the buoyancy
    force carries no differentiation error.
    """

    amplitude: float = 0.0
    mode: tuple = (1, 0)

    def __post_init__(self):
        if not np.isfinite(self.amplitude):
            raise ValueError("potential amplitude must be finite")
        object.__setattr__(self, "mode", tuple(int(m) for m in self.mode))

    def _phase(self, grid: Grid) -> np.ndarray:
        if len(self.mode) != grid.d:
            raise ValueError(
                f"potential mode {self.mode} does not match dimension {grid.d}"
            )
        mesh = grid.mesh()
        ph = np.zeros(grid.shape)
        for m, x in zip(self.mode, mesh):
            if m:
                ph = ph + (2.0 * np.pi * m / grid.L) * x
        return ph

    def values(self, grid: Grid) -> ScalarField:
        return ScalarField(grid, self.amplitude * np.cos(self._phase(grid)))

    def grad(self, grid: Grid) -> VectorField:
        """Analytic gradient: -A*(2*pi*m_j/L)*sin(2*pi*mode.x/L)."""
        sin_ph = np.sin(self._phase(grid))
        comps = []
        for m in self.mode:
            comps.append(-self.amplitude * (2.0 * np.pi * m / grid.L) * sin_ph)
        return VectorField.from_arrays(grid, comps)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters shared by all model variants."""

    variant: str
    chi: float = 0.0
    eps: float = 0.0
    q: float = 2.0
    kappa: int = 1
    kappa1: float = 1.0
    kappa2: float = 1.0
    phi: PotentialSpec = field(default_factory=PotentialSpec)
    nu: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}")
        if self.chi < 0:
            raise ValueError("chi must be >= 0")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.kappa not in (0, 1):
            raise ValueError("kappa must be 0 or 1")
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("kappa1 and kappa2 must be > 0")
        if self.variant in ("SINGLE", "KR"):
            if self.q < 2:
                raise ValueError("reaction exponent q must be >= 2")
        elif self.q != 2:
            raise ValueError(f"variant {self.variant} requires q = 2")
        if self.nu != 1.0:
            raise ValueError("fluid viscosity is fixed at 1")

    def check_dimension(self, d: int) -> None:
        if self.variant == "B":
            want = 1 if d == 2 else 0
            if self.kappa != want:
                raise ValueError(
                    f"variant B in {d}D requires kappa={want}, got {self.kappa}"
                )


@dataclass
class StateSingle:
    n: ScalarField
    t: float = 0.0


@dataclass
class StateA:
    """Densities (e, s) of the two-species variants KR and A."""

    e: ScalarField
    s: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if self.e.grid != self.s.grid:
            raise ValueError("state fields must share one grid")

    @property
    def grid(self) -> Grid:
        return self.e.grid


@dataclass
class StateB:
    """Densities (e, s, c) plus the flow for variant B.

    In 2D the dynamical fluid variable is the vorticity ``omega`` and ``u``
    is its Biot-Savart reconstruction; in 3D ``u`` is evolved directly and
    ``omega`` is None.  Pressure is eliminated by the Leray projection and
    never stored.
    """

    e: ScalarField
    s: ScalarField
    c: ScalarField
    u: VectorField
    omega: ScalarField | None = None
    t: float = 0.0

    def __post_init__(self):
        g = self.e.grid
        for f in (self.s, self.c):
            if f.grid != g:
                raise ValueError("state fields must share one grid")
        if self.u.grid != g:
            raise ValueError("velocity grid mismatch")
        if g.d == 2 and self.omega is None:
            raise ValueError("2D variant B state needs a vorticity field")

    @property
    def grid(self) -> Grid:
        return self.e.grid


class Tendencies:
    """Non-stiff tendencies in spectral form, with lazy real-space views.

    ``diffusivity`` maps each evolved field to the coefficient of its exact
    diffusion semigroup; ``u_force`` carries the projected-buoyancy forcing
    for the 3D Stokes update.
    """

    def __init__(self, grid, hats, diffusivity, u_force=None):
        self.grid = grid
        self.hats = hats
        self.diffusivity = dict(diffusivity)
        self.u_force = u_force
        self._real = {}

    def keys(self):
        return self.hats.keys()

    def field(self, name: str) -> ScalarField:
        if name not in self._real:
            self._real[name] = ScalarField(self.grid, self.grid.inv(self.hats[name]))
        return self._real[name]

    @property
    def nonstiff(self) -> dict:
        return {name: self.field(name) for name in self.hats}


# ---------------------------------------------------------------------------
# individual terms


def reaction(s: ScalarField, e: ScalarField, eps: float, q: float = 2.0) -> ScalarField:
    """Fertilization sink -eps*(s*e)^(q/2); negative inputs clipped to 0 here only."""
    prod = np.maximum(s.values, 0.0) * np.maximum(e.values, 0.0)
    if q == 2.0:
        out = -eps * prod
    else:
        out = -eps * prod ** (q / 2.0)
    return ScalarField(s.grid, out)


def _reaction_raw(svals: np.ndarray, evals: np.ndarray, eps: float, q: float) -> np.ndarray:
    prod = np.maximum(svals, 0.0) * np.maximum(evals, 0.0)
    if q == 2.0:
        return -eps * prod
    return -eps * prod ** (q / 2.0)


def _flux_div_hat(grid: Grid, dens: np.ndarray, drift: np.ndarray) -> np.ndarray:
    """div(dens * drift) in spectral form, 2/3-dealiased product."""
    ph = grid.fwd(dens[None] * drift)
    out = np.zeros(grid.rshape, dtype=complex)
    for j in range(grid.d):
        out += grid.ik[j] * ph[j]
    return np.where(grid.dealias_mask, out, 0.0)


def _dealias_real(grid: Grid, values: np.ndarray) -> np.ndarray:
    return grid.inv(np.where(grid.dealias_mask, grid.fwd(values), 0.0))


def chemo_flux_div_nonlocal(s: ScalarField, e: ScalarField, chi: float) -> ScalarField:
    """chi * div(s grad(Lap^-1 e)), the nonlocal attraction of variant A."""
    g = s.grid
    if e.grid != g:
        raise ValueError("fields must share one grid")
    gh = grad_inv_laplacian_hat(g, e.hat())
    drift = g.inv(np.where(g.dealias_mask, gh, 0.0))
    dens = _dealias_real(g, s.values)
    return ScalarField(g, chi * g.inv(_flux_div_hat(g, dens, drift)))


def chemo_flux_div_local(s: ScalarField, c: ScalarField, chi: float) -> ScalarField:
    """-chi * div(s grad c), the signal-gradient attraction of variant B."""
    g = s.grid
    if c.grid != g:
        raise ValueError("fields must share one grid")
    ch = c.hat()
    gh = np.stack([ik * ch for ik in g.ik])
    drift = g.inv(np.where(g.dealias_mask, gh, 0.0))
    dens = _dealias_real(g, s.values)
    return ScalarField(g, -chi * g.inv(_flux_div_hat(g, dens, drift)))


def solenoidality_error(u: VectorField) -> float:
    """max |div u| scaled by the largest resolvable derivative of u."""
    g = u.grid
    uh = g.fwd(u.stacked())
    div = np.zeros(g.rshape, dtype=complex)
    for j in range(g.d):
        div += g.ik[j] * uh[j]
    dmax = float(np.max(np.abs(g.inv(div))))
    scale = u.max_speed() * (np.pi / g.h)
    return dmax / scale if scale > 0 else dmax


def advect(f: ScalarField, u: VectorField, check: bool = True) -> ScalarField:
    """Transport tendency -(u.grad)f, computed conservatively as -div(u f)."""
    g = f.grid
    if u.grid != g:
        raise ValueError("fields must share one grid")
    if check:
        err = solenoidality_error(u)
        if err > 1e-8:
            raise ValueError(f"advecting velocity is not solenoidal (error {err:.3e})")
    dens = _dealias_real(g, f.values)
    drift = g.inv(np.where(g.dealias_mask, g.fwd(u.stacked()), 0.0))
    return ScalarField(g, -g.inv(_flux_div_hat(g, dens, drift)))


def buoyancy_force(s: ScalarField, e: ScalarField, phi: PotentialSpec) -> VectorField:
    """Pointwise -(s+e)*grad(phi) with the analytic potential gradient."""
    g = s.grid
    gp = phi.grad(g)
    tot = -(s.values + e.values)
    return VectorField.from_arrays(g, [tot * c.values for c in gp.components])


# ---------------------------------------------------------------------------
# assembled right-hand sides


def _advect_hat(grid, u_real, f_real):
    """Spectral -div(u f); u and f are assumed already band-limited."""
    return -_flux_div_hat(grid, f_real, u_real)


def rhs(state, params: ModelParams, u_given: VectorField | None = None,
        _hats: dict | None = None) -> Tendencies:
    """Assemble non-stiff tendencies for one state of the given variant.

    ``u_given`` prescribes the transporting velocity for SINGLE/KR/A (None
    means no flow); variant B ignores it and uses the state's own velocity.
    Pass ``_hats`` to reuse precomputed half-spectra of the state fields.
    """
    variant = params.variant
    if variant == "B":
        if not isinstance(state, StateB):
            raise TypeError(f"variant B needs a StateB, got {type(state).__name__}")
        if u_given is not None:
            raise ValueError("variant B evolves its own velocity")
        return _rhs_b(state, params, _hats)
    if variant == "SINGLE":
        if not isinstance(state, StateSingle):
            raise TypeError(f"variant SINGLE needs a StateSingle, got {type(state).__name__}")
        return _rhs_single(state, params, u_given, _hats)
    if not isinstance(state, StateA):
        raise TypeError(f"variant {variant} needs a StateA, got {type(state).__name__}")
    return _rhs_kr_a(state, params, u_given, _hats)


def _velocity_arrays(grid, u):
    if u is None:
        return None
    if u.grid != grid:
        raise ValueError("velocity grid mismatch")
    return u.stacked()


def _rhs_single(state, params, u_given, hats):
    g = state.n.grid
    nh = hats["n"] if hats else g.fwd(state.n.values)
    tend = np.zeros(g.rshape, dtype=complex)
    uvals = _velocity_arrays(g, u_given)
    if uvals is not None:
        tend += _advect_hat(g, uvals, state.n.values)
    if params.chi != 0.0:
        drift = g.inv(np.where(g.dealias_mask, grad_inv_laplacian_hat(g, nh), 0.0))
        tend += params.chi * _flux_div_hat(g, state.n.values, drift)
    if params.eps != 0.0:
        r = _reaction_raw(state.n.values, state.n.values, params.eps, params.q)
        tend += np.where(g.dealias_mask, g.fwd(r), 0.0)
    return Tendencies(g, {"n": tend}, {"n": 1.0})


def _rhs_kr_a(state, params, u_given, hats):
    g = state.grid
    eh = hats["e"] if hats else g.fwd(state.e.values)
    te = np.zeros(g.rshape, dtype=complex)
    ts = np.zeros(g.rshape, dtype=complex)
    uvals = _velocity_arrays(g, u_given)
    if uvals is not None:
        te += _advect_hat(g, uvals, state.e.values)
        ts += _advect_hat(g, uvals, state.s.values)
    if params.variant == "A" and params.chi != 0.0:
        drift = g.inv(np.where(g.dealias_mask, grad_inv_laplacian_hat(g, eh), 0.0))
        ts += params.chi * _flux_div_hat(g, state.s.values, drift)
    if params.eps != 0.0:
        rh = np.where(
            g.dealias_mask,
            g.fwd(_reaction_raw(state.s.values, state.e.values, params.eps, params.q)),
            0.0,
        )
        te += rh
        ts += rh
    if params.variant == "A":
        diff = {"e": 1.0, "s": 1.0}
    else:
        diff = {"e": params.kappa2, "s": params.kappa1}
    return Tendencies(g, {"e": te, "s": ts}, diff)


def _rhs_b(state, params, hats):
    from . import fluid  # local import to avoid a cycle

    g = state.grid
    eh = hats["e"] if hats else g.fwd(state.e.values)
    ch = hats["c"] if hats else g.fwd(state.c.values)
    uvals = state.u.stacked()

    te = _advect_hat(g, uvals, state.e.values)
    ts = _advect_hat(g, uvals, state.s.values)
    tc = _advect_hat(g, uvals, state.c.values) + eh
    if params.chi != 0.0:
        gh = np.stack([ik * ch for ik in g.ik])
        drift = g.inv(np.where(g.dealias_mask, gh, 0.0))
        ts -= params.chi * _flux_div_hat(g, state.s.values, drift)
    if params.eps != 0.0:
        rh = np.where(
            g.dealias_mask,
            g.fwd(_reaction_raw(state.s.values, state.e.values, params.eps, params.q)),
            0.0,
        )
        te += rh
        ts += rh

    hats_out = {"e": te, "s": ts, "c": tc}
    diff = {"e": 1.0, "s": 1.0, "c": 1.0}
    force = buoyancy_force(state.s, state.e, params.phi)
    u_force = None
    if g.d == 2:
        hats_out["omega"] = fluid.ns2d_rhs_hat(g, state.omega.values, uvals, force)
        diff["omega"] = 1.0
    else:
        u_force = force
    return Tendencies(g, hats_out, diff, u_force=u_force)
