"""Time advancement of all model variants.

One step is an integrating-factor Heun rule: diffusion is applied through
the exact per-mode multipliers exp(-kappa |k|^2 dt) while the non-stiff
terms (advection, chemotaxis, reaction, forcing) enter a two-stage
second-order explicit rule.  With every non-stiff term switched off the
step reproduces the heat semigroup to machine precision.  The 3D Stokes
velocity of variant B is advanced by its own exact semigroup formula with
the buoyancy force sampled at the step start.

Evolved fields are never clipped: positivity undershoot beyond the control
tolerance is recorded and reported, not silently repaired, so the discrete
mass identities stay exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, fluid, model
from .model import ModelParams, StateA, StateB, StateSingle
from .spectral import Grid, ScalarField, VectorField

__all__ = [
    "StepControl",
    "SimHistory",
    "IntegrationError",
    "step",
    "cfl_dt",
    "run",
]


class IntegrationError(RuntimeError):
    """Fatal integration failure, carrying the time at which it happened."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t


@dataclass(frozen=True)
class StepControl:
    """Step-size and positivity-monitoring knobs."""

    cfl: float = 0.4
    dt_max: float = 0.1
    dt_min: float = 1e-9
    tol_neg: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError("cfl must lie in (0, 1]")
        if not (0.0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.tol_neg < 0.0:
            raise ValueError("tol_neg must be >= 0")


DEFAULT_CONTROL = StepControl()


@dataclass
class SimHistory:
    """Diagnostic time series plus snapshot manifest for one run."""

    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, path or None)
    breaches: list = field(default_factory=list)   # times of positivity breach

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def flagged(self) -> bool:
        return bool(self.breaches)

    def series(self, column: str) -> tuple:
        """(times, values) for one diagnostic column, skipping absent cells."""
        ts, vs = [], []
        for r in self.records:
            v = r.get(column)
            if v is not None:
                ts.append(r.t)
                vs.append(v)
        return np.array(ts), np.array(vs)


def _scalar_names(state) -> tuple:
    if isinstance(state, StateSingle):
        return ("n",)
    if isinstance(state, StateA):
        return ("e", "s")
    if isinstance(state, StateB):
        return ("e", "s", "c", "omega") if state.grid.d == 2 else ("e", "s", "c")
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _state_fields(state, names) -> dict:
    return {nm: getattr(state, nm) for nm in names}


def _density_names(state) -> tuple:
    if isinstance(state, StateSingle):
        return ("n",)
    if isinstance(state, StateA):
        return ("e", "s")
    return ("e", "s", "c")


def _rebuild(state, grid, reals, t, u=None):
    if isinstance(state, StateSingle):
        return StateSingle(n=ScalarField(grid, reals["n"]), t=t)
    if isinstance(state, StateA):
        return StateA(e=ScalarField(grid, reals["e"]), s=ScalarField(grid, reals["s"]), t=t)
    omega = ScalarField(grid, reals["omega"]) if "omega" in reals else None
    return StateB(
        e=ScalarField(grid, reals["e"]),
        s=ScalarField(grid, reals["s"]),
        c=ScalarField(grid, reals["c"]),
        u=u,
        omega=omega,
        t=t,
    )


def step(state, params: ModelParams, dt: float,
         u_given: VectorField | None = None,
         control: StepControl = DEFAULT_CONTROL):
    """Advance one state by dt; returns a new state, inputs untouched."""
    if dt <= 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    grid = state.grid if not isinstance(state, StateSingle) else state.n.grid
    params.check_dimension(grid.d)
    names = _scalar_names(state)

    hats = getattr(state, "_hats", None)
    if hats is None:
        hats = {nm: grid.fwd(getattr(state, nm).values) for nm in names}

    tend1 = model.rhs(state, params, u_given, _hats=hats)

    decay = {}
    for nm in names:
        kap = tend1.diffusivity[nm]
        if kap not in decay:
            decay[kap] = np.exp(-kap * grid.k2 * dt)

    eh, en1, star_hats = {}, {}, {}
    for nm in names:
        E = decay[tend1.diffusivity[nm]]
        eh[nm] = E * hats[nm]
        en1[nm] = E * tend1.hats[nm]
        star_hats[nm] = eh[nm] + dt * en1[nm]

    t_new = state.t + dt

    # velocity at the end of the step, for the second advection stage
    u_star = u_given
    u_new_hat = None
    if isinstance(state, StateB):
        if grid.d == 2:
            u_star_hat = fluid.biot_savart2d_hat(grid, star_hats["omega"])
            u_star = VectorField.from_arrays(grid, grid.inv(u_star_hat))
        else:
            uh = getattr(state, "_u_hat", None)
            if uh is None:
                uh = grid.fwd(state.u.stacked())
            fh = grid.fwd(tend1.u_force.stacked())
            fh = np.where(grid.dealias_mask, fh, 0.0)
            u_new_hat = fluid.stokes3d_step_hat(grid, uh, fh, dt)
            u_star = VectorField.from_arrays(grid, grid.inv(u_new_hat))
        u_given2 = None
    else:
        u_given2 = u_given

    try:
        star_reals = {nm: grid.inv(star_hats[nm]) for nm in names}
        star_state = _rebuild(state, grid, star_reals, t_new, u=u_star)
    except ValueError as exc:
        raise IntegrationError(f"non-finite field in predictor stage: {exc}", t_new) from exc
    star_state._hats = star_hats

    tend2 = model.rhs(star_state, params, u_given2, _hats=star_hats)

    new_hats = {}
    for nm in names:
        new_hats[nm] = eh[nm] + 0.5 * dt * (en1[nm] + tend2.hats[nm])

    u_new = u_star if isinstance(state, StateB) and grid.d == 3 else None
    if isinstance(state, StateB) and grid.d == 2:
        u_new_hat = fluid.biot_savart2d_hat(grid, new_hats["omega"])
        u_new = VectorField.from_arrays(grid, grid.inv(u_new_hat))

    try:
        new_reals = {nm: grid.inv(new_hats[nm]) for nm in names}
        new_state = _rebuild(state, grid, new_reals, t_new, u=u_new)
    except ValueError as exc:
        raise IntegrationError(f"non-finite field after step: {exc}", t_new) from exc
    new_state._hats = new_hats
    if isinstance(state, StateB) and grid.d == 3:
        new_state._u_hat = u_new_hat
    return new_state


def positivity_deficit(state, control: StepControl = DEFAULT_CONTROL):
    """Worst undershoot of the density fields relative to tol_neg.

    Returns (breached, worst) where worst is max(-min(f)/max(|f|)) over the
    density fields; breached is True when it exceeds control.tol_neg.
    """
    worst = 0.0
    for nm in _density_names(state):
        v = getattr(state, nm).values
        lo = float(v.min())
        if lo < 0.0:
            scale = max(float(np.abs(v).max()), np.finfo(float).tiny)
            worst = max(worst, -lo / scale)
    return worst > control.tol_neg, worst


def cfl_dt(state, params: ModelParams, control: StepControl,
           u_given: VectorField | None = None) -> float:
    """dt = clamp(cfl * h / V) with V the peak advective + chemotactic speed."""
    grid = state.grid if not isinstance(state, StateSingle) else state.n.grid
    speed = 0.0
    u = state.u if isinstance(state, StateB) else u_given
    if u is not None:
        speed += u.max_speed()
    if params.chi != 0.0:
        if isinstance(state, StateB):
            drift_hat = np.stack([ik * grid.fwd(state.c.values) for ik in grid.ik])
        else:
            f = state.n if isinstance(state, StateSingle) else state.e
            from .spectral import grad_inv_laplacian_hat

            drift_hat = grad_inv_laplacian_hat(grid, grid.fwd(f.values))
        drift = grid.inv(drift_hat)
        speed += abs(params.chi) * float(np.sqrt(np.max(np.sum(drift**2, axis=0))))
    if not np.isfinite(speed):
        raise IntegrationError("advective speed is not finite", state.t)
    if speed <= 0.0:
        return control.dt_max
    dt = control.cfl * grid.h / speed
    return min(control.dt_max, max(control.dt_min, dt))


def smallness_product(cfg) -> float:
    """chi^2 ||s0||_1^2 ||grad phi||_inf^2, the 3D variant-B gate quantity."""
    from . import config as _config

    grid = _config.build_grid(cfg)
    s0 = _config.build_scalar(cfg, grid, "s")
    m = np.asarray(cfg.phi_mode, dtype=float)
    grad_phi_max = abs(cfg.phi_amplitude) * (2.0 * np.pi / cfg.L) * float(np.linalg.norm(m))
    s1 = diagnostics.lp_norm(s0, 1)
    return cfg.chi**2 * s1**2 * grad_phi_max**2


def run(cfg, snapshot_sink=None) -> SimHistory:
    """Integrate a configured run from t=0 to t_end, recording diagnostics.

    snapshot_sink(t, fields) is called at every snapshot time with the
    ordered field dict; its return value (a path, or None) lands in the
    snapshot manifest.  Deterministic: identical configs produce identical
    histories bit for bit.
    """
    from . import config as _config

    grid = _config.build_grid(cfg)
    params = _config.build_params(cfg)
    params.check_dimension(grid.d)
    state = _config.build_initial_state(cfg)
    u_given = None
    if cfg.variant != "B":
        u_given = _config.build_prescribed_velocity(cfg, grid)
    control = _config.build_control(cfg)

    if cfg.variant == "B" and cfg.d == 3:
        product = smallness_product(cfg)
        if product > cfg.smallness_threshold:
            warnings.warn(
                f"3D smallness gate exceeded: chi^2 ||s0||_1^2 ||grad phi||_inf^2 = "
                f"{product:.3e} > {cfg.smallness_threshold:.3e}; proceeding anyway",
                stacklevel=2,
            )

    history = SimHistory()
    extras = cfg.extra_norms

    def record(st):
        history.records.append(diagnostics.compute_record(st, params, extras))
        m = history.records[-1]
        if not all(np.isfinite(v) for v in (m.m_e, m.m_s) if v is not None):
            raise IntegrationError("non-finite mass in diagnostics", st.t)

    def snapshot(st):
        fields = _config.snapshot_fields(st)
        path = snapshot_sink(st.t, fields) if snapshot_sink is not None else None
        history.snapshots.append((st.t, path))

    record(state)
    snap_int = cfg.snapshot_interval
    if snap_int > 0:
        snapshot(state)

    t_end = cfg.t_end
    rec_int = cfg.record_interval
    rec_i = 1
    snap_i = 1
    tol = 1e-12 * max(1.0, abs(t_end))

    while state.t < t_end - tol:
        dt_nom = cfg.dt if cfg.dt is not None else cfl_dt(state, params, control, u_given)
        targets = [t_end, rec_i * rec_int]
        if snap_int > 0:
            targets.append(snap_i * snap_int)
        t_stop = min(targets)
        hit = dt_nom >= t_stop - state.t
        dt = t_stop - state.t if hit else dt_nom
        state = step(state, params, dt, u_given, control)
        if hit:
            state.t = t_stop
        breached, worst = positivity_deficit(state, control)
        if breached:
            history.breaches.append(state.t)
        if state.t >= rec_i * rec_int - tol:
            record(state)
            rec_i += 1
        if snap_int > 0 and state.t >= snap_i * snap_int - tol:
            snapshot(state)
            snap_i += 1

    if history.records[-1].t < t_end - tol:
        record(state)
    return history
