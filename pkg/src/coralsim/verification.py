"""Oracles and experiment recipes that turn the model's claimed identities
into runnable checks: the heat-semigroup oracle, paired-run scaling
invariance, step-halving convergence order, chi sweeps, mass-plateau runs,
decay-exponent fits, and an independent finite-difference evaluation of the
right-hand sides.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import config as _config
from . import diagnostics, integrator, model
from .model import ModelParams, StateA, StateB, StateSingle
from .spectral import Grid, ScalarField, VectorField, laplacian

__all__ = [
    "ExperimentSpec",
    "heat_exact",
    "collect_states",
    "check_scaling",
    "convergence_order",
    "ConvergenceResult",
    "chi_sweep",
    "SweepRow",
    "rhs_fd_oracle",
    "rhs_total",
]

EXPERIMENT_KINDS = (
    "HEAT_ORACLE", "SCALING", "CONVERGENCE", "DECAY",
    "MASS_PLATEAU", "CHI_SWEEP", "SMALL_DATA_2D",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """An experiment kind bound to a base config and its knobs."""

    kind: str
    config: _config.RunConfig
    lam: int = 2
    dt_list: tuple = ()
    chi_list: tuple = ()
    fit_specs: tuple = ()  # (column, t0, t1) triples
    eps1: float = 0.05

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.kind == "SCALING" and (self.lam < 1 or int(self.lam) != self.lam):
            raise ValueError("scaling experiments need an integer lam >= 1")
        if self.kind == "CONVERGENCE" and len(self.dt_list) < 3:
            raise ValueError("convergence experiments need at least 3 dt values")
        if self.kind == "CHI_SWEEP":
            if not self.chi_list or list(self.chi_list) != sorted(self.chi_list):
                raise ValueError("chi sweeps need an increasing chi list")
        if self.kind in ("DECAY", "SMALL_DATA_2D") and not self.fit_specs:
            raise ValueError("decay experiments need fit windows")
        if self.kind == "SMALL_DATA_2D" and not (0 < self.eps1):
            raise ValueError("eps1 must be positive")


def heat_exact(f0: ScalarField, t: float) -> ScalarField:
    """Exact heat flow on the torus: each mode damped by exp(-|k|^2 t)."""
    if t < 0:
        raise ValueError("heat_exact needs t >= 0")
    g = f0.grid
    return ScalarField(g, g.inv(np.exp(-g.k2 * t) * f0.hat()))


# ---------------------------------------------------------------------------
# paired-run experiments


def collect_states(cfg, times) -> dict:
    """Run a config with fixed dt and capture field arrays at given times.

    The requested times are imposed through the snapshot schedule, so the
    integrator lands on them exactly.
    """
    times = sorted(set(float(t) for t in times))
    if not times or times[0] <= 0:
        raise ValueError("collect_states needs strictly positive times")
    interval = times[0]
    for t in times:
        if abs(t / interval - round(t / interval)) > 1e-9:
            raise ValueError("collect_states times must be multiples of the first")
    captured = {}

    def sink(t, fields):
        for want in times:
            if abs(t - want) <= 1e-9 * max(1.0, want):
                captured[want] = {nm: f.values.copy() for nm, f in fields.items()}
        return None

    run_cfg = cfg.replace(snapshot_interval=interval,
                          record_interval=max(cfg.t_end, interval))
    integrator.run(run_cfg, snapshot_sink=sink)
    missing = [t for t in times if t not in captured]
    if missing:
        raise RuntimeError(f"runs did not land on checkpoint times {missing}")
    return captured


_SCALE_POWER = {"e": 2, "s": 2, "c": 0, "omega": 2, "u_x": 1, "u_y": 1, "u_z": 1}


def _scaled_ic(ic: _config.ICSpec, lam: int, power: int) -> _config.ICSpec:
    if ic.kind == "file":
        raise ValueError("scaling experiments cannot rescale file initial data")
    factor = float(lam) ** power
    return replace(
        ic,
        amplitude=ic.amplitude * factor,
        offset=ic.offset * factor,
        center=tuple(c / lam for c in ic.center),
        width=ic.width / lam,
    )


def check_scaling(cfg, lam: int, n_checkpoints: int = 4) -> dict:
    """Max relative deviation between a run and its parabolically rescaled twin.

    Run A uses N*lam points on the original domain; run B uses N points on
    the domain shrunk by lam, the initial data and potential rescaled, and
    dt/lam^2.  At matched effective resolution the two trajectories sample
    the same solution up to time-stepping error.
    """
    if cfg.variant != "B":
        raise ValueError("scaling checks are defined for variant B configs")
    if cfg.dt is None:
        raise ValueError("scaling checks need a fixed dt")
    lam = int(lam)
    if lam < 1:
        raise ValueError("lam must be a positive integer")

    times_a = [cfg.t_end * (i + 1) / n_checkpoints for i in range(n_checkpoints)]
    cfg_a = cfg.replace(N=cfg.N * lam)
    states_a = collect_states(cfg_a, times_a)

    ics_b = {nm: _scaled_ic(ic, lam, _SCALE_POWER.get(nm, 0))
             for nm, ic in cfg.ics.items()}
    lam2 = float(lam) ** 2
    cfg_b = cfg.replace(
        L=cfg.L / lam, dt=cfg.dt / lam2, t_end=cfg.t_end / lam2, ics=ics_b,
    )
    states_b = collect_states(cfg_b, [t / lam2 for t in times_a])

    worst = 0.0
    per_field = {}
    stride = (slice(None, None, lam),) * cfg.d
    for t_a in times_a:
        fields_a = states_a[t_a]
        fields_b = states_b[t_a / lam2]
        for nm, arr_b in fields_b.items():
            ref = fields_a[nm][stride] * float(lam) ** _SCALE_POWER.get(nm, 0)
            scale = float(np.max(np.abs(ref)))
            diff = float(np.max(np.abs(arr_b - ref)))
            dev = diff / scale if scale > 0 else (0.0 if diff == 0.0 else math.inf)
            per_field[nm] = max(per_field.get(nm, 0.0), dev)
            worst = max(worst, dev)
    return {"max_dev": worst, "per_field": per_field, "checkpoints": times_a}


@dataclass(frozen=True)
class ConvergenceResult:
    dts: tuple
    errors: tuple
    orders: tuple
    order: float
    status: str  # "ok", "exact", or "inconclusive"


def _final_primary_field(cfg) -> np.ndarray:
    name = "n" if cfg.variant == "SINGLE" else "e"
    states = collect_states(cfg, [cfg.t_end])
    return states[cfg.t_end][name]


def convergence_order(cfg, dt_list) -> ConvergenceResult:
    """Richardson-style temporal order from successive L2 differences at t_end."""
    dts = tuple(float(dt) for dt in dt_list)
    if len(dts) < 3:
        raise ValueError("need at least 3 dt values")
    if list(dts) != sorted(dts, reverse=True):
        raise ValueError("dt list must be strictly decreasing")
    grid = _config.build_grid(cfg)
    finals = [_final_primary_field(cfg.replace(dt=dt)) for dt in dts]
    errors = tuple(
        diagnostics.lp_norm(ScalarField(grid, a - b), 2)
        for a, b in zip(finals, finals[1:])
    )
    scale = max(diagnostics.lp_norm(ScalarField(grid, finals[-1]), 2), 1.0)
    if max(errors) <= 1e-12 * scale:
        return ConvergenceResult(dts, errors, (), math.inf, "exact")
    if any(e2 >= e1 for e1, e2 in zip(errors, errors[1:])):
        return ConvergenceResult(dts, errors, (), math.nan, "inconclusive")
    orders = tuple(
        math.log(e1 / e2) / math.log(d1 / d2)
        for (e1, e2), (d1, d2) in zip(zip(errors, errors[1:]), zip(dts, dts[1:]))
    )
    return ConvergenceResult(dts, errors, orders, sum(orders) / len(orders), "ok")


@dataclass(frozen=True)
class SweepRow:
    chi: float
    m_s_end: float
    m_e_end: float
    plateau: bool
    rel_change_s: float
    rel_change_e: float
    mass_diff_drift: float


def _mass_metrics(history) -> dict:
    recs = history.records
    t_end = recs[-1].t
    half = [r for r in recs if r.t >= 0.5 * t_end]
    out = {}
    for nm in ("m_s", "m_e"):
        vals = [getattr(r, nm) for r in half]
        final = vals[-1]
        spread = max(vals) - min(vals)
        out[f"rel_change_{nm[-1]}"] = spread / max(abs(final), np.finfo(float).tiny)
        out[nm] = final
    drift = max(abs(r.mass_diff - recs[0].mass_diff) for r in recs)
    out["mass_diff_drift"] = drift / max(recs[0].m_s, 1.0)
    return out


def _sweep_member(cfg, chi: float) -> SweepRow:
    history = integrator.run(cfg.replace(chi=chi))
    m = _mass_metrics(history)
    plateau = m["rel_change_s"] <= 0.01 and m["rel_change_e"] <= 0.01
    return SweepRow(chi=chi, m_s_end=m["m_s"], m_e_end=m["m_e"], plateau=plateau,
                    rel_change_s=m["rel_change_s"], rel_change_e=m["rel_change_e"],
                    mass_diff_drift=m["mass_diff_drift"])


def chi_sweep(cfg, chi_list, threads: int = 1) -> list:
    """Run the config once per chi and tabulate the limiting masses.

    Members run concurrently when threads > 1; rows come back in chi order
    either way, so the table is independent of the thread count.
    """
    if cfg.d != 3 or cfg.variant not in ("A", "B"):
        raise ValueError("chi sweeps are defined for 3D variant A or B configs")
    chis = [float(c) for c in chi_list]
    if chis != sorted(chis):
        raise ValueError("chi list must be increasing")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_member, cfg, chi) for chi in chis]
            return [f.result() for f in futures]
    return [_sweep_member(cfg, chi) for chi in chis]


# ---------------------------------------------------------------------------
# independent finite-difference evaluation of the right-hand sides


def _fd_diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2.0 * h)


def _fd_lap(a: np.ndarray, h: float) -> np.ndarray:
    out = -2.0 * a.ndim * a
    for ax in range(a.ndim):
        out = out + np.roll(a, -1, ax) + np.roll(a, 1, ax)
    return out / h**2


def _fd_poisson(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Exact solve of the 5/7-point periodic Poisson system via its eigenvalues."""
    eig = np.zeros(grid.rshape)
    for n in grid._n_int:
        eig = eig + np.sin(np.pi * n / grid.N) ** 2
    eig *= -4.0 / grid.h**2
    eig.flat[0] = 1.0
    sol = grid.fwd(rhs) / eig
    sol.flat[0] = 0.0
    return grid.inv(sol)


def _fd_div(comps, h: float) -> np.ndarray:
    out = np.zeros_like(comps[0])
    for ax, c in enumerate(comps):
        out = out + _fd_diff(c, ax, h)
    return out


def rhs_fd_oracle(state, params: ModelParams,
                  u_given: VectorField | None = None) -> dict:
    """Second-order centered finite-difference total tendencies.

    Independent discretization of the same equations (including the stencil
    Poisson solve standing in for the spectral inverse Laplacian); used only
    by tests to cross-validate model.rhs + exact diffusion.
    """
    grid = state.n.grid if isinstance(state, StateSingle) else state.grid
    limit = 64 if grid.d == 2 else 48
    if grid.N > limit:
        raise ValueError(f"the finite-difference oracle is limited to N <= {limit} in {grid.d}D")
    h = grid.h

    def adv(fv, uvals):
        if uvals is None:
            return 0.0
        return -_fd_div([uc * fv for uc in uvals], h)

    def grad(fv):
        return [_fd_diff(fv, ax, h) for ax in range(grid.d)]

    out = {}
    if isinstance(state, StateSingle):
        n = state.n.values
        uvals = None if u_given is None else [c.values for c in u_given.components]
        tend = adv(n, uvals) + _fd_lap(n, h)
        if params.chi != 0.0:
            drift = grad(_fd_poisson(grid, n))
            tend = tend + params.chi * _fd_div([n * dc for dc in drift], h)
        tend = tend + _reaction(n, n, params)
        out["n"] = ScalarField(grid, tend)
        return out

    e, s = state.e.values, state.s.values
    if isinstance(state, StateB):
        uvals = [c.values for c in state.u.components]
    else:
        uvals = None if u_given is None else [c.values for c in u_given.components]
    react = _reaction(s, e, params)
    if params.variant == "KR":
        ke, ks = params.kappa2, params.kappa1
    else:
        ke = ks = 1.0
    te = adv(e, uvals) + ke * _fd_lap(e, h) + react
    ts = adv(s, uvals) + ks * _fd_lap(s, h) + react
    if params.variant == "A" and params.chi != 0.0:
        drift = grad(_fd_poisson(grid, e))
        ts = ts + params.chi * _fd_div([s * dc for dc in drift], h)
    if params.variant == "B" and params.chi != 0.0:
        drift = grad(state.c.values)
        ts = ts - params.chi * _fd_div([s * dc for dc in drift], h)
    out["e"] = ScalarField(grid, te)
    out["s"] = ScalarField(grid, ts)
    if isinstance(state, StateB):
        cv = state.c.values
        out["c"] = ScalarField(grid, adv(cv, uvals) + _fd_lap(cv, h) + e)
        if grid.d == 2:
            om = state.omega.values
            force = model.buoyancy_force(state.s, state.e, params.phi)
            fx, fy = (c.values for c in force.components)
            curl = _fd_diff(fy, 0, h) - _fd_diff(fx, 1, h)
            out["omega"] = ScalarField(grid, adv(om, uvals) + _fd_lap(om, h) + curl)
    return out


def _reaction(svals, evals, params):
    if params.eps == 0.0:
        return 0.0
    prod = np.maximum(svals, 0.0) * np.maximum(evals, 0.0)
    if params.q == 2.0:
        return -params.eps * prod
    return -params.eps * prod ** (params.q / 2.0)


def rhs_total(state, params: ModelParams,
              u_given: VectorField | None = None) -> dict:
    """model.rhs non-stiff tendencies plus exact-diffusion terms, per field."""
    tend = model.rhs(state, params, u_given)
    out = {}
    for name in tend.keys():
        f = getattr(state, name)
        kap = tend.diffusivity[name]
        total = tend.field(name).values + kap * laplacian(f).values
        out[name] = ScalarField(tend.grid, total)
    return out
