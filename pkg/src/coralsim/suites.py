"""Canned desk-scale verification suites.

Each suite builds its configs, runs the experiment machinery, and returns a
SuiteResult with one pass/fail line per claim it checks.  The acceptance
test module and the ``coralsim verify`` subcommand both dispatch here, so a
criterion is pinned in exactly one place.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as _config
from . import diagnostics, integrator, model, output, verification
from .config import ICSpec, default_config, with_ic
from .spectral import ScalarField

__all__ = ["SuiteResult", "SUITES", "run_suite"]


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    metrics: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)

    def check(self, label: str, ok: bool, detail: str = "") -> bool:
        mark = "PASS" if ok else "FAIL"
        self.lines.append(f"{mark} {self.name}: {label}" + (f" ({detail})" if detail else ""))
        self.passed = self.passed and ok
        return ok


def _gauss(center, width, amplitude) -> ICSpec:
    return ICSpec(kind="gaussian", amplitude=amplitude, center=center, width=width)


def _center(L, d, dx=0.0, dy=0.0, dz=0.0):
    c = [L / 2.0 + dx, L / 2.0 + dy]
    if d == 3:
        c.append(L / 2.0 + dz)
    return tuple(c)


# ---------------------------------------------------------------------------
# mass identities (criteria: conservation of the mass difference, monotone
# total masses, and the signal-mass budget)


def _mass_configs():
    L2 = 4.0 * math.pi
    c_e = _center(L2, 2, dx=-0.75)
    c_s = _center(L2, 2, dx=+0.75)
    base2 = dict(chi=1.0, eps=1.0, dt=0.002, record_interval=0.002)
    cfg_a = default_config(
        "A", 2, 128, L2, 10.0, **base2,
        ics={"e": _gauss(c_e, 0.8, 0.25), "s": _gauss(c_s, 0.8, 0.35)},
    )
    cfg_b2 = default_config(
        "B", 2, 128, L2, 10.0, **base2,
        phi_amplitude=0.5, phi_mode=(1, 1),
        ics={
            "e": _gauss(c_e, 0.8, 0.25),
            "s": _gauss(c_s, 0.8, 0.35),
            "c": _gauss(_center(L2, 2), 1.0, 0.1),
            "omega": _gauss(_center(L2, 2, dy=0.9), 1.0, 0.3),
        },
    )
    L3 = 4.0 * math.pi
    cfg_b3 = default_config(
        "B", 3, 48, L3, 10.0, chi=1.0, eps=1.0, dt=0.002,
        record_interval=0.004, phi_amplitude=0.5, phi_mode=(1, 1, 0),
        ics={
            "e": _gauss(_center(L3, 3, dx=-0.75), 0.8, 0.12),
            "s": _gauss(_center(L3, 3, dx=+0.75), 0.8, 0.17),
            "c": _gauss(_center(L3, 3), 1.0, 0.05),
        },
    )
    return [("variant A 2D 128^2", cfg_a), ("variant B 2D 128^2", cfg_b2),
            ("variant B 3D 48^3", cfg_b3)]


def _check_mass_run(res: SuiteResult, label: str, cfg, history) -> None:
    recs = history.records
    m_s0 = recs[0].m_s
    diff0 = recs[0].mass_diff
    drift = max(abs(r.mass_diff - diff0) for r in recs) / max(m_s0, 1.0)
    res.metrics[f"mass_diff_drift[{label}]"] = drift
    res.check(f"mass-difference conserved, {label}", drift <= 1e-6,
              f"drift {drift:.3e} <= 1e-6")

    worst_rise = 0.0
    for prev, cur in zip(recs, recs[1:]):
        for nm in ("m_e", "m_s"):
            a, b = getattr(prev, nm), getattr(cur, nm)
            rise = (b - a) / max(abs(a), np.finfo(float).tiny)
            worst_rise = max(worst_rise, rise)
    res.metrics[f"worst_mass_rise[{label}]"] = worst_rise
    res.check(f"masses nonincreasing, {label}", worst_rise <= 1e-9,
              f"worst relative rise {worst_rise:.3e} <= 1e-9")

    if cfg.variant == "B":
        ts = np.array([r.t for r in recs])
        me = np.array([r.m_e for r in recs])
        mc = np.array([r.m_c for r in recs])
        integral = np.trapezoid(me, ts)
        budget = abs(mc[-1] - mc[0] - integral) / max(abs(mc[-1]), 1.0)
        res.metrics[f"c_mass_budget[{label}]"] = budget
        res.check(f"c-mass budget, {label}", budget <= 1e-6,
                  f"|m_c(T)-m_c(0)-int m_e| rel {budget:.3e} <= 1e-6")


def suite_mass(threads: int = 1) -> SuiteResult:
    res = SuiteResult("mass")
    for label, cfg in _mass_configs():
        t0 = time.perf_counter()
        history = integrator.run(cfg)
        res.metrics[f"runtime_s[{label}]"] = time.perf_counter() - t0
        _check_mass_run(res, label, cfg, history)
    return res


# ---------------------------------------------------------------------------
# heat-semigroup oracle


def suite_heat(threads: int = 1) -> SuiteResult:
    res = SuiteResult("heat")
    for d, N in ((2, 128), (3, 32)):
        L = 2.0 * math.pi
        cfg = default_config(
            "A", d, N, L, 1.0, chi=0.0, eps=0.0, dt=0.01,
            ics={"e": _gauss(_center(L, d), 0.5, 1.0),
                 "s": _gauss(_center(L, d, dx=0.4), 0.45, 0.7)},
        )
        state0 = _config.build_initial_state(cfg)
        final = verification.collect_states(cfg, [cfg.t_end])[cfg.t_end]
        worst = 0.0
        for nm, f0 in (("e", state0.e), ("s", state0.s)):
            exact = verification.heat_exact(f0, cfg.t_end).values
            dev = np.max(np.abs(final[nm] - exact)) / np.max(np.abs(exact))
            worst = max(worst, dev)
        res.metrics[f"heat_dev_{d}d"] = worst
        res.check(f"diffusion-only run matches heat_exact in {d}D", worst <= 1e-10,
                  f"relative L-inf deviation {worst:.3e} <= 1e-10")
    return res


# ---------------------------------------------------------------------------
# temporal convergence order


def _order_config():
    L = 4.0 * math.pi
    cfg = default_config(
        "A", 2, 64, L, 0.5, chi=1.0, eps=1.0,
        ics={
            "e": ICSpec(kind="cosine_mode", amplitude=0.4, offset=0.5,
                        mode=(1, 2), center=(L / 2, L / 2)),
            "s": ICSpec(kind="cosine_mode", amplitude=0.3, offset=0.6,
                        mode=(2, 1), center=(L / 3, L / 2)),
            "u": ICSpec(kind="cosine_mode", amplitude=0.3, mode=(0, 1),
                        direction=0, center=(L / 2, L / 2)),
        },
        dt=0.025,
    )
    return cfg


def suite_order(threads: int = 1) -> SuiteResult:
    res = SuiteResult("order")
    cfg = _order_config()
    result = verification.convergence_order(cfg, (1 / 40, 1 / 80, 1 / 160))
    res.metrics["order"] = result.order
    res.metrics["status"] = result.status
    res.check("temporal order in [1.9, 2.3]",
              result.status == "ok" and 1.9 <= result.order <= 2.3,
              f"status {result.status}, order {result.order:.3f}")
    return res


# ---------------------------------------------------------------------------
# temporal decay exponents


def _fit_history(history, column, t0, t1):
    return diagnostics.decay_fit(history.series(column), t0, t1)


def suite_decay2d(threads: int = 1) -> SuiteResult:
    res = SuiteResult("decay2d")
    L = 64.0 * math.pi
    cfg = default_config(
        "A", 2, 512, L, 42.0, chi=1.0, eps=1.0, dt=0.02, record_interval=0.25,
        ics={"e": _gauss(_center(L, 2), 1.0, 0.16),
             "s": _gauss(_center(L, 2, dx=1.0), 1.0, 0.16)},
    )
    t0 = time.perf_counter()
    history = integrator.run(cfg)
    res.metrics["runtime_s"] = time.perf_counter() - t0
    for column, expected, tol in (
        ("L2_e", -0.5, 0.1), ("Linf_e", -1.0, 0.15), ("L2_s", -0.5, 0.1),
    ):
        fit = _fit_history(history, column, 2.0, 40.0)
        res.metrics[f"exponent[{column}]"] = fit.exponent
        res.check(f"2D {column} decay exponent {expected} +/- {tol}",
                  abs(fit.exponent - expected) <= tol,
                  f"fitted {fit.exponent:.4f}")
    return res


def suite_decay3d(threads: int = 1) -> SuiteResult:
    res = SuiteResult("decay3d")
    L = 8.0 * math.pi
    cfg = default_config(
        "A", 3, 64, L, 8.5, chi=1.0, eps=1.0, dt=0.02, record_interval=0.1,
        ics={"e": _gauss(_center(L, 3), 0.8, 0.45),
             "s": _gauss(_center(L, 3, dx=0.8), 0.8, 0.45)},
    )
    t0 = time.perf_counter()
    history = integrator.run(cfg)
    res.metrics["runtime_s"] = time.perf_counter() - t0
    for column, expected, tol in (("L2_e", -0.75, 0.15), ("L2_s", -0.75, 0.15)):
        fit = _fit_history(history, column, 1.0, 8.0)
        res.metrics[f"exponent[{column}]"] = fit.exponent
        res.check(f"3D {column} decay exponent {expected} +/- {tol}",
                  abs(fit.exponent - expected) <= tol,
                  f"fitted {fit.exponent:.4f}")
    return res


# ---------------------------------------------------------------------------
# 3D mass plateau and chi sweep


def _plateau_config(chi=2.0):
    L = 4.0 * math.pi
    return default_config(
        "A", 3, 48, L, 20.0, chi=chi, eps=1.0, dt=0.01, record_interval=0.25,
        ics={"e": _gauss(_center(L, 3, dx=-0.6), 0.8, 0.12),
             "s": _gauss(_center(L, 3, dx=+0.6), 0.8, 0.12)},
    )


def suite_plateau(threads: int = 1) -> SuiteResult:
    res = SuiteResult("plateau")
    cfg = _plateau_config()
    history = integrator.run(cfg)
    m = verification._mass_metrics(history)
    res.metrics.update(m)
    res.check("m_s plateau over final half <= 1%", m["rel_change_s"] <= 0.01,
              f"relative change {m['rel_change_s']:.3e}")
    res.check("m_e plateau over final half <= 1%", m["rel_change_e"] <= 0.01,
              f"relative change {m['rel_change_e']:.3e}")
    res.check("final masses positive", m["m_s"] > 0 and m["m_e"] > 0,
              f"m_s {m['m_s']:.4f}, m_e {m['m_e']:.4f}")
    return res


def suite_chi(threads: int = 1) -> SuiteResult:
    res = SuiteResult("chi")
    cfg = _plateau_config(chi=0.0).replace(t_end=10.0)
    rows = verification.chi_sweep(cfg, (0.0, 5.0, 20.0), threads=threads)
    for row in rows:
        res.metrics[f"m_e_end[chi={row.chi:g}]"] = row.m_e_end
        res.check(f"mass-difference identity at chi={row.chi:g}",
                  row.mass_diff_drift <= 1e-6,
                  f"drift {row.mass_diff_drift:.3e}")
    for a, b in zip(rows, rows[1:]):
        res.check(
            f"limiting m_e nonincreasing from chi={a.chi:g} to chi={b.chi:g}",
            b.m_e_end <= a.m_e_end + 1e-6 * max(a.m_e_end, 1.0),
            f"{a.m_e_end:.6f} -> {b.m_e_end:.6f}",
        )
    return res


# ---------------------------------------------------------------------------
# scaling invariance


def _scaling_config(full: bool):
    L = 4.0 * math.pi
    kw = dict(chi=1.0, eps=1.0, phi_amplitude=0.5, phi_mode=(1, 1)) if full \
        else dict(chi=0.0, eps=0.0, phi_amplitude=0.0, phi_mode=(1, 1))
    ics = {
        "e": _gauss(_center(L, 2, dx=-0.9), 1.2, 0.3),
        "s": _gauss(_center(L, 2, dx=+0.9), 1.2, 0.2),
        "c": _gauss(_center(L, 2), 1.4, 0.1),
        "omega": _gauss(_center(L, 2, dy=1.0), 1.2, 0.3 if full else 0.0),
    }
    return default_config("B", 2, 64, L, 0.5, dt=1.0 / 512.0, **kw, ics=ics)


def suite_scaling(threads: int = 1) -> SuiteResult:
    res = SuiteResult("scaling")
    control = verification.check_scaling(_scaling_config(full=False), lam=2)
    res.metrics["control_dev"] = control["max_dev"]
    res.check("diffusion-only scaling pair matches to 1e-12",
              control["max_dev"] <= 1e-12, f"max dev {control['max_dev']:.3e}")
    full = verification.check_scaling(_scaling_config(full=True), lam=2)
    res.metrics["full_dev"] = full["max_dev"]
    res.check("full variant-B scaling pair matches to 1e-5",
              full["max_dev"] <= 1e-5, f"max dev {full['max_dev']:.3e}")
    return res


# ---------------------------------------------------------------------------
# small-data 2D similarity norms


def small_data_config(eps1: float = 0.05):
    L = 32.0 * math.pi
    cfg = default_config(
        "B", 2, 256, L, 30.0, chi=1.0, eps=1.0, dt=0.02, record_interval=0.2,
        phi_amplitude=0.2, phi_mode=(1, 1), extra_norms=(("omega", 1.5),),
        ics={
            # c starts at zero: its own heat transient would otherwise decay
            # faster than t^(-1/2) and park the weighted supremum mid-run
            "e": _gauss(_center(L, 2, dx=-1.0), 1.0, 0.3),
            "s": _gauss(_center(L, 2, dx=+1.0), 1.0, 0.3),
            "omega": _gauss(_center(L, 2, dy=1.0), 1.0, 0.2),
        },
    )
    state = _config.build_initial_state(cfg)
    from .spectral import gradient

    gc = np.sqrt(np.sum(gradient(state.c).stacked() ** 2, axis=0))
    total = (
        diagnostics.lp_norm(state.s, 1) + diagnostics.lp_norm(state.e, 1)
        + diagnostics.lp_norm(ScalarField(state.grid, gc), 2)
        + diagnostics.lp_norm(state.omega, 1)
    )
    factor = eps1 / total
    ics = {}
    for nm, ic in cfg.ics.items():
        ics[nm] = ICSpec(kind=ic.kind, amplitude=ic.amplitude * factor,
                         center=ic.center, width=ic.width, mode=ic.mode,
                         offset=ic.offset * factor, direction=ic.direction,
                         path=ic.path)
    return cfg.replace(ics=ics)


def suite_smalldata(threads: int = 1) -> SuiteResult:
    res = SuiteResult("smalldata")
    cfg = small_data_config(0.05)
    t0 = time.perf_counter()
    history = integrator.run(cfg)
    res.metrics["runtime_s"] = time.perf_counter() - t0

    for column, expected, tol in (("grad_c_Linf", -0.5, 0.15), ("Linf_s", -1.0, 0.2)):
        fit = _fit_history(history, column, 3.0, 28.0)
        res.metrics[f"exponent[{column}]"] = fit.exponent
        res.check(f"small-data {column} exponent {expected} +/- {tol}",
                  abs(fit.exponent - expected) <= tol, f"fitted {fit.exponent:.4f}")

    t_end = history.records[-1].t
    late = integrator.SimHistory(
        records=[r for r in history.records if r.t >= 0.75 * t_end])
    for fld, p in (("s", math.inf), ("grad_c", math.inf), ("omega", 1.5)):
        total = diagnostics.kato_norm(history, fld, p)
        tail = diagnostics.kato_norm(late, fld, p)
        res.metrics[f"kato[{fld},p={p:g}]"] = total
        ok = math.isfinite(total) and tail >= total * (1.0 - 1e-12)
        res.check(f"similarity norm of {fld} (p={p:g}) finite and stable", ok,
                  f"sup {total:.4e}, final-quarter sup {tail:.4e}")
    return res


# ---------------------------------------------------------------------------
# finite-difference cross-validation of the right-hand sides


def _oracle_state_2d(N):
    L = 2.0 * math.pi
    cfg = default_config(
        "A", 2, N, L, 1.0,
        ics={
            "e": ICSpec(kind="cosine_mode", amplitude=0.4, offset=0.6,
                        mode=(1, 2), center=(L / 2, L / 2)),
            "s": ICSpec(kind="cosine_mode", amplitude=0.3, offset=0.5,
                        mode=(2, 1), center=(L / 3, L / 5)),
            "u": ICSpec(kind="cosine_mode", amplitude=0.5, mode=(0, 1),
                        direction=0, center=(L / 2, L / 2)),
        },
    )
    state = _config.build_initial_state(cfg)
    grid = _config.build_grid(cfg)
    u = _config.build_prescribed_velocity(cfg, grid)
    params = _config.build_params(cfg.replace(chi=1.0, eps=1.0))
    return state, params, u


def _oracle_state_3d(N):
    L = 2.0 * math.pi
    cfg = default_config(
        "B", 3, N, L, 1.0, phi_amplitude=0.5, phi_mode=(1, 1, 0),
        ics={
            "e": ICSpec(kind="cosine_mode", amplitude=0.4, offset=0.6,
                        mode=(1, 1, 0), center=(L / 2,) * 3),
            "s": ICSpec(kind="cosine_mode", amplitude=0.3, offset=0.5,
                        mode=(0, 1, 1), center=(L / 3,) * 3),
            "c": ICSpec(kind="cosine_mode", amplitude=0.2, offset=0.4,
                        mode=(1, 0, 1), center=(L / 5,) * 3),
            "u": ICSpec(kind="cosine_mode", amplitude=0.5, mode=(0, 1, 0),
                        direction=0, center=(L / 2,) * 3),
        },
    )
    cfg = cfg.replace(chi=1.0, eps=1.0)
    state = _config.build_initial_state(cfg)
    params = _config.build_params(cfg)
    return state, params, None


def _oracle_deviation(state, params, u) -> float:
    spec = verification.rhs_total(state, params, u)
    fd = verification.rhs_fd_oracle(state, params, u)
    worst = 0.0
    for nm, ref in spec.items():
        scale = float(np.max(np.abs(ref.values)))
        dev = float(np.max(np.abs(ref.values - fd[nm].values))) / max(scale, 1e-30)
        worst = max(worst, dev)
    return worst


def suite_oracle(threads: int = 1) -> SuiteResult:
    res = SuiteResult("oracle")
    for label, maker, coarse in (("2D", _oracle_state_2d, 32),
                                 ("3D", _oracle_state_3d, 24)):
        dev_c = _oracle_deviation(*maker(coarse))
        dev_f = _oracle_deviation(*maker(coarse * 2))
        ratio = dev_c / dev_f if dev_f > 0 else math.inf
        res.metrics[f"fd_ratio_{label}"] = ratio
        res.check(f"{label} finite-difference deviation shrinks >= 3.5x per halving",
                  ratio >= 3.5, f"{dev_c:.3e} -> {dev_f:.3e}, ratio {ratio:.2f}")
    return res


# ---------------------------------------------------------------------------
# determinism


def _determinism_config(outdir):
    L = 4.0 * math.pi
    return default_config(
        "B", 2, 64, L, 0.2, chi=1.0, eps=1.0, dt=0.01, record_interval=0.02,
        snapshot_interval=0.1, phi_amplitude=0.5, phi_mode=(1, 1),
        out_dir=str(outdir),
        ics={
            "e": _gauss(_center(L, 2, dx=-0.9), 1.0, 0.3),
            "s": _gauss(_center(L, 2, dx=+0.9), 1.0, 0.2),
            "c": _gauss(_center(L, 2), 1.2, 0.1),
            "omega": _gauss(_center(L, 2, dy=1.0), 1.0, 0.3),
        },
    )


def _run_to_dir(cfg, outdir):
    import pathlib

    path = pathlib.Path(outdir)
    path.mkdir(parents=True, exist_ok=True)
    grid = _config.build_grid(cfg)
    with open(path / "manifest.cfg", "w", encoding="utf-8") as fh:
        fh.write(_config.serialize_config(cfg))
    sink = output.SnapshotWriter(str(path), grid)
    history = integrator.run(cfg, snapshot_sink=sink)
    output.write_timeseries(history, path / "timeseries.csv")
    return path


def suite_determinism(threads: int = 1) -> SuiteResult:
    res = SuiteResult("determinism")
    with tempfile.TemporaryDirectory() as tmp:
        d1 = _run_to_dir(_determinism_config(f"{tmp}/run1"), f"{tmp}/run1")
        d2 = _run_to_dir(_determinism_config(f"{tmp}/run2"), f"{tmp}/run2")
        names = sorted(p.name for p in d1.iterdir())
        same = sorted(p.name for p in d2.iterdir()) == names
        for name in names:
            if name == "manifest.cfg":
                continue
            same = same and filecmp.cmp(d1 / name, d2 / name, shallow=False)
        res.metrics["files_compared"] = len(names)
        res.check("identical config produces byte-identical outputs", same)

    sweep_cfg = default_config(
        "A", 3, 16, 2 * math.pi, 0.5, eps=1.0, dt=0.05,
        ics={"e": _gauss(_center(2 * math.pi, 3), 0.7, 0.5),
             "s": _gauss(_center(2 * math.pi, 3, dx=0.4), 0.7, 0.5)},
    )
    rows1 = verification.chi_sweep(sweep_cfg, (0.0, 1.0), threads=1)
    rows2 = verification.chi_sweep(sweep_cfg, (0.0, 1.0), threads=2)
    res.check("sweep results independent of thread count", rows1 == rows2)
    return res


SUITES = {
    "heat": suite_heat,
    "mass": suite_mass,
    "order": suite_order,
    "decay2d": suite_decay2d,
    "decay3d": suite_decay3d,
    "plateau": suite_plateau,
    "chi": suite_chi,
    "scaling": suite_scaling,
    "smalldata": suite_smalldata,
    "oracle": suite_oracle,
    "determinism": suite_determinism,
}


def run_suite(name: str, threads: int = 1) -> SuiteResult:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; have {', '.join(SUITES)}")
    return SUITES[name](threads=threads)
