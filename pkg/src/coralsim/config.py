"""Flat key=value run configuration: parsing, validation, echoing, builders.

The format is deliberately minimal: one `key = value` per line, `#` starts
a comment, unknown keys are errors.  Every default is materialized at parse
time so the echoed manifest fully pins the run; parsing a manifest yields a
config equal to the original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fluid
from .integrator import StepControl
from .model import ModelParams, PotentialSpec, StateA, StateB, StateSingle
from .spectral import Grid, ScalarField, VectorField, leray_project

__all__ = [
    "ConfigError",
    "ICSpec",
    "RunConfig",
    "parse_config",
    "parse_config_file",
    "serialize_config",
    "default_config",
    "with_ic",
    "relevant_fields",
    "build_grid",
    "build_params",
    "build_control",
    "build_scalar",
    "build_prescribed_velocity",
    "build_initial_state",
    "snapshot_fields",
]

IC_KINDS = ("uniform", "gaussian", "cosine_mode", "file")
DENSITY_FIELDS = ("n", "e", "s", "c")
EXPERIMENT_KINDS = (
    "", "HEAT_ORACLE", "SCALING", "CONVERGENCE", "DECAY",
    "MASS_PLATEAU", "CHI_SWEEP", "SMALL_DATA_2D",
)


class ConfigError(ValueError):
    """Configuration rejection; message carries key and line number."""


def relevant_fields(variant: str, d: int) -> tuple:
    """Initial-condition field names a (variant, d) run understands."""
    if variant == "SINGLE":
        return ("n", "u")
    if variant in ("KR", "A"):
        return ("e", "s", "u")
    if variant == "B":
        return ("e", "s", "c", "omega") if d == 2 else ("e", "s", "c", "u")
    raise ConfigError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class ICSpec:
    """One field's initial condition, fully materialized (no implicit defaults)."""

    kind: str = "uniform"
    amplitude: float = 0.0
    center: tuple = ()
    width: float = 1.0
    mode: tuple = ()
    offset: float = 0.0
    direction: int = 0
    path: str = ""


@dataclass(frozen=True)
class RunConfig:
    variant: str
    d: int
    N: int
    L: float
    t_end: float
    chi: float = 0.0
    eps: float = 0.0
    q: float = 2.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    phi_amplitude: float = 0.0
    phi_mode: tuple = ()
    dt: float | None = None
    cfl: float = 0.4
    dt_max: float = 0.1
    dt_min: float = 1e-9
    tol_neg: float = 1e-10
    record_interval: float = 0.0
    snapshot_interval: float = 0.0
    extra_norms: tuple = ()
    smallness_threshold: float = 0.125
    out_dir: str = "out"
    experiment: str = ""
    ics: dict = field(default_factory=dict)

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# value converters


def _to_int(text, key, line):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"line {line}: {key}: expected an integer, got {text!r}") from None


def _to_float(text, key, line):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"line {line}: {key}: expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"line {line}: {key}: value must be finite")
    return v


def _to_int_tuple(text, key, line):
    try:
        return tuple(int(p.strip()) for p in text.split(",") if p.strip() != "")
    except ValueError:
        raise ConfigError(f"line {line}: {key}: expected comma-separated integers") from None


def _to_float_tuple(text, key, line):
    try:
        return tuple(float(p.strip()) for p in text.split(",") if p.strip() != "")
    except ValueError:
        raise ConfigError(f"line {line}: {key}: expected comma-separated numbers") from None


def _to_extra_norms(text, key, line):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"line {line}: {key}: entries must look like field:p")
        name, pstr = part.split(":", 1)
        name = name.strip()
        if name not in ("e", "s", "c", "omega", "grad_c", "n"):
            raise ConfigError(f"line {line}: {key}: unknown field {name!r}")
        p = math.inf if pstr.strip() in ("inf", "Inf") else _to_float(pstr.strip(), key, line)
        out.append((name, p))
    return tuple(out)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "inf" if value == math.inf else repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# parsing


def _require(cond, key, line, message):
    if not cond:
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{key}: {message}")


def parse_config(text: str) -> RunConfig:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)

    def take(key, conv, default=None, required=False):
        if key in entries:
            value, lineno = entries.pop(key)
            return conv(value, key, lineno), lineno
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default, 0

    variant, vline = take("variant", lambda v, k, l: v, required=True)
    _require(variant in ("SINGLE", "KR", "A", "B"), "variant", vline,
             f"must be one of SINGLE, KR, A, B, got {variant!r}")
    d, dline = take("d", _to_int, required=True)
    _require(d in (2, 3), "d", dline, f"must be 2 or 3, got {d}")
    N, nline = take("N", _to_int, required=True)
    _require(N >= 8 and N % 2 == 0, "N", nline, f"must be even and >= 8, got {N}")
    L, lline = take("L", _to_float, required=True)
    _require(L > 0, "L", lline, "must be > 0")
    t_end, tline = take("t_end", _to_float, required=True)
    _require(t_end >= 0, "t_end", tline, "must be >= 0")

    chi, kline = take("chi", _to_float, 0.0)
    _require(chi >= 0, "chi", kline, "must be >= 0")
    eps, kline = take("eps", _to_float, 0.0)
    _require(eps >= 0, "eps", kline, "must be >= 0")
    q, kline = take("q", _to_float, 2.0)
    if variant in ("SINGLE", "KR"):
        _require(q >= 2, "q", kline, "must be >= 2")
    else:
        _require(q == 2, "q", kline, f"variant {variant} requires q = 2")
    kappa1, kline = take("kappa1", _to_float, 1.0)
    _require(kappa1 > 0, "kappa1", kline, "must be > 0")
    kappa2, kline = take("kappa2", _to_float, 1.0)
    _require(kappa2 > 0, "kappa2", kline, "must be > 0")

    phi_amplitude, _ = take("phi_amplitude", _to_float, 0.0)
    default_mode = (1,) + (0,) * (d - 1)
    phi_mode, kline = take("phi_mode", _to_int_tuple, default_mode)
    _require(len(phi_mode) == d, "phi_mode", kline, f"needs {d} components")

    dt, kline = take("dt", _to_float, None)
    if dt is not None:
        _require(dt > 0, "dt", kline, "must be > 0")
    cfl, kline = take("cfl", _to_float, 0.4)
    _require(0 < cfl <= 1, "cfl", kline, "must lie in (0, 1]")
    dt_max, kline = take("dt_max", _to_float, 0.1)
    _require(dt_max > 0, "dt_max", kline, "must be > 0")
    dt_min, kline = take("dt_min", _to_float, 1e-9)
    _require(0 < dt_min <= dt_max, "dt_min", kline, "needs 0 < dt_min <= dt_max")
    tol_neg, kline = take("tol_neg", _to_float, 1e-10)
    _require(tol_neg >= 0, "tol_neg", kline, "must be >= 0")

    default_rec = t_end / 100.0 if t_end > 0 else 1.0
    record_interval, kline = take("record_interval", _to_float, default_rec)
    _require(record_interval > 0, "record_interval", kline, "must be > 0")
    snapshot_interval, kline = take("snapshot_interval", _to_float, 0.0)
    _require(snapshot_interval >= 0, "snapshot_interval", kline, "must be >= 0")

    extra_norms, _ = take("extra_norms", _to_extra_norms, ())
    smallness_threshold, kline = take("smallness_threshold", _to_float, 0.125)
    _require(smallness_threshold > 0, "smallness_threshold", kline, "must be > 0")
    out_dir, _ = take("out_dir", lambda v, k, l: v, "out")
    experiment, kline = take("experiment", lambda v, k, l: v, "")
    _require(experiment in EXPERIMENT_KINDS, "experiment", kline,
             f"must be one of {', '.join(k for k in EXPERIMENT_KINDS if k)}")

    ics = {}
    center_default = (L / 2.0,) * d
    for name in relevant_fields(variant, d):
        prefix = f"ic_{name}_"
        kind, kline = take(prefix + "kind", lambda v, k, l: v, "uniform")
        _require(kind in IC_KINDS, prefix + "kind", kline,
                 f"must be one of {', '.join(IC_KINDS)}")
        amplitude, aline = take(prefix + "amplitude", _to_float, 0.0)
        center, cline = take(prefix + "center", _to_float_tuple, center_default)
        _require(len(center) == d, prefix + "center", cline, f"needs {d} components")
        width, wline = take(prefix + "width", _to_float, L / 16.0)
        _require(width > 0, prefix + "width", wline, "must be > 0")
        mode, mline = take(prefix + "mode", _to_int_tuple, default_mode)
        _require(len(mode) == d, prefix + "mode", mline, f"needs {d} components")
        offset, oline = take(prefix + "offset", _to_float, 0.0)
        direction, dirline = take(prefix + "direction", _to_int, 0)
        path, pline = take(prefix + "path", lambda v, k, l: v, "")
        if kind == "file":
            _require(path != "", prefix + "path", pline, "file kind needs a path")

        if name in DENSITY_FIELDS:
            _require(amplitude >= 0, prefix + "amplitude", aline,
                     "densities need amplitude >= 0")
            _require(offset >= 0, prefix + "offset", oline,
                     "densities need offset >= 0")
            if kind == "cosine_mode":
                _require(offset >= abs(amplitude), prefix + "offset", oline,
                         "density cosine modes need offset >= |amplitude| "
                         "to stay nonnegative")
        if name == "u":
            _require(direction in range(d), prefix + "direction", dirline,
                     f"must lie in 0..{d - 1}")
            _require(offset == 0.0, prefix + "offset", oline,
                     "velocity offsets would set a mean flow; must be 0")
            if kind == "uniform":
                _require(amplitude == 0.0, prefix + "amplitude", aline,
                         "uniform velocity must have amplitude 0 (zero mean flow)")
            if kind == "cosine_mode":
                _require(mode[direction] == 0, prefix + "mode", mline,
                         "velocity cosine modes need mode[direction] = 0 "
                         "to be divergence-free")
        ics[name] = ICSpec(kind=kind, amplitude=amplitude, center=center,
                           width=width, mode=mode, offset=offset,
                           direction=direction, path=path)

    if entries:
        key = min(entries, key=lambda k: entries[k][1])
        _, lineno = entries[key]
        raise ConfigError(f"line {lineno}: unknown key {key!r}")

    return RunConfig(
        variant=variant, d=d, N=N, L=L, t_end=t_end, chi=chi, eps=eps, q=q,
        kappa1=kappa1, kappa2=kappa2, phi_amplitude=phi_amplitude,
        phi_mode=phi_mode, dt=dt, cfl=cfl, dt_max=dt_max, dt_min=dt_min,
        tol_neg=tol_neg, record_interval=record_interval,
        snapshot_interval=snapshot_interval, extra_norms=extra_norms,
        smallness_threshold=smallness_threshold, out_dir=out_dir,
        experiment=experiment, ics=ics,
    )


def parse_config_file(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def serialize_config(cfg: RunConfig) -> str:
    """Echo a config with every default materialized; reparses to equality."""
    lines = []

    def put(key, value):
        lines.append(f"{key} = {_fmt(value)}")

    put("variant", cfg.variant)
    put("d", cfg.d)
    put("N", cfg.N)
    put("L", cfg.L)
    put("t_end", cfg.t_end)
    put("chi", cfg.chi)
    put("eps", cfg.eps)
    put("q", cfg.q)
    put("kappa1", cfg.kappa1)
    put("kappa2", cfg.kappa2)
    put("phi_amplitude", cfg.phi_amplitude)
    put("phi_mode", cfg.phi_mode)
    if cfg.dt is not None:
        put("dt", cfg.dt)
    put("cfl", cfg.cfl)
    put("dt_max", cfg.dt_max)
    put("dt_min", cfg.dt_min)
    put("tol_neg", cfg.tol_neg)
    put("record_interval", cfg.record_interval)
    put("snapshot_interval", cfg.snapshot_interval)
    if cfg.extra_norms:
        put("extra_norms", ",".join(f"{n}:{_fmt(p)}" for n, p in cfg.extra_norms))
    put("smallness_threshold", cfg.smallness_threshold)
    put("out_dir", cfg.out_dir)
    if cfg.experiment:
        put("experiment", cfg.experiment)
    for name in relevant_fields(cfg.variant, cfg.d):
        ic = cfg.ics[name]
        prefix = f"ic_{name}_"
        put(prefix + "kind", ic.kind)
        put(prefix + "amplitude", ic.amplitude)
        put(prefix + "center", ic.center)
        put(prefix + "width", ic.width)
        put(prefix + "mode", ic.mode)
        put(prefix + "offset", ic.offset)
        if name == "u":
            put(prefix + "direction", ic.direction)
        if ic.path:
            put(prefix + "path", ic.path)
    return "\n".join(lines) + "\n"


def default_config(variant: str, d: int, N: int, L: float, t_end: float,
                   **overrides) -> RunConfig:
    """Programmatic construction with the same defaults the parser applies."""
    base = [f"variant = {variant}", f"d = {d}", f"N = {N}",
            f"L = {_fmt(float(L))}", f"t_end = {_fmt(float(t_end))}"]
    ics = overrides.pop("ics", None)
    for key, value in overrides.items():
        if key == "extra_norms" and not isinstance(value, str):
            value = ",".join(f"{n}:{_fmt(float(p))}" for n, p in value)
        base.append(f"{key} = {_fmt(value)}")
    cfg = parse_config("\n".join(base))
    if ics:
        merged = dict(cfg.ics)
        for name, spec in ics.items():
            merged[name] = spec
        cfg = cfg.replace(ics=merged)
    return cfg


def with_ic(cfg: RunConfig, name: str, **ic_kw) -> RunConfig:
    """Copy of cfg with one field's initial condition replaced."""
    if name not in relevant_fields(cfg.variant, cfg.d):
        raise ConfigError(f"field {name!r} is not used by variant {cfg.variant} in {cfg.d}D")
    base = cfg.ics.get(name, ICSpec(center=(cfg.L / 2.0,) * cfg.d,
                                    width=cfg.L / 16.0,
                                    mode=(1,) + (0,) * (cfg.d - 1)))
    merged = dict(cfg.ics)
    merged[name] = replace(base, **ic_kw)
    return cfg.replace(ics=merged)


# ---------------------------------------------------------------------------
# builders


def build_grid(cfg: RunConfig) -> Grid:
    return Grid(d=cfg.d, N=cfg.N, L=cfg.L)


def build_params(cfg: RunConfig) -> ModelParams:
    return ModelParams(
        variant=cfg.variant, chi=cfg.chi, eps=cfg.eps, q=cfg.q,
        kappa=1 if cfg.d == 2 else 0, kappa1=cfg.kappa1, kappa2=cfg.kappa2,
        phi=PotentialSpec(cfg.phi_amplitude, cfg.phi_mode),
    )


def build_control(cfg: RunConfig) -> StepControl:
    return StepControl(cfl=cfg.cfl, dt_max=cfg.dt_max, dt_min=cfg.dt_min,
                       tol_neg=cfg.tol_neg)


def _periodic_gaussian(grid: Grid, center, width: float) -> np.ndarray:
    """Separable Gaussian bump periodized over nearest images per axis."""
    out = np.ones(grid.shape)
    for x, c in zip(grid.mesh(), center):
        xi = x - c
        g = np.zeros_like(xi)
        for j in (-1.0, 0.0, 1.0):
            g = g + np.exp(-((xi + j * grid.L) ** 2) / (2.0 * width**2))
        out = out * g
    return out


def _ic_values(grid: Grid, name: str, ic: ICSpec) -> np.ndarray:
    if ic.kind == "uniform":
        return np.full(grid.shape, ic.amplitude + ic.offset)
    if ic.kind == "gaussian":
        return ic.amplitude * _periodic_gaussian(grid, ic.center, ic.width) + ic.offset
    if ic.kind == "cosine_mode":
        phase = np.zeros(grid.shape)
        for m, x, c in zip(ic.mode, grid.mesh(), ic.center):
            if m:
                phase = phase + (2.0 * np.pi * m / grid.L) * (x - c)
        return ic.amplitude * np.cos(phase) + ic.offset
    if ic.kind == "file":
        from .output import read_snapshot

        meta, fields = read_snapshot(ic.path)
        if (meta["d"], meta["N"]) != (grid.d, grid.N) or meta["L"] != grid.L:
            raise ConfigError(
                f"snapshot {ic.path} grid ({meta['d']}D N={meta['N']} L={meta['L']}) "
                f"does not match the run grid"
            )
        if name not in fields:
            raise ConfigError(f"snapshot {ic.path} has no field {name!r}")
        return fields[name]
    raise ConfigError(f"unknown initial-condition kind {ic.kind!r}")


def _mask_field(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Band-limit to the 2/3 cutoff (used for file-based velocity data)."""
    return grid.inv(np.where(grid.dealias_mask, grid.fwd(values), 0.0))


def build_scalar(cfg: RunConfig, grid: Grid, name: str) -> ScalarField:
    """Materialize one initial field.

    Fields are sampled as given; analytic kinds are nonnegative for the
    density fields by construction, and the run keeps products alias-safe by
    truncating every nonlinear tendency, so no spectral surgery happens here.
    """
    ic = cfg.ics[name]
    values = _ic_values(grid, name, ic)
    if name in DENSITY_FIELDS:
        floor = -cfg.tol_neg * max(float(np.abs(values).max()), 1.0)
        if float(values.min()) < floor:
            raise ConfigError(f"initial {name} dips below zero beyond tol_neg")
    return ScalarField(grid, values)


def build_prescribed_velocity(cfg: RunConfig, grid: Grid) -> VectorField | None:
    """Static divergence-free velocity for SINGLE/KR/A; None means no flow."""
    ic = cfg.ics.get("u")
    if ic is None or (ic.kind == "uniform" and ic.amplitude == 0.0):
        return None
    return _build_velocity(cfg, grid, ic)


def _build_velocity(cfg: RunConfig, grid: Grid, ic: ICSpec) -> VectorField:
    if ic.kind == "cosine_mode":
        comps = [np.zeros(grid.shape) for _ in range(grid.d)]
        comps[ic.direction] = _ic_values(grid, "u", ic)
        comps = [_mask_field(grid, c) for c in comps]
        return VectorField.from_arrays(grid, comps)
    if ic.kind == "file":
        from .output import read_snapshot

        meta, fields = read_snapshot(ic.path)
        names = [f"u_{ax}" for ax in "xyz"[: grid.d]]
        missing = [nm for nm in names if nm not in fields]
        if missing:
            raise ConfigError(f"snapshot {ic.path} lacks velocity fields {missing}")
        comps = [_mask_field(grid, fields[nm]) for nm in names]
        return leray_project(VectorField.from_arrays(grid, comps))
    raise ConfigError(f"velocity initial condition cannot use kind {ic.kind!r}")


def build_initial_state(cfg: RunConfig):
    grid = build_grid(cfg)
    if cfg.variant == "SINGLE":
        return StateSingle(n=build_scalar(cfg, grid, "n"), t=0.0)
    if cfg.variant in ("KR", "A"):
        return StateA(e=build_scalar(cfg, grid, "e"),
                      s=build_scalar(cfg, grid, "s"), t=0.0)
    e = build_scalar(cfg, grid, "e")
    s = build_scalar(cfg, grid, "s")
    c = build_scalar(cfg, grid, "c")
    if cfg.d == 2:
        omega = build_scalar(cfg, grid, "omega")
        u = fluid.biot_savart2d(omega)
        return StateB(e=e, s=s, c=c, u=u, omega=omega, t=0.0)
    ic = cfg.ics.get("u")
    if ic is None or (ic.kind == "uniform" and ic.amplitude == 0.0):
        u = VectorField.zeros(grid)
    else:
        u = _build_velocity(cfg, grid, ic)
    return StateB(e=e, s=s, c=c, u=u, omega=None, t=0.0)


def snapshot_fields(state) -> dict:
    """Ordered name -> ScalarField map stored in snapshots."""
    if isinstance(state, StateSingle):
        return {"n": state.n}
    if isinstance(state, StateA):
        return {"e": state.e, "s": state.s}
    out = {"e": state.e, "s": state.s, "c": state.c}
    if state.omega is not None:
        out["omega"] = state.omega
    for name, comp in zip(("u_x", "u_y", "u_z"), state.u.components):
        out[name] = comp
    return out
