"""Scalar functionals recorded along a run and the decay-fit machinery.

Covers masses, L^p norms, the entropy functional, Sobolev norms, torus
weighted moments, time-weighted (similarity) suprema over a history, and
log-log regression of decay exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, StateA, StateB, StateSingle
from .spectral import Grid, ScalarField, VectorField, gradient

__all__ = [
    "DiagnosticRecord",
    "FitResult",
    "lp_norm",
    "total_mass",
    "entropy",
    "sobolev_norm",
    "weighted_moment",
    "compute_record",
    "kato_norm",
    "decay_fit",
    "bound_check",
]


def lp_norm(f: ScalarField, p) -> float:
    """(sum |f|^p h^d)^(1/p); p = inf returns max |f|.  Requires p >= 1."""
    v = np.abs(f.values)
    if p == math.inf:
        return float(v.max())
    p = float(p)
    if p < 1.0:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    if p == 1.0:
        return float(v.sum() * f.grid.cell_volume)
    if p == 2.0:
        return float(np.sqrt(np.sum(v * v) * f.grid.cell_volume))
    return float((np.sum(v**p) * f.grid.cell_volume) ** (1.0 / p))


def total_mass(f: ScalarField) -> float:
    """sum(f) h^d, spectrally exact quadrature for band-limited fields."""
    return f.grid.integrate(f.values)


def entropy(s: ScalarField) -> float:
    """sum s log s h^d, with the s log s -> 0 limit at vanishing density.

    Values <= 0 (including monitored undershoot) contribute nothing.
    """
    v = s.values
    pos = v > 0.0
    out = np.zeros_like(v)
    out[pos] = v[pos] * np.log(v[pos])
    return float(out.sum() * s.grid.cell_volume)


def sobolev_norm(f: ScalarField, m: int) -> float:
    """H^m norm (sum (1+|k|^2)^m |fhat_k|^2)^(1/2), Parseval-normalized.

    Coefficients are scaled so that m=0 coincides with the L^2 norm.
    """
    if m not in (0, 1, 2, 3):
        raise ValueError(f"sobolev_norm supports integer m in 0..3, got {m}")
    g = f.grid
    fh = f.hat()
    mag = fh.real**2 + fh.imag**2
    weight = (1.0 + g.k2) ** m if m else 1.0
    total = np.sum(g.rfft_weights * weight * mag)
    return float(np.sqrt(total * g.cell_volume / g.N**g.d))


def weighted_moment(f: ScalarField, n: int) -> float:
    """sum (|f| + |grad f|) (1 + r^n) h^d with r the distance to the center.

    The torus stand-in for the whole-space weight |x|^n; used only for
    boundedness monitoring, never for acceptance thresholds.
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"weighted_moment needs integer n >= 1, got {n}")
    g = f.grid
    half = 0.5 * g.L
    r2 = np.zeros(g.shape)
    for x in g.mesh():
        r2 = r2 + (x - half) ** 2
    r = np.sqrt(r2)
    gmag = np.sqrt(np.sum(gradient(f).stacked() ** 2, axis=0))
    return float(np.sum((np.abs(f.values) + gmag) * (1.0 + r**int(n))) * g.cell_volume)


_LP_GRID = (1.0, 2.0, 4.0, math.inf)


@dataclass
class DiagnosticRecord:
    """One row of the diagnostic time series.

    Fields that a variant does not evolve stay None and serialize to empty
    CSV cells.  The SINGLE variant's density n is reported under both the
    e and s columns (the model treats the two species as identical there).
    """

    t: float
    m_e: float | None = None
    m_s: float | None = None
    m_c: float | None = None
    mass_diff: float | None = None
    L1_e: float | None = None
    L2_e: float | None = None
    L4_e: float | None = None
    Linf_e: float | None = None
    L1_s: float | None = None
    L2_s: float | None = None
    L4_s: float | None = None
    Linf_s: float | None = None
    grad_c_Linf: float | None = None
    entropy_s: float | None = None
    enstrophy: float | None = None
    H1_e: float | None = None
    H1_s: float | None = None
    min_e: float | None = None
    min_s: float | None = None
    extra: dict = field(default_factory=dict)

    def get(self, column: str):
        if column in self.extra:
            return self.extra[column]
        return getattr(self, column, None)


def _norm_key(name: str, p: float) -> str:
    return f"L{p:g}_{name}"


def _extra_value(state, name: str, p: float):
    if name == "grad_c":
        gmag = np.sqrt(np.sum(gradient(state.c).stacked() ** 2, axis=0))
        return lp_norm(ScalarField(state.c.grid, gmag), p)
    f = getattr(state, name, None)
    if f is None:
        raise ValueError(f"state has no field {name!r} for extra norm")
    return lp_norm(f, p)


def compute_record(state, params: ModelParams, extra_norms=()) -> DiagnosticRecord:
    """Evaluate the full diagnostic row for one state."""
    if isinstance(state, StateSingle):
        e = s = state.n
        c = omega = None
    elif isinstance(state, StateA):
        e, s = state.e, state.s
        c = omega = None
    elif isinstance(state, StateB):
        e, s, c = state.e, state.s, state.c
        omega = state.omega
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")

    rec = DiagnosticRecord(t=state.t)
    rec.m_e = total_mass(e)
    rec.m_s = total_mass(s)
    rec.mass_diff = rec.m_s - rec.m_e
    rec.L1_e, rec.L2_e, rec.L4_e, rec.Linf_e = (lp_norm(e, p) for p in _LP_GRID)
    rec.L1_s, rec.L2_s, rec.L4_s, rec.Linf_s = (lp_norm(s, p) for p in _LP_GRID)
    rec.entropy_s = entropy(s)
    rec.H1_e = sobolev_norm(e, 1)
    rec.H1_s = sobolev_norm(s, 1)
    rec.min_e = float(e.values.min())
    rec.min_s = float(s.values.min())
    if c is not None:
        rec.m_c = total_mass(c)
        gmag = np.sqrt(np.sum(gradient(c).stacked() ** 2, axis=0))
        rec.grad_c_Linf = float(gmag.max())
    if omega is not None:
        rec.enstrophy = lp_norm(omega, 2) ** 2
    for name, p in extra_norms:
        rec.extra[_norm_key(name, p)] = _extra_value(state, name, p)
    return rec


_KATO_FIELDS = ("e", "s", "omega", "grad_c")


def kato_norm(history, fld: str, p) -> float:
    """Similarity-norm supremum over the recorded times.

    Densities and vorticity carry the weight t^(1-1/p); the signal gradient
    carries t^(1/2-1/q).  Norms outside the routine record grid must have
    been requested through the run's extra_norms.
    """
    if fld not in _KATO_FIELDS:
        raise ValueError(f"kato_norm field must be one of {_KATO_FIELDS}, got {fld!r}")
    if not history.records:
        raise ValueError("kato_norm needs a nonempty history")
    p = float(p)
    alpha = (0.5 - 1.0 / p) if fld == "grad_c" else (1.0 - 1.0 / p)

    def value(rec):
        if fld in ("e", "s") and p in _LP_GRID:
            key = {1.0: "L1", 2.0: "L2", 4.0: "L4", math.inf: "Linf"}[p]
            return rec.get(f"{key}_{fld}")
        if fld == "omega" and p == 2.0:
            ens = rec.get("enstrophy")
            return None if ens is None else math.sqrt(ens)
        if fld == "grad_c" and p == math.inf:
            return rec.get("grad_c_Linf")
        return rec.extra.get(_norm_key(fld, p))

    best = None
    for rec in history.records:
        v = value(rec)
        if v is None:
            raise ValueError(
                f"history does not record the L^{p:g} norm of {fld!r}; "
                "request it via extra_norms"
            )
        weighted = (rec.t**alpha) * v if rec.t > 0 else (v if alpha == 0 else 0.0)
        best = weighted if best is None else max(best, weighted)
    return float(best)


@dataclass(frozen=True)
class FitResult:
    """Fitted power law value ~ constant * t^exponent over a window."""

    exponent: float
    constant: float
    residual: float
    window: tuple

    def __post_init__(self):
        t0, t1 = self.window
        if not t0 < t1:
            raise ValueError("fit window must satisfy t0 < t1")
        if self.residual < 0:
            raise ValueError("residual must be >= 0")


def _window_series(series, t0: float, t1: float):
    if (isinstance(series, tuple) and len(series) == 2
            and np.ndim(series[0]) == 1 and np.ndim(series[1]) == 1
            and len(series[0]) == len(series[1]) and len(series[0]) != 2):
        pairs = list(zip(series[0], series[1]))
    else:
        pairs = list(series)
    sel = [(float(t), float(v)) for t, v in pairs if t0 <= float(t) <= t1]
    if len(sel) < 8:
        raise ValueError(f"need at least 8 samples in [{t0}, {t1}], got {len(sel)}")
    t = np.array([p[0] for p in sel])
    v = np.array([p[1] for p in sel])
    if np.any(v <= 0.0):
        raise ValueError("decay fits need strictly positive values")
    if np.any(t <= 0.0):
        raise ValueError("decay fits need strictly positive times")
    return t, v


def decay_fit(series, t0: float, t1: float) -> FitResult:
    """Least-squares line on (log t, log value); residual is the max relative
    deviation of the data from the fitted power law on the window."""
    t, v = _window_series(series, t0, t1)
    slope, intercept = np.polyfit(np.log(t), np.log(v), 1)
    constant = math.exp(intercept)
    fitted = constant * t**slope
    residual = float(np.max(np.abs(v - fitted) / v))
    return FitResult(exponent=float(slope), constant=constant,
                     residual=residual, window=(t0, t1))


def bound_check(series, alpha: float, window) -> FitResult:
    """Empirical envelope K for value <= K t^(-alpha) on the window.

    The residual reports tightness: the fraction of samples whose weighted
    value lies within 5% of the envelope constant.
    """
    t0, t1 = window
    t, v = _window_series(series, t0, t1)
    weighted = v * t**alpha
    constant = float(weighted.max())
    tight = float(np.mean(weighted >= 0.95 * constant))
    return FitResult(exponent=-float(alpha), constant=constant,
                     residual=tight, window=(t0, t1))
