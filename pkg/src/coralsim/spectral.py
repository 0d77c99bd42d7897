"""Spectral calculus on a uniform periodic torus [0, L)^d.

Transforms follow the scipy.fft convention: unnormalized forward
(``rfftn``), 1/N^d inverse (``irfftn``).  Under this normalization Parseval
reads

    sum(f**2) * h**d  ==  (h**d / N**d) * sum(w * |fhat|**2)

where ``w`` are the rfft doubling weights (2 on interior columns of the
half-spectrum last axis, 1 on the k=0 and Nyquist columns).

Derivative multipliers zero the Nyquist mode on the differentiated axis so
that odd derivatives of real fields stay real.  The zero mode of the inverse
Laplacian is gauged to 0; only gradients of it ever enter the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as _fft

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "gradient",
    "divergence",
    "laplacian",
    "inv_laplacian",
    "dealias",
    "leray_project",
]


@dataclass(frozen=True)
class Grid:
    """Uniform isotropic periodic grid with cached wavenumber tables.

    Parameters
    ----------
    d : dimension, 2 or 3
    N : points per axis, even and >= 8 (shared by all axes)
    L : physical axis length (shared by all axes)
    """

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.d}")
        if self.N < 8 or self.N % 2 != 0:
            raise ValueError(f"grid size N must be even and >= 8, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"domain length L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def rshape(self) -> tuple:
        """Shape of the rfftn half-spectrum."""
        return (self.N,) * (self.d - 1) + (self.N // 2 + 1,)

    @property
    def _axes(self) -> tuple:
        return tuple(range(-self.d, 0))

    @cached_property
    def k_table(self) -> tuple:
        """Per-axis integer wavenumbers scaled by 2*pi/L (full fft order)."""
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        return tuple(k1.copy() for _ in range(self.d))

    @cached_property
    def _n_int(self) -> tuple:
        """Integer mode numbers per axis, broadcastable to the half-spectrum."""
        full = np.rint(np.fft.fftfreq(self.N) * self.N).astype(np.int64)
        half = np.arange(self.N // 2 + 1, dtype=np.int64)
        out = []
        for j in range(self.d):
            n = half if j == self.d - 1 else full
            sh = [1] * self.d
            sh[j] = n.size
            out.append(n.reshape(sh))
        return tuple(out)

    @cached_property
    def k_broadcast(self) -> tuple:
        """Wavenumbers per axis, broadcastable to the half-spectrum."""
        scale = 2.0 * np.pi / self.L
        return tuple(scale * n.astype(np.float64) for n in self._n_int)

    @cached_property
    def k_deriv(self) -> tuple:
        """Derivative wavenumbers: as k_broadcast but Nyquist zeroed."""
        out = []
        for n, k in zip(self._n_int, self.k_broadcast):
            out.append(np.where(np.abs(n) == self.N // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def ik(self) -> tuple:
        """Spectral derivative multipliers i*k per axis (Nyquist zeroed)."""
        return tuple(1j * k for k in self.k_deriv)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the half-spectrum (Nyquist included)."""
        out = np.zeros(self.rshape)
        for k in self.k_broadcast:
            out = out + k * k
        return out

    @cached_property
    def inv_k2_mult(self) -> np.ndarray:
        """Multiplier for the inverse Laplacian: -1/|k|^2, zero mode gauged to 0."""
        k2 = self.k2.copy()
        k2.flat[0] = 1.0
        mult = -1.0 / k2
        mult.flat[0] = 0.0
        return mult

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: True where every |k_j| <= (N/3)*(2*pi/L)."""
        cut = self.N // 3
        keep = np.ones(self.rshape, dtype=bool)
        for n in self._n_int:
            keep = keep & (np.abs(n) <= cut)
        return keep

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Conjugate-pair doubling weights for half-spectrum reductions."""
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        sh = [1] * self.d
        sh[-1] = w.size
        return w.reshape(sh)

    def fwd(self, values: np.ndarray) -> np.ndarray:
        """Forward real transform over the trailing d axes (stacking allowed)."""
        return _fft.rfftn(values, axes=self._axes)

    def inv(self, spec: np.ndarray) -> np.ndarray:
        """Inverse transform back to real samples over the trailing d axes."""
        return _fft.irfftn(spec, s=self.shape, axes=self._axes)

    def coords(self) -> tuple:
        """Per-axis node coordinates x_j = j*h, j = 0..N-1."""
        x = self.h * np.arange(self.N)
        return tuple(x.copy() for _ in range(self.d))

    def mesh(self) -> tuple:
        """Sparse meshgrid of node coordinates."""
        return np.meshgrid(*self.coords(), indexing="ij", sparse=True)

    def parseval_sum(self, spec: np.ndarray) -> float:
        """sum(|fhat|^2) over the full spectrum, scaled to equal sum(f^2)*h^d."""
        s = np.sum(self.rfft_weights * (spec.real**2 + spec.imag**2))
        return float(s * self.cell_volume / self.N**self.d)

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature sum(values)*h^d (exact for band-limited integrands)."""
        return float(np.sum(values) * self.cell_volume)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.isfinite(values).all():
        raise ValueError(f"{what} contains NaN or Inf")


@dataclass
class ScalarField:
    """Real samples of a scalar field on a grid, row-major over the nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        _check_finite(self.values, "scalar field")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape).copy())

    def hat(self) -> np.ndarray:
        return self.grid.fwd(self.values)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """d scalar components sharing one grid."""

    grid: Grid
    components: tuple

    def __post_init__(self):
        self.components = tuple(self.components)
        if len(self.components) != self.grid.d:
            raise ValueError(
                f"expected {self.grid.d} components, got {len(self.components)}"
            )
        for c in self.components:
            if c.grid != self.grid:
                raise ValueError("vector components must share one grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, tuple(ScalarField.zeros(grid) for _ in range(grid.d)))

    @classmethod
    def from_arrays(cls, grid: Grid, arrays) -> "VectorField":
        return cls(grid, tuple(ScalarField(grid, a) for a in arrays))

    def stacked(self) -> np.ndarray:
        """(d, N, ..., N) view of the component samples."""
        return np.stack([c.values for c in self.components])

    def max_speed(self) -> float:
        sq = sum(c.values**2 for c in self.components)
        return float(np.sqrt(np.max(sq)))

    def copy(self) -> "VectorField":
        return VectorField(self.grid, tuple(c.copy() for c in self.components))


# ---------------------------------------------------------------------------
# spectral operators


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient; exact on resolved modes, Nyquist derivative zeroed."""
    g = f.grid
    fh = f.hat()
    spec = np.stack([ik * fh for ik in g.ik])
    return VectorField.from_arrays(g, g.inv(spec))


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    out = np.zeros(g.rshape, dtype=complex)
    for ik, c in zip(g.ik, v.components):
        out += ik * g.fwd(c.values)
    return ScalarField(g, g.inv(out))


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    return ScalarField(g, g.inv(-g.k2 * f.hat()))


def inv_laplacian(f: ScalarField) -> ScalarField:
    """Solve Laplace(u) = f spectrally; the k=0 mode of u is gauged to 0."""
    g = f.grid
    return ScalarField(g, g.inv(g.inv_k2_mult * f.hat()))


def dealias(f: ScalarField) -> ScalarField:
    """2/3-rule truncation: zero all modes with any |k_j| > (N/3)*(2*pi/L)."""
    g = f.grid
    return ScalarField(g, g.inv(np.where(g.dealias_mask, f.hat(), 0.0)))


def grad_inv_laplacian_hat(grid: Grid, fh: np.ndarray) -> np.ndarray:
    """Half-spectra of the nonlocal attraction velocity grad(Laplace^-1 f)."""
    ph = grid.inv_k2_mult * fh
    return np.stack([ik * ph for ik in grid.ik])


def leray_project_hat(grid: Grid, vh: np.ndarray) -> np.ndarray:
    """Leray projection on stacked component half-spectra (d, ...)."""
    kd = grid.k_deriv
    ksq = np.zeros(grid.rshape)
    for k in kd:
        ksq = ksq + k * k
    safe = np.where(ksq > 0.0, ksq, 1.0)
    kdotv = np.zeros(grid.rshape, dtype=complex)
    for j in range(grid.d):
        kdotv += kd[j] * vh[j]
    kdotv /= safe
    return np.stack([vh[j] - kd[j] * kdotv for j in range(grid.d)])


def leray_project(v: VectorField) -> VectorField:
    """P v = v - grad(Laplace^-1 div v); mean flow preserved."""
    g = v.grid
    vh = g.fwd(v.stacked())
    return VectorField.from_arrays(g, g.inv(leray_project_hat(g, vh)))
