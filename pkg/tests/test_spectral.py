import math

import numpy as np
import pytest

from coralsim.spectral import (
    Grid,
    ScalarField,
    VectorField,
    dealias,
    divergence,
    gradient,
    inv_laplacian,
    laplacian,
    leray_project,
)

TWO_PI = 2.0 * math.pi


def grid2d(N=32, L=TWO_PI):
    return Grid(2, N, L)


def mesh(grid):
    return np.meshgrid(*grid.coords(), indexing="ij")


def random_field(grid, seed=0, smooth=True):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(grid.shape)
    f = ScalarField(grid, values)
    return dealias(f) if smooth else f


class TestGrid:
    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            Grid(1, 32, TWO_PI)
        with pytest.raises(ValueError):
            Grid(4, 32, TWO_PI)

    def test_rejects_odd_or_small_n(self):
        with pytest.raises(ValueError):
            Grid(2, 31, TWO_PI)
        with pytest.raises(ValueError):
            Grid(2, 6, TWO_PI)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            Grid(2, 32, 0.0)

    def test_wavenumber_table(self):
        g = grid2d(N=16, L=4.0)
        for k in g.k_table:
            assert k.shape == (16,)
            # zero mode present exactly once, max |k| at the Nyquist index
            assert np.count_nonzero(k == 0.0) == 1
            assert np.max(np.abs(k)) == pytest.approx(8 * TWO_PI / 4.0)

    def test_cell_volume(self):
        g = Grid(3, 16, 2.0)
        assert g.cell_volume == pytest.approx((2.0 / 16) ** 3)

    def test_parseval(self):
        g = grid2d(N=48)
        rng = np.random.default_rng(3)
        v = rng.standard_normal(g.shape)
        lhs = np.sum(v**2) * g.cell_volume
        assert g.parseval_sum(g.fwd(v)) == pytest.approx(lhs, rel=1e-13)

    def test_parseval_3d(self):
        g = Grid(3, 16, 1.5)
        rng = np.random.default_rng(4)
        v = rng.standard_normal(g.shape)
        lhs = np.sum(v**2) * g.cell_volume
        assert g.parseval_sum(g.fwd(v)) == pytest.approx(lhs, rel=1e-13)


class TestScalarField:
    def test_rejects_nan(self):
        g = grid2d()
        bad = np.zeros(g.shape)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            ScalarField(g, bad)

    def test_rejects_shape_mismatch(self):
        g = grid2d()
        with pytest.raises(ValueError):
            ScalarField(g, np.zeros((4, 4)))

    def test_vector_needs_shared_grid(self):
        g = grid2d()
        other = grid2d(N=64)
        with pytest.raises(ValueError):
            VectorField(g, (ScalarField.zeros(g), ScalarField.zeros(other)))


class TestGradient:
    def test_single_mode(self):
        g = grid2d()
        X, Y = mesh(g)
        got = gradient(ScalarField(g, np.sin(X)))
        assert np.allclose(got.components[0].values, np.cos(X), atol=1e-12)
        assert np.allclose(got.components[1].values, 0.0, atol=1e-13)

    def test_constant(self):
        g = grid2d()
        got = gradient(ScalarField(g, np.full(g.shape, 3.7)))
        for c in got.components:
            assert np.allclose(c.values, 0.0, atol=1e-13)

    def test_mixed_mode(self):
        g = grid2d(N=48)
        X, Y = mesh(g)
        f = np.sin(2 * X) * np.cos(3 * Y)
        got = gradient(ScalarField(g, f))
        assert np.allclose(got.components[0].values, 2 * np.cos(2 * X) * np.cos(3 * Y), atol=1e-11)
        assert np.allclose(got.components[1].values, -3 * np.sin(2 * X) * np.sin(3 * Y), atol=1e-11)

    def test_analytic_relative_accuracy(self):
        g = grid2d(N=64)
        X, Y = mesh(g)
        f = np.sin(3 * X) * np.sin(2 * Y) + 0.3 * np.cos(5 * Y)
        got = gradient(ScalarField(g, f))
        exact = 3 * np.cos(3 * X) * np.sin(2 * Y)
        err = np.max(np.abs(got.components[0].values - exact))
        assert err <= 1e-12 * max(1.0, np.max(np.abs(exact)))


class TestLaplacian:
    def test_single_mode(self):
        g = grid2d()
        X, _ = mesh(g)
        got = laplacian(ScalarField(g, np.cos(X)))
        assert np.allclose(got.values, -np.cos(X), atol=1e-12)

    def test_constant(self):
        g = grid2d()
        got = laplacian(ScalarField(g, np.full(g.shape, 2.0)))
        assert np.allclose(got.values, 0.0, atol=1e-13)

    def test_mode_two(self):
        g = grid2d()
        X, _ = mesh(g)
        got = laplacian(ScalarField(g, np.sin(2 * X)))
        assert np.allclose(got.values, -4 * np.sin(2 * X), atol=1e-12)


class TestInvLaplacian:
    def test_single_mode(self):
        g = grid2d()
        X, _ = mesh(g)
        got = inv_laplacian(ScalarField(g, np.cos(X)))
        assert np.allclose(got.values, -np.cos(X), atol=1e-13)

    def test_constant_gauged_to_zero(self):
        g = grid2d()
        got = inv_laplacian(ScalarField(g, np.full(g.shape, 5.0)))
        assert np.allclose(got.values, 0.0, atol=1e-13)

    def test_mode_two(self):
        g = grid2d()
        X, _ = mesh(g)
        got = inv_laplacian(ScalarField(g, np.sin(2 * X)))
        assert np.allclose(got.values, -np.sin(2 * X) / 4.0, atol=1e-13)

    def test_roundtrip_removes_mean(self):
        g = grid2d(N=48)
        f = random_field(g, seed=7, smooth=False)
        got = laplacian(inv_laplacian(f))
        expected = f.values - f.values.mean()
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(got.values - expected)) <= 1e-11 * scale


class TestDealias:
    def test_low_modes_unchanged(self):
        g = grid2d(N=30)
        X, Y = mesh(g)
        f = np.cos(3 * X) * np.sin(5 * Y)  # |k| = 5 <= N/3 = 10
        got = dealias(ScalarField(g, f))
        assert np.allclose(got.values, f, atol=1e-13)

    def test_nyquist_mode_removed(self):
        g = grid2d(N=32)
        X, _ = mesh(g)
        f = np.cos(16 * X)
        got = dealias(ScalarField(g, f))
        assert np.max(np.abs(got.values)) <= 1e-13

    def test_idempotent(self):
        g = grid2d(N=48)
        f = random_field(g, seed=1, smooth=False)
        once = dealias(f)
        twice = dealias(once)
        assert np.max(np.abs(twice.values - once.values)) <= 1e-14 * np.max(np.abs(once.values))


class TestLinearity:
    @pytest.mark.parametrize("op", [gradient, laplacian, inv_laplacian])
    def test_linear(self, op):
        g = grid2d(N=48)
        f = random_field(g, seed=2, smooth=False)
        h = random_field(g, seed=3, smooth=False)
        a, b = 1.7, -0.4
        combo = ScalarField(g, a * f.values + b * h.values)
        got = op(combo)
        if isinstance(got, VectorField):
            parts = zip(got.components, op(f).components, op(h).components)
            for gc, fc, hc in parts:
                ref = a * fc.values + b * hc.values
                assert np.max(np.abs(gc.values - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))
        else:
            ref = a * op(f).values + b * op(h).values
            assert np.max(np.abs(got.values - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))


class TestLeray:
    def test_annihilates_gradients(self):
        g = grid2d()
        X, _ = mesh(g)
        v = VectorField.from_arrays(g, [np.sin(X), np.zeros(g.shape)])
        got = leray_project(v)
        for c in got.components:
            assert np.max(np.abs(c.values)) <= 1e-13

    def test_keeps_divergence_free_field(self):
        g = grid2d()
        X, Y = mesh(g)
        v = VectorField.from_arrays(g, [-np.sin(X) * np.cos(Y), np.cos(X) * np.sin(Y)])
        got = leray_project(v)
        for gc, vc in zip(got.components, v.components):
            assert np.max(np.abs(gc.values - vc.values)) <= 1e-13

    def test_preserves_mean_flow(self):
        g = grid2d()
        v = VectorField.from_arrays(g, [np.full(g.shape, 1.25), np.full(g.shape, -0.5)])
        got = leray_project(v)
        assert got.components[0].values.mean() == pytest.approx(1.25, abs=1e-13)
        assert got.components[1].values.mean() == pytest.approx(-0.5, abs=1e-13)

    def test_output_divergence_free(self):
        g = grid2d(N=48)
        rng = np.random.default_rng(11)
        v = VectorField.from_arrays(g, [rng.standard_normal(g.shape) for _ in range(2)])
        got = leray_project(v)
        div = divergence(got)
        assert np.max(np.abs(div.values)) <= 1e-12 * got.max_speed()

    def test_idempotent(self):
        g = Grid(3, 16, TWO_PI)
        rng = np.random.default_rng(12)
        v = VectorField.from_arrays(g, [rng.standard_normal(g.shape) for _ in range(3)])
        once = leray_project(v)
        twice = leray_project(once)
        for a, b in zip(twice.components, once.components):
            assert np.max(np.abs(a.values - b.values)) <= 1e-12 * once.max_speed()
