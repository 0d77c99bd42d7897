import math

import numpy as np
import pytest

from coralsim import verification
from coralsim.config import ICSpec, default_config
from coralsim.integrator import (
    IntegrationError,
    SimHistory,
    StepControl,
    cfl_dt,
    positivity_deficit,
    run,
    step,
)
from coralsim.model import ModelParams, StateA
from coralsim.spectral import Grid, ScalarField, VectorField, dealias

TWO_PI = 2.0 * math.pi


def gauss(center, width, amp):
    return ICSpec(kind="gaussian", amplitude=amp, center=center, width=width)


def diffusion_config(d=2, N=48, t_end=0.5, dt=0.01):
    L = TWO_PI
    mid = (L / 2,) * d
    off = (L / 2 + 0.3,) + (L / 2,) * (d - 1)
    return default_config(
        "A", d, N, L, t_end, chi=0.0, eps=0.0, dt=dt,
        ics={"e": gauss(mid, 0.5, 1.0), "s": gauss(off, 0.4, 0.6)},
    )


def active_config(t_end=0.4, dt=0.02, **kw):
    L = TWO_PI
    return default_config(
        "A", 2, 48, L, t_end, chi=1.0, eps=1.0, dt=dt,
        ics={"e": gauss((L / 2 - 0.3, L / 2), 0.5, 1.0),
             "s": gauss((L / 2 + 0.3, L / 2), 0.5, 0.8)},
        **kw,
    )


class TestStepControl:
    def test_defaults_valid(self):
        c = StepControl()
        assert 0 < c.cfl <= 1 and c.dt_min <= c.dt_max

    def test_rejects_bad_cfl(self):
        with pytest.raises(ValueError):
            StepControl(cfl=0.0)
        with pytest.raises(ValueError):
            StepControl(cfl=1.5)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            StepControl(dt_min=0.2, dt_max=0.1)


class TestStep:
    def test_pure_diffusion_matches_heat_semigroup(self):
        import coralsim.config as cc

        cfg = diffusion_config()
        state = cc.build_initial_state(cfg)
        params = cc.build_params(cfg)
        out = state
        for _ in range(20):
            out = step(out, params, dt=0.01)
        exact = verification.heat_exact(state.e, 0.2)
        dev = np.max(np.abs(out.e.values - exact.values)) / np.max(np.abs(exact.values))
        assert dev <= 1e-12

    def test_zero_state_stays_zero(self):
        g = Grid(2, 32, TWO_PI)
        state = StateA(e=ScalarField.zeros(g), s=ScalarField.zeros(g))
        params = ModelParams(variant="A", chi=1.0, eps=1.0)
        for _ in range(3):
            state = step(state, params, dt=0.05)
        assert np.all(state.e.values == 0.0)
        assert np.all(state.s.values == 0.0)

    def test_local_order_near_three(self):
        # the observed one-step order tends to 3 from below as dt shrinks
        # (the error constant carries stiff L^2 N terms), so gate at 2.9
        import coralsim.config as cc
        from coralsim.suites import _order_config

        cfg = _order_config()
        state = cc.build_initial_state(cfg)
        params = cc.build_params(cfg)
        grid = cc.build_grid(cfg)
        u = cc.build_prescribed_velocity(cfg, grid)

        def advance(dt, n):
            out = state
            for _ in range(n):
                out = step(out, params, dt, u_given=u)
            return out.e.values

        err1 = np.max(np.abs(advance(0.02, 1) - advance(0.02 / 64, 64)))
        err2 = np.max(np.abs(advance(0.01, 1) - advance(0.01 / 64, 64)))
        assert math.log2(err1 / err2) >= 2.9

    def test_rejects_bad_dt(self):
        g = Grid(2, 32, TWO_PI)
        state = StateA(e=ScalarField.zeros(g), s=ScalarField.zeros(g))
        with pytest.raises(ValueError):
            step(state, ModelParams(variant="A"), dt=0.0)

    def test_step_determinism(self):
        import coralsim.config as cc

        cfg = active_config()
        params = cc.build_params(cfg)
        a = step(cc.build_initial_state(cfg), params, dt=0.02)
        b = step(cc.build_initial_state(cfg), params, dt=0.02)
        assert np.array_equal(a.e.values, b.e.values)
        assert np.array_equal(a.s.values, b.s.values)


class TestCflDt:
    def test_quiescent_state_gives_dt_max(self):
        g = Grid(2, 32, TWO_PI)
        state = StateA(e=ScalarField.zeros(g), s=ScalarField.zeros(g))
        control = StepControl(dt_max=0.05)
        got = cfl_dt(state, ModelParams(variant="A", chi=0.0), control)
        assert got == 0.05

    def test_advective_speed_arithmetic(self):
        # h = 0.1, |u| = 2, cfl = 0.4 -> dt = 0.02
        g = Grid(2, 64, 6.4)
        state = StateA(e=ScalarField.zeros(g), s=ScalarField.zeros(g))
        X, _ = np.meshgrid(*g.coords(), indexing="ij")
        u = VectorField.from_arrays(
            g, [2.0 * np.cos(TWO_PI * X / 6.4 * 0), np.zeros(g.shape)])
        control = StepControl(cfl=0.4, dt_max=10.0)
        got = cfl_dt(state, ModelParams(variant="A", chi=0.0), control, u_given=u)
        assert got == pytest.approx(0.4 * 0.1 / 2.0, rel=1e-12)

    def test_chemotactic_speed_scales_with_chi(self):
        import coralsim.config as cc

        cfg = active_config()
        state = cc.build_initial_state(cfg)
        control = StepControl(cfl=0.4, dt_max=100.0)
        dt1 = cfl_dt(state, ModelParams(variant="A", chi=1.0), control)
        dt2 = cfl_dt(state, ModelParams(variant="A", chi=2.0), control)
        assert dt2 == pytest.approx(dt1 / 2.0, rel=1e-12)
        dt_half = cfl_dt(state, ModelParams(variant="A", chi=0.5), control)
        assert dt_half >= dt1  # halving chi cannot shrink the step


class TestPositivity:
    def test_detects_undershoot(self):
        g = Grid(2, 32, TWO_PI)
        vals = np.full(g.shape, 1.0)
        vals[0, 0] = -1e-3
        state = StateA(e=ScalarField(g, vals), s=ScalarField.zeros(g))
        breached, worst = positivity_deficit(state, StepControl())
        assert breached and worst == pytest.approx(1e-3)

    def test_accepts_tiny_undershoot(self):
        g = Grid(2, 32, TWO_PI)
        vals = np.full(g.shape, 1.0)
        vals[0, 0] = -1e-12
        state = StateA(e=ScalarField(g, vals), s=ScalarField.zeros(g))
        breached, _ = positivity_deficit(state, StepControl(tol_neg=1e-10))
        assert not breached


class TestRun:
    def test_zero_t_end_single_record(self):
        cfg = diffusion_config(t_end=0.0)
        history = run(cfg)
        assert len(history.records) == 1
        assert history.records[0].t == 0.0

    def test_pure_diffusion_matches_oracle(self):
        import coralsim.config as cc

        cfg = diffusion_config(t_end=0.5, dt=0.01)
        state0 = cc.build_initial_state(cfg)
        final = verification.collect_states(cfg, [0.5])[0.5]
        exact = verification.heat_exact(state0.e, 0.5)
        dev = np.max(np.abs(final["e"] - exact.values)) / np.max(np.abs(exact.values))
        assert dev <= 1e-10

    def test_records_on_schedule(self):
        cfg = diffusion_config(t_end=0.5, dt=0.013).replace(record_interval=0.1)
        history = run(cfg)
        assert [round(t, 10) for t in history.times] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]

    def test_final_time_recorded_when_off_grid(self):
        cfg = diffusion_config(t_end=0.25, dt=0.01).replace(record_interval=0.1)
        history = run(cfg)
        assert history.times[-1] == pytest.approx(0.25)

    def test_masses_conserved_without_reaction(self):
        cfg = diffusion_config(t_end=0.5, dt=0.01)
        history = run(cfg)
        m0 = history.records[0]
        for rec in history.records:
            assert abs(rec.m_e - m0.m_e) <= 1e-11 * m0.m_e
            assert abs(rec.m_s - m0.m_s) <= 1e-11 * m0.m_s

    def test_mass_difference_conserved_with_reaction(self):
        cfg = active_config(t_end=0.5)
        history = run(cfg)
        d0 = history.records[0].mass_diff
        for rec in history.records:
            assert abs(rec.mass_diff - d0) <= 1e-12 * max(1.0, history.records[0].m_s)

    def test_masses_nonincreasing(self):
        cfg = active_config(t_end=0.5)
        history = run(cfg)
        for a, b in zip(history.records, history.records[1:]):
            assert b.m_e <= a.m_e * (1 + 1e-9)
            assert b.m_s <= a.m_s * (1 + 1e-9)

    def test_history_determinism(self):
        cfg = active_config()
        h1 = run(cfg)
        h2 = run(cfg)
        for a, b in zip(h1.records, h2.records):
            assert a.m_e == b.m_e and a.L2_s == b.L2_s and a.entropy_s == b.entropy_s

    def test_cfl_mode_runs(self):
        cfg = active_config().replace(dt=None, dt_max=0.05)
        history = run(cfg)
        assert history.records[-1].t == pytest.approx(0.4)

    def test_snapshot_sink_called_on_schedule(self):
        seen = []

        def sink(t, fields):
            seen.append((t, sorted(fields)))
            return f"snap-{len(seen)}"

        cfg = diffusion_config(t_end=0.3, dt=0.01).replace(snapshot_interval=0.1)
        history = run(cfg, snapshot_sink=sink)
        assert [round(t, 10) for t, _ in seen] == [0.0, 0.1, 0.2, 0.3]
        assert history.snapshots[0] == (0.0, "snap-1")
        assert seen[0][1] == ["e", "s"]

    def test_fatal_on_blowup(self):
        # self-attraction with a violently CFL-violating step overflows;
        # the run must die with the failing time, not return garbage
        import warnings

        L = TWO_PI
        cfg = default_config(
            "SINGLE", 2, 48, L, 10.0, chi=50.0, eps=0.0, dt=0.2,
            ics={"n": gauss((L / 2, L / 2), 0.5, 50.0)},
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(IntegrationError) as err:
                run(cfg)
        assert err.value.t > 0


class TestSimHistory:
    def test_series_skips_absent(self):
        from coralsim.diagnostics import DiagnosticRecord

        h = SimHistory(records=[
            DiagnosticRecord(t=0.0, m_e=1.0),
            DiagnosticRecord(t=1.0, m_e=None),
            DiagnosticRecord(t=2.0, m_e=0.5),
        ])
        ts, vs = h.series("m_e")
        assert list(ts) == [0.0, 2.0]
        assert list(vs) == [1.0, 0.5]
