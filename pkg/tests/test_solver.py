import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossdiff.coefficients import custom_model, eval_Q, preset_skt
from crossdiff.errors import IncompatibleSourceError, NumericalError, StateOutOfRangeError
from crossdiff.fields import Grid1D, SpeciesState, mass
from crossdiff.solver import (
    SchemeConfig, advance, aggregate_flux, aggregate_step, cfl_dt, poisson_for, run,
    species_flux, step,
)

from .conftest import PRESETS, smooth_state

HEAT = custom_model("1", "0", "0", [1.0], L=10.0)


def heat_state(grid, amp=1.0):
    return SpeciesState((1 + amp * np.cos(np.pi * grid.centers))[None, :], [1.0])


def random_state(rng, model, N):
    u = rng.uniform(0.0, 1.0, (model.n, N))
    u *= min(1.0, 0.9 * model.L / np.max(model.a @ u)) if np.isfinite(model.L) else 1.0
    return SpeciesState(u, model.a)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(dt=None), dict(dt=-1.0), dict(dt=1e-3, t_end=-1.0), dict(dt=1e-3, drift_flux="x"),
        dict(dt=1e-3, face_average="geo"), dict(dt=1e-3, cfl_safety=0.0),
        dict(dt=1e-3, positivity_floor=-1.0), dict(dt=1e-3, output_every=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SchemeConfig(**kwargs)


class TestFlux:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    @pytest.mark.parametrize("drift", ["centered", "upwind"])
    def test_uniform_state_zero_flux(self, name, drift):
        model = PRESETS[name]()
        grid = Grid1D(20)
        state = SpeciesState(np.full((model.n, 20), 0.2), model.a)
        poisson = poisson_for(grid, state.u0, state.u0)
        flux = species_flux(grid, state, model, poisson, SchemeConfig(dt=1e-4, drift_flux=drift))
        assert np.all(flux == 0)

    def test_heat_reduction(self, rng):
        grid = Grid1D(25)
        u = rng.uniform(0, 1, (1, 25))
        state = SpeciesState(u, [1.0])
        poisson = poisson_for(grid, state.u0, state.u0.mean())
        flux = species_flux(grid, state, HEAT, poisson, SchemeConfig(dt=1e-4))
        np.testing.assert_array_equal(flux[0, 1:-1], np.diff(u[0]) / grid.dx)
        assert flux[0, 0] == 0 and flux[0, -1] == 0

    def test_hand_computed_drift(self):
        # p = 0, q = 0, r = 1: flux = u_face * grad phi
        model = custom_model("0", "0", "1", [1.0], L=10.0)
        grid = Grid1D(4)
        state = SpeciesState(np.array([[1.0, 2.0, 3.0, 4.0]]), [1.0])
        poisson = poisson_for(grid, state.u0, state.u0.mean())
        g = poisson.grad_phi[1:-1]
        centered = species_flux(grid, state, model, poisson, SchemeConfig(dt=1e-4))
        np.testing.assert_allclose(centered[0, 1:-1], [1.5, 2.5, 3.5] * g)
        upwind = species_flux(grid, state, model, poisson,
                              SchemeConfig(dt=1e-4, drift_flux="upwind"))
        donor = np.where(g > 0, [2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        np.testing.assert_allclose(upwind[0, 1:-1], donor * g)

    def test_harmonic_average(self):
        model = custom_model("s", "0", "0", [1.0], L=10.0)
        grid = Grid1D(3)
        state = SpeciesState(np.array([[1.0, 3.0, 0.0]]), [1.0])
        poisson = poisson_for(grid, state.u0, state.u0.mean())
        flux = species_flux(grid, state, model, poisson, SchemeConfig(dt=1e-4, face_average="harmonic"))
        np.testing.assert_allclose(flux[0, 1:-1], [1.5 * 2 / grid.dx, 0.0])

    def test_skt_aggregate_flux_closed_form_vs_quadrature(self, rng):
        grid = Grid1D(30)
        closed = preset_skt(1.0, [1.0, 1.0], L=5.0)
        quad = custom_model("1 + s", "1", "1", [1.0, 1.0], L=5.0)
        u0 = rng.uniform(0.1, 2.0, 30)
        f = np.full(30, u0.mean())
        poisson = poisson_for(grid, u0, f)
        cfg = SchemeConfig(dt=1e-4)
        np.testing.assert_allclose(aggregate_flux(grid, u0, closed, poisson, cfg),
                                   aggregate_flux(grid, u0, quad, poisson, cfg), atol=1e-10)

    def test_aggregate_flux_uses_Q_increment(self, rng):
        model = PRESETS["skt"]()
        grid = Grid1D(12)
        u0 = rng.uniform(0.1, 2.0, 12)
        poisson = poisson_for(grid, u0, np.full(12, u0.mean()))
        flux = aggregate_flux(grid, u0, model, poisson, SchemeConfig(dt=1e-4))
        expected = [(eval_Q(model, u0[j + 1]) - eval_Q(model, u0[j])) / grid.dx
                    + 0.5 * (u0[j] + u0[j + 1]) * poisson.grad_phi[j + 1] for j in range(11)]
        np.testing.assert_allclose(flux[1:-1], expected, rtol=1e-12)

    def test_out_of_range(self):
        model = PRESETS["ion_transport"]()
        grid = Grid1D(5)
        state = SpeciesState(np.array([[0.9] * 5, [0.6] * 5]), model.a)
        with pytest.raises(StateOutOfRangeError):
            species_flux(grid, state, model, poisson_for(grid, state.u0, state.u0),
                         SchemeConfig(dt=1e-4))


class TestAggregation:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    @pytest.mark.parametrize("drift", ["centered", "upwind"])
    def test_weighted_flux_sum(self, rng, name, drift):
        model = PRESETS[name]()
        grid = Grid1D(32)
        cfg = SchemeConfig(dt=1e-4, drift_flux=drift, q_consistent=True)
        for _ in range(100):
            state = random_state(rng, model, 32)
            f = np.full(32, state.u0.mean())
            poisson = poisson_for(grid, state.u0, f)
            total = model.a @ species_flux(grid, state, model, poisson, cfg)
            agg = aggregate_flux(grid, state.u0, model, poisson, cfg)
            np.testing.assert_allclose(total, agg, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_step_commutes_with_aggregation(self, rng, name):
        model = PRESETS[name]()
        grid = Grid1D(32)
        cfg = SchemeConfig(auto_cfl=True, q_consistent=True)
        for _ in range(20):
            state = random_state(rng, model, 32)
            f = np.full(32, state.u0.mean())
            res = advance(state, model, grid, f, cfg)
            np.testing.assert_allclose(
                res.state.u0, aggregate_step(state.u0, model, grid, f, cfg, dt=res.dt), atol=1e-10)

    def test_default_flux_inconsistency_shrinks(self):
        # the presets have p + q s linear in s, where the default flux is
        # already consistent; exp(s) is not
        model = custom_model("exp(s)", "0", "0", [1.0, 1.0], L=5.0)
        defects = []
        for N in (16, 32, 64, 128):
            grid = Grid1D(N)
            state = smooth_state(model, grid)
            poisson = poisson_for(grid, state.u0, np.full(N, state.u0.mean()))
            cfg = SchemeConfig(dt=1e-4)
            diff = model.a @ species_flux(grid, state, model, poisson, cfg) - aggregate_flux(
                grid, state.u0, model, poisson, cfg)
            defects.append(np.max(np.abs(diff)))
        assert all(b < a for a, b in zip(defects, defects[1:]))
        assert defects[-1] < 1e-3


class TestCFL:
    def test_constant_p(self):
        grid = Grid1D(10)
        dt = cfl_dt(np.ones(10), HEAT, grid, SchemeConfig(dt=1.0, cfl_safety=0.5))
        assert dt == pytest.approx(0.25 * grid.dx**2, rel=1e-14)

    def test_degenerate(self):
        model = custom_model("0", "0", "0", [1.0])
        dt = cfl_dt(np.zeros(10), model, Grid1D(10), SchemeConfig(dt=1.0))
        assert np.isfinite(dt) and dt > 1e20

    def test_drift_contribution(self):
        model = PRESETS["skt"]()
        grid = Grid1D(16)
        state = smooth_state(model, grid)
        poisson = poisson_for(grid, state.u0, np.full(16, state.u0.mean()))
        cfg = SchemeConfig(auto_cfl=True)
        assert cfl_dt(state, model, grid, cfg, poisson) <= cfl_dt(state, model, grid, cfg)


class TestRun:
    def test_zero_data(self):
        model = PRESETS["skt"]()
        grid = Grid1D(16)
        state = SpeciesState(np.zeros((2, 16)), model.a)
        traj = run(state, model, grid, 0.0, SchemeConfig(dt=1e-4, t_end=1e-2, output_every=10))
        assert traj.steps == 100
        assert all(np.all(s.state.u == 0) for s in traj.snapshots)

    def test_t_end_zero(self):
        model = PRESETS["skt"]()
        grid = Grid1D(16)
        state = smooth_state(model, grid)
        traj = run(state, model, grid, state.u0.mean(), SchemeConfig(dt=1e-4))
        assert traj.steps == 0 and len(traj.snapshots) == 1
        assert traj.final.state is state

    def test_incompatible(self):
        grid = Grid1D(16)
        with pytest.raises(IncompatibleSourceError):
            run(heat_state(grid), HEAT, grid, 0.0, SchemeConfig(dt=1e-5, t_end=1e-3))

    def test_snapshot_times(self):
        grid = Grid1D(16)
        traj = run(heat_state(grid), HEAT, grid, 1.0,
                   SchemeConfig(dt=1e-4, t_end=1.05e-3, output_every=4))
        np.testing.assert_allclose(traj.times, [0, 4e-4, 8e-4, 1.05e-3], rtol=1e-12)
        assert traj.steps == 11

    def test_heat_decay(self):
        grid = Grid1D(128)
        traj = run(heat_state(grid), HEAT, grid, 1.0, SchemeConfig(dt=1e-5, t_end=0.05))
        u = traj.final.state.u[0]
        amp = 2 * np.sum((u - 1) * np.cos(np.pi * grid.centers)) * grid.dx
        assert amp == pytest.approx(np.exp(-np.pi**2 * 0.05), rel=0.02)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_conservation(self, name):
        model = PRESETS[name]()
        grid = Grid1D(32)
        state = smooth_state(model, grid)
        f = np.full(32, state.u0.mean())
        m0 = mass(grid, state.u)
        cfg = SchemeConfig(auto_cfl=True)
        for _ in range(1000):
            res = advance(state, model, grid, f, cfg)
            assert res.clamped_mass == 0
            state = res.state
        np.testing.assert_allclose(mass(grid, state.u), m0, rtol=1e-12)

    def test_deterministic(self):
        model = PRESETS["ion_transport"]()
        grid = Grid1D(24)
        state = smooth_state(model, grid)
        cfg = SchemeConfig(auto_cfl=True, t_end=5e-3)
        f = state.u0.mean()
        a = run(state, model, grid, f, cfg).final.state.u
        b = run(state, model, grid, f, cfg).final.state.u
        assert np.array_equal(a, b)

    def test_first_order_in_time(self):
        model = PRESETS["skt"]()
        grid = Grid1D(16)
        state = smooth_state(model, grid)
        f = state.u0.mean()
        dt0 = 0.4 * cfl_dt(state, model, grid, SchemeConfig(auto_cfl=True))
        finals = [run(state, model, grid, f, SchemeConfig(dt=dt0 / 2**k, t_end=0.01)).final.state.u
                  for k in range(3)]
        ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
        assert 1.8 <= ratio <= 2.2

    def test_positivity_upwind(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 4))
            a = rng.uniform(0.5, 2.0, n)
            model = preset_skt(rng.uniform(0.2, 2.0), a, L=10.0)
            grid = Grid1D(int(rng.integers(16, 48)))
            state = SpeciesState(rng.uniform(0, 1, (n, grid.N)), a)
            f = state.u0.mean() + rng.uniform(-0.3, 0.3) * np.cos(np.pi * grid.centers)
            traj = run(state, model, grid, f,
                       SchemeConfig(auto_cfl=True, t_end=0.01, drift_flux="upwind"))
            assert traj.clamp_events == 0
            assert np.min(traj.final.state.u) >= 0

    def test_unstable_raises_nonfinite(self):
        grid = Grid1D(64)
        with pytest.raises(NumericalError, match="step"):
            run(heat_state(grid, 0.5), HEAT, grid, 1.0,
                SchemeConfig(dt=1.0, t_end=1e4, positivity_floor=0.0))

    def test_clamp_recorded(self, caplog):
        grid = Grid1D(8)
        state = SpeciesState(np.array([[0, 0, 0, 1.0, 0, 0, 0, 0]]), [1.0])
        cfg = SchemeConfig(dt=grid.dx**2)  # twice the stable step
        with caplog.at_level(logging.WARNING, logger="crossdiff"):
            out = step(state, HEAT, grid, state.u0.mean(), cfg)
        assert np.min(out.u) == 0
        assert "clamp" in caplog.text
        traj = run(state, HEAT, grid, state.u0.mean(), SchemeConfig(dt=grid.dx**2, t_end=grid.dx**2))
        assert traj.clamp_events == 1 and traj.clamped_mass > 0 and traj.tainted


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_preserved_single_step(seed):
    rng = np.random.default_rng(seed)
    model = PRESETS["skt"]()
    grid = Grid1D(20)
    state = random_state(rng, model, 20)
    res = advance(state, model, grid, state.u0.mean(), SchemeConfig(auto_cfl=True))
    np.testing.assert_allclose(mass(grid, res.state.u), mass(grid, state.u), rtol=1e-13, atol=1e-15)
