import numpy as np
import scipy.integrate
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossdiff.errors import IncompatibleSourceError
from crossdiff.fields import (
    Grid1D, SpeciesState, aggregate, hminus1_seminorm, mass, neumann_laplacian, solve_poisson,
)


def dense_neumann(grid):
    """Full singular Neumann matrix for ``-phi''``."""
    N, dx = grid.N, grid.dx
    A = 2 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)
    A[0, 0] = A[-1, -1] = 1.0
    return A / dx**2


def cosine_error(N):
    grid = Grid1D(N)
    x = grid.centers
    sol = solve_poisson(grid, np.pi**2 * np.cos(np.pi * x))
    return float(np.max(np.abs(sol.phi - np.cos(np.pi * x)))), sol


class TestGrid:
    def test_geometry(self):
        g = Grid1D(4, 2.0)
        assert g.dx == 0.5
        np.testing.assert_allclose(g.centers, [0.25, 0.75, 1.25, 1.75])
        np.testing.assert_allclose(g.faces, [0, 0.5, 1, 1.5, 2])

    @pytest.mark.parametrize("N, length", [(2, 1.0), (10, 0.0), (10, -1.0)])
    def test_invalid(self, N, length):
        with pytest.raises(ValueError):
            Grid1D(N, length)


class TestState:
    def test_readonly_and_u0(self):
        s = SpeciesState(np.ones((2, 5)), [1.0, 0.5])
        with pytest.raises(ValueError):
            s.u[0, 0] = 3.0
        np.testing.assert_allclose(s.u0, 1.5)
        t = s.replace(2 * np.ones((2, 5)))
        np.testing.assert_allclose(t.u0, 3.0)
        np.testing.assert_allclose(s.u0, 1.5)

    def test_rejects(self):
        with pytest.raises(ValueError):
            SpeciesState(np.ones((3, 5)), [1.0, 1.0])
        with pytest.raises(ValueError):
            SpeciesState(np.full((1, 5), np.nan), [1.0])


class TestPoisson:
    def test_zero(self):
        sol = solve_poisson(Grid1D(16), np.zeros(16))
        assert np.all(sol.phi == 0) and np.all(sol.grad_phi == 0)

    def test_cosine(self):
        err, sol = cosine_error(128)
        assert err <= 1e-3
        assert abs(np.mean(sol.phi)) <= 1e-12
        assert sol.residual_inf <= 1e-8

    def test_second_order(self):
        errs = [cosine_error(N)[0] for N in (64, 128, 256)]
        for coarse, fine in zip(errs, errs[1:]):
            assert 3.6 <= coarse / fine <= 4.4

    def test_boundary_gradient_zero(self, rng):
        grid = Grid1D(33)
        rhs = rng.normal(size=33)
        sol = solve_poisson(grid, rhs - rhs.mean())
        assert sol.grad_phi[0] == 0.0 and sol.grad_phi[-1] == 0.0

    def test_dense_oracle(self, rng):
        grid = Grid1D(40, 2.5)
        rhs = rng.normal(size=40)
        rhs -= rhs.mean()
        phi = np.linalg.lstsq(dense_neumann(grid), rhs, rcond=None)[0]
        phi -= phi.mean()
        np.testing.assert_allclose(solve_poisson(grid, rhs).phi, phi, atol=1e-11)

    def test_laplacian_of_solution(self, rng):
        grid = Grid1D(50)
        rhs = rng.uniform(-1, 1, 50)
        rhs -= rhs.mean()
        sol = solve_poisson(grid, rhs)
        np.testing.assert_allclose(neumann_laplacian(grid, sol.phi), rhs, atol=1e-9)

    def test_incompatible(self):
        grid = Grid1D(20)
        with pytest.raises(IncompatibleSourceError) as info:
            solve_poisson(grid, np.full(20, 0.1))
        assert info.value.defect == pytest.approx(0.1)

    def test_shape(self):
        with pytest.raises(ValueError):
            solve_poisson(Grid1D(10), np.zeros(11))

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(float, 24, elements=st.floats(-10, 10)),
        arrays(float, 24, elements=st.floats(-10, 10)),
        st.floats(-5, 5),
    )
    def test_linearity(self, f, g, c):
        grid = Grid1D(24)
        f, g = f - f.mean(), g - g.mean()
        lhs = solve_poisson(grid, f + c * g).phi
        rhs = solve_poisson(grid, f).phi + c * solve_poisson(grid, g).phi
        scale = 1 + np.max(np.abs(f)) + abs(c) * np.max(np.abs(g))
        np.testing.assert_allclose(lhs, rhs, atol=1e-11 * scale)


class TestHminus1:
    def test_cosine(self):
        grid = Grid1D(2000)
        w = np.cos(np.pi * grid.centers)
        assert hminus1_seminorm(grid, w) == pytest.approx(1 / (np.pi * np.sqrt(2)), rel=1e-5)

    def test_dense_quadratic_form(self, rng):
        grid = Grid1D(30)
        w = rng.normal(size=30)
        w -= w.mean()
        phi = np.linalg.lstsq(dense_neumann(grid), w, rcond=None)[0]
        # ||grad phi||^2 = <phi, -phi''> = <phi, w>
        assert hminus1_seminorm(grid, w) ** 2 == pytest.approx(np.dot(phi, w) * grid.dx, rel=1e-10)


class TestAggregateMass:
    def test_aggregate_loop_oracle(self, rng):
        u = rng.uniform(0, 1, (4, 17))
        a = rng.uniform(0.1, 2, 4)
        expected = np.zeros(17)
        for i in reversed(range(4)):
            for j in range(17):
                expected[j] += a[i] * u[i, j]
        np.testing.assert_allclose(aggregate(u, a), expected, rtol=1e-14)

    def test_aggregate_mismatch(self):
        with pytest.raises(ValueError):
            aggregate(np.ones((2, 3)), [1.0])

    def test_mass_exact_for_linear(self):
        grid = Grid1D(13, 3.0)
        assert mass(grid, 2 + 5 * grid.centers) == pytest.approx(2 * 3 + 2.5 * 9, rel=1e-14)

    def test_mass_midpoint_vs_trapezoid(self):
        grid = Grid1D(400)
        f = np.exp(grid.centers)
        xf = grid.faces
        trap = scipy.integrate.trapezoid(np.exp(xf), xf)
        assert mass(grid, f) == pytest.approx(trap, rel=1e-5)
        assert mass(grid, f) == pytest.approx(np.e - 1, rel=1e-6)

    def test_mass_rows(self):
        grid = Grid1D(4)
        np.testing.assert_allclose(mass(grid, np.array([[1, 1, 1, 1], [0, 0, 0, 4.0]])), [1, 1])
