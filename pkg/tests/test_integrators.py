import numpy as np
import pytest

from lowrank_flow import linalg
from lowrank_flow.errors import ConfigError, DimensionError, NonFiniteError
from lowrank_flow.integrators import (FluxField, IntegratorConfig, chart_step, chart_substeps,
                                      euler_step, initial_state, integrate, ksl_step,
                                      ksl_substeps)
from lowrank_flow.manifold import LowRankState, split_project
from lowrank_flow.problems import ProblemSpec, matrix_approx_problem

from conftest import random_state


def fro(a):
    return np.linalg.norm(a)


def rel(a, b):
    return fro(a - b) / fro(b)


ZERO = FluxField(lambda z, t: np.zeros_like(z))


def random_flux(n, m, seed):
    """Z-independent flux, a fresh random matrix per time value."""
    def f(z, t):
        return np.random.default_rng([seed, int(round(t * 1e9))]).standard_normal((n, m))
    return FluxField(f)


class TestInitialState:
    def test_exact_rank(self, rng):
        a = random_state(rng, 10, 7, 3).to_dense()
        z = initial_state(a, 3)
        assert fro(z.to_dense() - a) <= 1e-12 * fro(a)

    def test_zero(self):
        z = initial_state(np.zeros((6, 5)), 3)
        np.testing.assert_array_equal(z.g, np.zeros((3, 3)))
        np.testing.assert_array_equal(z.u, np.eye(6)[:, :3])
        np.testing.assert_array_equal(z.v, np.eye(5)[:, :3])

    def test_eckart_young(self):
        z = initial_state(np.diag([3.0, 2.0, 1.0, 0.5]), 2)
        assert abs(fro(np.diag([3.0, 2.0, 1.0, 0.5]) - z.to_dense()) - np.sqrt(1.25)) < 1e-14

    def test_bad_rank(self):
        with pytest.raises(DimensionError):
            initial_state(np.ones((3, 4)), 4)


@pytest.mark.parametrize("step", [ksl_step, chart_step])
class TestSteppers:
    def test_zero_flux(self, step, rng):
        s = random_state(rng, 12, 9, 3)
        s1 = step(s, ZERO, 0.0, 0.1)
        assert fro(s1.to_dense() - s.to_dense()) <= 1e-12

    def test_orthonormality_restored(self, step, rng):
        s = random_state(rng, 12, 9, 3)
        s1 = step(s, random_flux(12, 9, 1), 0.0, 0.1)
        assert fro(s1.u.T @ s1.u - np.eye(3)) <= 1e-11
        assert fro(s1.v.T @ s1.v - np.eye(3)) <= 1e-11

    def test_zero_core_no_inversion(self, step, rng):
        s = random_state(rng, 12, 9, 3, core=np.zeros((3, 3)))
        s1 = step(s, random_flux(12, 9, 2), 0.0, 0.1)
        assert s1.is_finite()

    def test_exact_for_rank_r_increment(self, step, rng):
        # A(t) = U(t) S(t) V(t)^T of rank 3, increment flux
        u0, v0 = random_state(rng, 15, 10, 3).u, random_state(rng, 15, 10, 3).v
        du, dv = rng.standard_normal((15, 3)), rng.standard_normal((10, 3))

        def a(t):
            return (u0 + t * du) @ np.diag([3.0, 2.0, 1.0 + t]) @ (v0 + t * dv).T

        flux = FluxField(lambda z, t, dt: a(t + dt) - a(t), increment_mode=True)
        s1 = step(initial_state(a(0.0), 3), flux, 0.0, 0.05)
        assert rel(s1.to_dense(), a(0.05)) <= 1e-12

    def test_over_approximation(self, step, rng):
        u0 = random_state(rng, 15, 10, 2)
        a = lambda t: np.exp(t) * u0.to_dense()  # noqa: E731
        flux = FluxField(lambda z, t, dt: a(t + dt) - a(t), increment_mode=True)
        s = initial_state(a(0.0), 5)
        for k in range(5):
            s = step(s, flux, k * 0.1, 0.1)
        assert rel(s.to_dense(), a(0.5)) <= 1e-12


class TestKslChartEquivalence:
    def test_single_step_substeps(self, rng):
        s = random_state(rng, 20, 15, 4)
        f = random_flux(20, 15, 3)
        k = ksl_substeps(s, f, 0.0, 0.1)
        c = chart_substeps(s, f, 0.0, 0.1)
        assert fro(k.k1 - c.k1) <= 1e-12 * fro(k.k1)
        assert fro(k.l1 - c.l1) <= 1e-12 * fro(k.l1)

    def test_ten_steps(self, rng):
        s_k = s_c = random_state(rng, 20, 15, 4)
        f = random_flux(20, 15, 4)
        for k in range(10):
            s_k = ksl_step(s_k, f, 0.01 * k, 0.01)
            s_c = chart_step(s_c, f, 0.01 * k, 0.01)
            assert rel(s_c.to_dense(), s_k.to_dense()) <= 1e-10

    def test_differ_for_z_dependent_flux(self, rng):
        s = random_state(rng, 10, 8, 2)
        f = FluxField(lambda z, t: z * z)
        assert rel(chart_step(s, f, 0, 0.1).to_dense(), ksl_step(s, f, 0, 0.1).to_dense()) > 1e-8


class TestSubsteps:
    def setup_method(self):
        rng = np.random.default_rng(9)
        self.state = random_state(rng, 14, 11, 3)
        self.fhat = rng.standard_normal((14, 11))
        self.flux = FluxField(lambda z, t: self.fhat)
        self.dt = 0.05

    def test_chart_h_step_is_p1(self):
        c = chart_substeps(self.state, self.flux, 0.0, self.dt)
        s = self.state
        lhs = s.u @ c.h_hat @ s.v.T - s.to_dense()
        assert fro(lhs - self.dt * split_project(s, self.fhat, "P1")) <= 1e-12

    def test_chart_x_step_is_p2(self):
        c = chart_substeps(self.state, self.flux, 0.0, self.dt)
        s = self.state
        lhs = c.u1 @ c.h_tilde @ s.v.T - s.u @ c.h_hat @ s.v.T
        assert fro(lhs - self.dt * split_project(s, self.fhat, "P2")) <= 1e-12

    def test_chart_y_step_is_p3_in_updated_frame(self):
        c = chart_substeps(self.state, self.flux, 0.0, self.dt)
        s = self.state
        frame = LowRankState(c.u1, c.h_tilde, s.v)
        lhs = c.state.to_dense() - c.u1 @ c.h_tilde @ s.v.T
        assert fro(lhs - self.dt * split_project(frame, self.fhat, "P3")) <= 1e-12

    def test_ksl_k_step_is_q1(self):
        k = ksl_substeps(self.state, self.flux, 0.0, self.dt)
        s = self.state
        lhs = k.u1 @ k.g_hat @ s.v.T - s.to_dense()
        assert fro(lhs - self.dt * split_project(s, self.fhat, "Q1")) <= 1e-12

    def test_ksl_s_step_is_minus_q2(self):
        k = ksl_substeps(self.state, self.flux, 0.0, self.dt)
        frame = LowRankState(k.u1, k.g_hat, self.state.v)
        lhs = k.u1 @ (k.g_tilde - k.g_hat) @ self.state.v.T
        assert fro(lhs + self.dt * split_project(frame, self.fhat, "Q2")) <= 1e-12

    def test_pinv_matches_transpose(self):
        # the steppers use U^T in place of U^+; valid because factors stay orthonormal
        s1 = chart_step(self.state, self.flux, 0.0, self.dt)
        assert fro(linalg.pinv(s1.u) - s1.u.T) <= 1e-12
        assert fro(linalg.pinv(s1.v) - s1.v.T) <= 1e-12


class TestEuler:
    def test_zero(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(euler_step(x, ZERO, 0.0, 0.1), x)

    def test_constant_flux(self):
        c = np.array([[1.0, -2.0], [0.5, 4.0]])
        flux = FluxField(lambda z, t: c)
        x = np.zeros((2, 2))
        for k in range(8):
            x = euler_step(x, flux, k * 0.25, 0.25)
        np.testing.assert_array_equal(x, 8 * 0.25 * c)

    def test_compound_growth(self):
        flux = FluxField(lambda z, t: z)
        x = np.ones((1, 1))
        for k in range(10):
            x = euler_step(x, flux, 0.1 * k, 0.1)
        assert abs(x[0, 0] - 1.1**10) <= 1e-13
        assert abs(x[0, 0] - 2.5937424601) <= 1e-10


class TestIntegrate:
    def problem(self, flux, n=6, m=5):
        x0 = np.outer(np.arange(1.0, n + 1), np.ones(m))
        return ProblemSpec(n, m, flux, x0)

    def test_bookkeeping(self):
        rec = integrate(self.problem(ZERO), IntegratorConfig("ksl", 2, 0.1, 1.0))
        assert len(rec.times) == 11 and len(rec.states) == 11
        np.testing.assert_allclose(rec.times, np.arange(11) * 0.1, atol=1e-12)

    def test_stride_keeps_final(self):
        rec = integrate(self.problem(ZERO), IntegratorConfig("chart", 2, 0.1, 1.0, store_stride=3))
        assert list(rec.steps) == [0, 3, 6, 9, 10]

    def test_reference_errors(self):
        p = self.problem(ZERO)
        rec = integrate(p, IntegratorConfig("euler", 1, 0.1, 0.5), reference=lambda t: p.x0 + 1.0)
        np.testing.assert_allclose(rec.errors, np.sqrt(30), rtol=1e-14)

    def test_sigma_diagnostics(self):
        rec = integrate(self.problem(ZERO), IntegratorConfig("ksl", 2, 0.1, 0.2))
        assert np.all(rec.sigma_max >= rec.sigma_min)
        assert rec.sigma_min[0] < 1e-12  # x0 has rank one

    def test_nonfinite_aborts(self):
        blow = FluxField(lambda z, t: np.full_like(z, np.inf) if t > 0.25 else z)
        with pytest.raises(NonFiniteError) as info:
            integrate(self.problem(blow), IntegratorConfig("euler", 1, 0.1, 1.0))
        assert info.value.step == 4

    def test_step_count_validation(self):
        with pytest.raises(ConfigError):
            IntegratorConfig("ksl", 2, 0.3, 1.0)
        with pytest.raises(ConfigError):
            IntegratorConfig("rk4", 2, 0.1, 1.0)

    def test_rank_too_large(self):
        with pytest.raises(ConfigError):
            integrate(self.problem(ZERO), IntegratorConfig("ksl", 9, 0.1, 1.0))

    @pytest.mark.parametrize("method", ["ksl", "chart"])
    @pytest.mark.parametrize("r", [10, 20])
    def test_matrix_approx_exact(self, method, r):
        p = matrix_approx_problem(100, seed=0, flux_variant="increment")
        rec = integrate(p, IntegratorConfig(method, r, 5e-3, 1.0), reference=p.exact)
        assert rec.errors.max() <= 1e-12
