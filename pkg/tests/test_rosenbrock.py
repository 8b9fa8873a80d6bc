import numpy as np
import pytest
from numba import njit

from circuitrl import rosenbrock


@njit(nogil=True)
def linear_stiff_rhs(t, y, p, out):
    out[0] = -1000.0 * (y[0] - np.cos(t)) - np.sin(t)


@njit(nogil=True)
def logistic_rhs(t, y, p, out):
    out[0] = p[0] * y[0] * (1.0 - y[0] / p[1])


@njit(nogil=True)
def cubic_rhs(t, y, p, out):
    # Two uncoupled equilibria at y = (1, 2); mildly nonlinear.
    out[0] = -(y[0] - 1.0) ** 3 - 0.5 * (y[0] - 1.0)
    out[1] = 2.0 - y[1]


class TestIntegrator:
    def test_linear_stiff_accuracy_at_t1(self):
        # y' = -1000 (y - cos t) - sin t, y(0)=0 -> y(t) = cos t - exp(-1000 t)
        y, t, status, _, _, steps = rosenbrock.integrate(
            linear_stiff_rhs, 0.0, np.array([0.0]), 1.0, np.zeros(1),
            1e-8, 1e-10, 1e-6, 1_000_000, False, 0.0)
        exact = np.cos(1.0) - np.exp(-1000.0)
        assert status == rosenbrock.OK
        assert abs(y[0] - exact) <= 1e-6

    def test_nonstiff_accuracy(self):
        # logistic growth: y(t) = K / (1 + (K/y0 - 1) e^{-rt})
        r, K, y0 = 1.3, 10.0, 0.5
        y, t, status, _, _, _ = rosenbrock.integrate(
            logistic_rhs, 0.0, np.array([y0]), 3.0, np.array([r, K]),
            1e-9, 1e-12, 1e-4, 1_000_000, False, 0.0)
        exact = K / (1 + (K / y0 - 1) * np.exp(-r * 3.0))
        assert status == rosenbrock.OK
        assert abs(y[0] - exact) < 1e-7

    def test_determinism(self):
        a = rosenbrock.integrate(linear_stiff_rhs, 0.0, np.array([0.0]), 1.0,
                                 np.zeros(1), 1e-6, 1e-9, 1e-6, 100_000, False, 0.0)
        b = rosenbrock.integrate(linear_stiff_rhs, 0.0, np.array([0.0]), 1.0,
                                 np.zeros(1), 1e-6, 1e-9, 1e-6, 100_000, False, 0.0)
        assert a[0][0] == b[0][0] and a[5] == b[5]

    def test_steady_state_stop(self):
        y, t, status, residual, steady, _ = rosenbrock.integrate(
            cubic_rhs, 0.0, np.array([3.0, 0.1]), 1e6, np.zeros(1),
            1e-8, 1e-12, 1e-3, 1_000_000, False, 1e-10)
        assert steady and status == rosenbrock.OK
        assert residual <= 1e-10
        assert np.allclose(y, [1.0, 2.0], atol=1e-4)
        assert t < 1e6


class TestLinearAlgebra:
    def test_lu_matches_numpy_on_random_systems(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 3, 7, 17):
            for _ in range(20):
                a = rng.normal(size=(n, n))
                b = rng.normal(size=n)
                x_ref = np.linalg.solve(a, b)
                lu = a.copy()
                piv = np.empty(n, dtype=np.int64)
                assert rosenbrock._lu_factor(lu, piv)
                x = b.copy()
                rosenbrock._lu_solve(lu, piv, x)
                assert np.allclose(x, x_ref, rtol=1e-9, atol=1e-9)

    def test_lu_heavy_pivoting_case(self):
        # Permutation-like matrices force nontrivial pivoting.
        a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0], [3.0, 0.0, 0.0]])
        b = np.array([1.0, 2.0, 3.0])
        lu = a.copy()
        piv = np.empty(3, dtype=np.int64)
        assert rosenbrock._lu_factor(lu, piv)
        x = b.copy()
        rosenbrock._lu_solve(lu, piv, x)
        assert np.allclose(x, np.linalg.solve(a, b))

    def test_singular_matrix_flagged(self):
        a = np.zeros((2, 2))
        piv = np.empty(2, dtype=np.int64)
        assert not rosenbrock._lu_factor(a, piv)


class TestNewtonRefine:
    def test_polishes_nearby_equilibrium(self):
        y0 = np.array([1.3, 1.7])
        y, res, conv = rosenbrock.newton_refine(
            cubic_rhs, 0.0, y0, np.zeros(1), 1e-12, 50, 10.0, np.zeros(2), 0.0)
        assert conv
        assert np.allclose(y, [1.0, 2.0], atol=1e-8)

    def test_large_move_reports_failure(self):
        y0 = np.array([50.0, 50.0])
        y, res, conv = rosenbrock.newton_refine(
            cubic_rhs, 0.0, y0, np.zeros(1), 1e-12, 50, 1e-4, np.zeros(2), 0.0)
        assert not conv
