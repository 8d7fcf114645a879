# experiments/test_riccati.py
import numpy as np
import pytest

from core.errors import DimensionMismatch, GammaTooSmall
from core.quadform import max_quad_single
from core.riccati import GameSpec, hinf_riccati, io_to_state, lqr_gain_limit, riccati_step
from experiments.run_experiments import EXAMPLE_A, EXAMPLE_B, PRINTED_K, PRINTED_P, relative_difference


def _scalar_fixed_point(a, b, q, r, gamma):
    """Bisection on P = q + a^2 G - (a b G)^2 / (r + b^2 G), G = P / (1 - P / gamma^2)."""
    def excess(P):
        G = P / (1.0 - P / gamma ** 2)
        return q + a * a * G - (a * b * G) ** 2 / (r + b * b * G) - P

    lo, hi = q, gamma ** 2 * (1.0 - 1e-9)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_scalar_matches_closed_form_fixed_point():
    spec = GameSpec(np.eye(1), np.eye(1), 5.0)
    sol = hinf_riccati(np.array([[1.2]]), np.array([[1.0]]), spec)
    assert sol.P[0, 0] == pytest.approx(_scalar_fixed_point(1.2, 1.0, 1.0, 1.0, 5.0), rel=1e-8)
    assert sol.residual < 1e-8


def test_fixed_point_and_window():
    spec = GameSpec(np.eye(3), np.eye(1), 19.0)
    sol = hinf_riccati(EXAMPLE_A, EXAMPLE_B, spec)
    P_next, K = riccati_step(sol.P, EXAMPLE_A, EXAMPLE_B, spec)
    np.testing.assert_allclose(P_next, sol.P, atol=1e-8)
    np.testing.assert_allclose(K, sol.K, atol=1e-8)
    lam = np.linalg.eigvalsh(sol.P)
    assert lam[0] > 0.0 and lam[-1] < 19.0 ** 2
    # weights behind the reference matrices are unknown; the distance is informative only
    print("rel. diff P:", relative_difference(sol.P, PRINTED_P), "K:", relative_difference(sol.K, PRINTED_K))


def test_iterates_increase_from_q():
    spec = GameSpec(np.eye(3), np.eye(1), 19.0)
    P = spec.Q.copy()
    for _ in range(30):
        P_next, _ = riccati_step(P, EXAMPLE_A, EXAMPLE_B, spec)
        assert np.linalg.eigvalsh(P_next - P)[0] >= -1e-9
        P = P_next


def test_small_gamma_is_rejected():
    # the open-loop unstable scalar needs gamma well above 1
    spec = GameSpec(np.eye(1), np.eye(1), 1.0)
    with pytest.raises(GammaTooSmall):
        hinf_riccati(np.array([[2.0]]), np.array([[1.0]]), spec)


def test_large_gamma_approaches_lqr():
    A, B = np.array([[1.1, 0.3], [0.0, 0.9]]), np.array([[0.0], [1.0]])
    spec = GameSpec(np.eye(2), np.eye(1), 1e6)
    hinf = hinf_riccati(A, B, spec)
    lqr = lqr_gain_limit(A, B, spec)
    np.testing.assert_allclose(hinf.P, lqr.P, rtol=1e-4)
    np.testing.assert_allclose(hinf.K, lqr.K, rtol=1e-4, atol=1e-8)


def test_dimension_checks():
    spec = GameSpec(np.eye(2), np.eye(1), 5.0)
    with pytest.raises(DimensionMismatch):
        hinf_riccati(np.eye(3), np.ones((3, 1)), spec)
    with pytest.raises(ValueError):
        GameSpec(np.diag([1.0, 0.0]), np.eye(1), 5.0)
    with pytest.raises(ValueError):
        GameSpec(np.eye(2), np.eye(1), -1.0)


def test_io_realization_first_order():
    A, B = io_to_state([-1.0], [1.0])
    np.testing.assert_array_equal(A, [[1.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(B, [[0.0], [1.0]])


def test_io_realization_contains_double_integrator():
    # y_t = 2 y_{t-1} - y_{t-2} + u_{t-1}
    A, B = io_to_state([-2.0, 1.0], [1.0, 0.0])
    np.testing.assert_array_equal(A[:3, :3], EXAMPLE_A)
    np.testing.assert_array_equal(B[:3], EXAMPLE_B)


def test_io_realization_rejects_ragged_coefficients():
    with pytest.raises(DimensionMismatch):
        io_to_state([1.0, 2.0], [1.0])


def test_fixed_point_is_the_one_step_min_max(rng):
    spec = GameSpec(np.eye(3), np.eye(1), 19.0)
    sol = hinf_riccati(EXAMPLE_A, EXAMPLE_B, spec)

    def cost(x, u):
        y = EXAMPLE_A @ x + EXAMPLE_B @ u
        return float(x @ x + u @ u) + max_quad_single(sol.P, 19.0, y)[0]

    for _ in range(100):
        x = rng.standard_normal(3)
        u = -(sol.K @ x)
        best = cost(x, u)
        assert best == pytest.approx(float(x @ sol.P @ x), rel=1e-7)
        for du in (-1e-3, 1e-3):
            assert cost(x, u + du) >= best - 1e-9 * (1.0 + abs(best))


def _finite_horizon_coefficient(a, b, q, r, gamma, steps):
    """p_T of V_T(x) = p_T x^2 from V_0 = 0, inner max in closed form, outer min by zooming grids."""
    g2 = gamma ** 2
    p = 0.0
    for _ in range(steps):
        u = np.linspace(-5.0, 5.0, 2001)
        for _ in range(5):
            y = a + b * u
            J = q + r * u * u + p * g2 * y * y / (g2 - p)
            i = int(np.argmin(J))
            h = u[1] - u[0]
            u = np.linspace(u[i] - h, u[i] + h, 201)
        p = float(J[i])
    return p


def test_riccati_matches_long_finite_horizon_game():
    spec = GameSpec(np.eye(1), np.eye(1), 5.0)
    sol = hinf_riccati(np.array([[1.2]]), np.array([[1.0]]), spec)
    p_200 = _finite_horizon_coefficient(1.2, 1.0, 1.0, 1.0, 5.0, 200)
    assert p_200 == pytest.approx(sol.P[0, 0], rel=1e-6)


def test_io_realization_reproduces_the_recursion(rng):
    n = 3
    a, b = rng.uniform(-0.5, 0.5, size=n), rng.standard_normal(n)
    A, B = io_to_state(a, b)
    u = rng.standard_normal(50)
    y = np.zeros(50)
    x = np.zeros(2 * n)
    for t in range(50):
        y[t] = sum(-a[i - 1] * y[t - i] + b[i - 1] * u[t - i] for i in range(1, n + 1) if t - i >= 0)
        x = A @ x + B[:, 0] * u[t]
        assert x[0] == pytest.approx(y[t], rel=1e-12, abs=1e-12)
        assert x[n] == u[t]
