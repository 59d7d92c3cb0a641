import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import fixed_point

from hopfcycle.contraction import (
    ImplicitScalarProblem,
    ImplicitSystemProblem,
    derivative_bound_probe,
    solve_scalar,
    solve_system,
)
from hopfcycle.errors import ConfigError, NotContractive


def scalar(G, H, **kw):
    kw.setdefault("x_box", (-1.0, 1.0))
    return ImplicitScalarProblem(G, H, **kw)


def test_zero_correction():
    sol = solve_scalar(scalar(lambda x: 0.3 + x, lambda x, y: 0.0), 0.2)
    assert sol.y == pytest.approx(0.5) and sol.correction == 0.0


def test_sine_example():
    sol = solve_scalar(scalar(lambda x: 0.5, lambda x, y: 0.1 * math.sin(y)), 0.0)
    ref = float(fixed_point(lambda y: 0.5 + 0.1 * np.sin(y), 0.5, xtol=1e-15))
    assert abs(sol.y - ref) < 1e-12
    assert sol.residual < 1e-12
    assert abs(sol.correction) <= 2 * 0.1
    assert sol.iterations <= sol.iteration_bound


def test_supplied_bounds_skip_sampling():
    prob = ImplicitScalarProblem(lambda x: 0.5, lambda x, y: 0.1 * math.sin(y), sup_H=0.1, sup_Hy=0.1)
    assert solve_scalar(prob, 0.0).sup_H == 0.1


def test_no_bounds_no_box():
    with pytest.raises(ConfigError):
        solve_scalar(ImplicitScalarProblem(lambda x: 0.0, lambda x, y: 0.1 * y), 0.0)


def test_not_contractive_scalar():
    with pytest.raises(NotContractive) as info:
        solve_scalar(scalar(lambda x: 0.0, lambda x, y: 0.9 * y), 0.0)
    assert info.value.bound == pytest.approx(0.9, rel=1e-6)


def test_random_scalar_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        g0, g1, a, b, c = rng.uniform(-1, 1, 5)
        a *= 0.45
        prob = scalar(lambda x, g0=g0, g1=g1: g0 + g1 * x, lambda x, y, a=a, b=b, c=c: a * math.sin(y + b * x) + 0.01 * c, seed=int(rng.integers(1 << 30)))
        x = rng.uniform(-1, 1)
        sol = solve_scalar(prob, x)
        assert abs(sol.y - (g0 + g1 * x) - a * math.sin(sol.y + b * x) - 0.01 * c) < 1e-12
        assert abs(sol.correction) <= 2 * sol.sup_H


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-0.45, 0.45), g=st.floats(-2, 2), x=st.floats(-1, 1))
def test_scalar_property(a, g, x):
    prob = ImplicitScalarProblem(lambda xs: g, lambda xs, y: a * math.tanh(y - xs), sup_H=abs(a), sup_Hy=abs(a))
    sol = solve_scalar(prob, x)
    assert abs(sol.y - g - a * math.tanh(sol.y - x)) < 1e-12
    assert abs(sol.correction) <= 2 * abs(a) + 1e-300


# -- systems ---------------------------------------------------------------


def test_decoupled_system():
    prob = ImplicitSystemProblem(lambda x: np.full(3, 0.5), lambda x, y: 0.1 * np.sin(y), 3, x_box=(-1, 1))
    sol = solve_system(prob, 0.0)
    one = solve_scalar(scalar(lambda x: 0.5, lambda x, y: 0.1 * math.sin(y)), 0.0).y
    np.testing.assert_allclose(sol.y, one, atol=1e-13)


def test_coupled_system_matches_damped_iteration():
    H = lambda x, y: np.array([0.1 * math.sin(y[1]), 0.1 * math.cos(y[0])])
    prob = ImplicitSystemProblem(lambda x: np.zeros(2), H, 2, x_box=(-1, 1))
    sol = solve_system(prob, 0.0)
    y = np.zeros(2)
    for _ in range(10_000):
        nxt = 0.5 * y + 0.5 * H(0, y)
        if np.max(np.abs(nxt - y)) < 1e-17:
            break
        y = nxt
    np.testing.assert_allclose(sol.y, y, atol=1e-12)
    assert sol.residual < 1e-12


def test_system_not_contractive():
    H = lambda x, y: np.array([0.1 * math.sin(y[1]), 0.9 * y[1]])
    with pytest.raises(NotContractive):
        solve_system(ImplicitSystemProblem(lambda x: np.zeros(2), H, 2, x_box=(-1, 1)), 0.0)


def test_system_row_sum_rule():
    # each entry below 1/2 but the row sum is not
    H = lambda x, y: np.array([0.3 * math.sin(y[0]) + 0.3 * math.sin(y[1]), 0.1 * y[0]])
    with pytest.raises(NotContractive):
        solve_system(ImplicitSystemProblem(lambda x: np.zeros(2), H, 2, x_box=(-1, 1)), 0.0)


def test_random_system_instances():
    rng = np.random.default_rng(99)
    for _ in range(100):
        m = int(rng.integers(2, 5))
        C = rng.uniform(-1, 1, (m, m))
        C *= 0.45 / np.abs(C).sum(axis=1, keepdims=True)
        g = rng.uniform(-1, 1, m)
        s = rng.uniform(-1, 1, m)
        H = lambda x, y, C=C, s=s: np.sin(C @ y + s * x) * 0.45
        D = 0.45 * np.abs(C)
        prob = ImplicitSystemProblem(lambda x, g=g: g, H, m, sup_H=np.full(m, 0.45), sup_DyH=D)
        x = float(rng.uniform(-1, 1))
        sol = solve_system(prob, x)
        assert np.max(np.abs(sol.y - g - H(x, sol.y))) < 1e-12
        assert np.all(np.abs(sol.corrections) <= 2 * 0.45)


# -- derivative of the correction -----------------------------------------


def test_derivative_zero_when_H_ignores_x():
    prob = scalar(lambda x: 0.2, lambda x, y: 0.1 * math.sin(y))
    assert abs(derivative_bound_probe(prob, 0.3).dI_dx[0]) < 1e-7


def test_derivative_bound_on_grid():
    prob = scalar(lambda x: 0.0, lambda x, y: 0.1 * math.sin(x + y))
    for x in np.linspace(-0.9, 0.9, 7):
        pr = derivative_bound_probe(prob, x)
        assert abs(pr.dI_dx[0]) <= 0.2
        assert pr.bound == pytest.approx(0.2, rel=1e-3)


def test_derivative_scales_linearly():
    vals = []
    for a in (1e-3, 1e-2, 1e-1):
        prob = scalar(lambda x: 0.3, lambda x, y, a=a: a * x * math.tanh(y))
        vals.append(derivative_bound_probe(prob, 0.5).dI_dx[0] / a)
    assert vals[0] == pytest.approx(vals[1], rel=0.05)
    assert vals[1] == pytest.approx(vals[2], rel=0.2)
    assert vals[0] == pytest.approx(math.tanh(0.3), rel=1e-2)


def test_derivative_needs_constant_G():
    with pytest.raises(ConfigError):
        derivative_bound_probe(scalar(lambda x: x, lambda x, y: 0.1 * y), 0.0)
