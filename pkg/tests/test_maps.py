import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopfcycle.errors import ConfigError, LeftChart, NonFinite, NotInSection
from hopfcycle.maps import (
    AffineMap,
    CallableMap,
    Chart,
    FirstReturnSpec,
    NormalFormTestMap,
    ParamTriple,
    StatePoint,
    ToyGlobalMap,
    ToyLocalMap,
    ToyModelConfig,
    ToyUnfolding,
    block_rotation_map,
    eval_toy_global,
    eval_toy_local,
    fd_taylor,
    first_return_eval,
    jacobian_fd,
    measure_unfolding,
    unfolding_jacobian,
)

from conftest import rel_err


# -- toy local map ---------------------------------------------------------


def test_local_origin_fixed(toy_cfg):
    out = eval_toy_local(StatePoint(0.0, 0.0, 0.0), toy_cfg)
    assert out.array.tolist() == [0.0, 0.0, 0.0]


def test_local_substitution(toy_cfg):
    out = eval_toy_local(StatePoint(3.0, 0.0, 1.0), toy_cfg).array
    np.testing.assert_allclose(out, [math.cos(math.pi / 6), math.sin(math.pi / 6), 3.0], rtol=0, atol=1e-15)


def test_local_twice(toy_cfg):
    p = StatePoint(0.0, 0.0, 2.5 / 9)
    out = eval_toy_local(eval_toy_local(p, toy_cfg), toy_cfg).array
    np.testing.assert_allclose(out, [0.0, 0.0, 2.5], atol=1e-15)


def test_local_rejects_wrong_chart(toy_cfg):
    with pytest.raises(ValueError):
        eval_toy_local(StatePoint(0, 0, 0, Chart.GLOBAL_NEIGHBORHOOD), toy_cfg)


def test_local_batched(toy_cfg):
    L = ToyLocalMap(toy_cfg)
    pts = np.random.default_rng(0).uniform(-1, 1, (5, 4, 3))
    out = L(pts)
    assert out.shape == pts.shape
    np.testing.assert_allclose(out[2, 3], L(pts[2, 3]))


# -- toy global map --------------------------------------------------------


@pytest.mark.parametrize(
    "p, expected",
    [((0, 0, 2.5), (0, 2, 0)), ((0, 0, 2.6), (0, 2, 1)), ((0, 1, 2.5), (0, 1.8, 0))],
)
def test_global_values(toy_cfg, p, expected):
    out = eval_toy_global(StatePoint(*p, Chart.GLOBAL_NEIGHBORHOOD), toy_cfg)
    np.testing.assert_allclose(out.array, expected, atol=1e-12)
    assert out.chart is Chart.RETURN_SECTION


def test_global_mu_additive():
    cfg = ToyModelConfig(mu=0.01)
    out = ToyGlobalMap(cfg)(np.array([0.0, 0.0, 2.5]))
    np.testing.assert_allclose(out, [0, 2, 0.01], atol=1e-15)


@pytest.mark.parametrize("eps", [0.0, 0.4, -0.1, float("nan")])
def test_config_rejects_eps(eps):
    with pytest.raises(ConfigError):
        ToyModelConfig(eps=eps)


def test_config_rejects_lambda():
    with pytest.raises(ConfigError):
        ToyModelConfig(lam=1.5)


def test_statepoint_nonfinite():
    with pytest.raises(NonFinite):
        StatePoint(float("inf"), 0.0, 0.0)


def test_param_triple_omega_range():
    with pytest.raises(ConfigError):
        ParamTriple(0.0, 4.0, 0.0)


# -- Jacobians -------------------------------------------------------------


def test_fd_identity():
    I = CallableMap(lambda x: np.asarray(x, float))
    np.testing.assert_allclose(jacobian_fd(I, [0.3, -1.0, 2.0]), np.eye(3), atol=1e-10)


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        jacobian_fd(CallableMap(lambda x: x), [0, 0, 0], h=0.0)


def test_local_jacobian_is_block(toy_cfg):
    lam, w, g = 1 / 3, math.pi / 6, 3.0
    expected = np.array([[lam * math.cos(w), -lam * math.sin(w), 0], [lam * math.sin(w), lam * math.cos(w), 0], [0, 0, g]])
    np.testing.assert_allclose(jacobian_fd(ToyLocalMap(toy_cfg), [0, 0, 0]), expected, atol=1e-10)
    np.testing.assert_allclose(ToyLocalMap(toy_cfg).jacobian([0, 0, 0]), expected, atol=1e-15)


def test_global_jacobian_at_m_minus(toy_cfg):
    e = toy_cfg.eps
    J = jacobian_fd(ToyGlobalMap(toy_cfg), [0, 0, 2.5])
    assert J[0, 2] == pytest.approx(2 / e, rel=1e-9)
    assert J[2, 0] == pytest.approx(e, rel=1e-9)
    assert abs(J[2, 2]) < 1e-8


def _models(rng):
    fam = ToyUnfolding()
    sys6 = fam(ParamTriple(0.001, 0.6, -0.1))
    return {
        "toy_local": (ToyLocalMap(ToyModelConfig()), lambda: rng.uniform([-2, -2, 0], [2, 2, 3])),
        "toy_global": (ToyGlobalMap(ToyModelConfig(mu=0.02)), lambda: rng.uniform([-1, -1, 2.0], [1, 1, 3.0])),
        "first_return_k6": (sys6.first_return(6).map, lambda: np.array([0, 2, 2.5 / 3**6]) + rng.uniform(-0.05, 0.05, 3) * [1, 1, 1e-3]),
        "block": (block_rotation_map(1 / 3, 0.7, 3.0), lambda: rng.uniform(-1, 1, 3)),
        "affine": (AffineMap(rng.normal(size=(3, 3)), center=rng.normal(size=3)), lambda: rng.uniform(-1, 1, 3)),
        "normal_form": (NormalFormTestMap(1.0, -1.0), lambda: rng.uniform(-0.5, 0.5, 3)),
    }


@pytest.mark.parametrize("name", ["toy_local", "toy_global", "first_return_k6", "block", "affine", "normal_form"])
def test_analytic_jacobians_match_fd(name):
    rng = np.random.default_rng(7)
    model, draw = _models(rng)[name]
    worst = 0.0
    for _ in range(100):
        x = draw()
        h = 1e-5 * max(1.0, float(np.max(np.abs(x))))
        if name == "first_return_k6":
            h = 1e-7
        worst = max(worst, rel_err(model.jacobian(x), jacobian_fd(model, x, h)))
    assert worst < 1e-6, worst


def test_batched_jacobian_matches_pointwise():
    m = NormalFormTestMap(0.8, 1.0)
    pts = np.random.default_rng(1).uniform(-0.3, 0.3, (10, 3))
    J = m.jacobian(pts)
    for p, Jp in zip(pts, J):
        np.testing.assert_allclose(Jp, m.jacobian(p), atol=1e-15)


def test_global_taylor_matches_fd(toy_cfg):
    G = ToyGlobalMap(toy_cfg)
    x = np.array([0.1, -0.2, 2.55])
    exact = G.taylor(x)
    est = fd_taylor(G, x)
    assert rel_err(est.hess, exact.hess) < 1e-6
    assert np.max(np.abs(est.third)) < 1e-3 * np.max(np.abs(exact.hess))


def test_taylor_compose_matches_fd():
    fam = ToyUnfolding()
    T = fam(ParamTriple(0.0, 0.5, 0.0)).first_return(2).map
    x = np.array([0.01, 2.0, 2.5 / 9 + 1e-4])
    assert rel_err(T.taylor(x).hess, fd_taylor(T, x).hess) < 1e-6


# -- first return ----------------------------------------------------------


def test_first_return_k2(family):
    spec = FirstReturnSpec(2, ToyLocalMap(ToyModelConfig()), ToyGlobalMap(ToyModelConfig()), 0.5, np.array([0, 0, 2.5 / 9]))
    out = first_return_eval(spec, StatePoint(0, 0, 2.5 / 9))
    np.testing.assert_allclose(out.array, [0, 2, 0], atol=1e-14)


def test_first_return_leaves_chart():
    cfg = ToyModelConfig()
    spec = FirstReturnSpec(2, ToyLocalMap(cfg), ToyGlobalMap(cfg), 2.0, np.array([0.0, 0.0, 1.0]))
    with pytest.raises(LeftChart) as info:
        first_return_eval(spec, StatePoint(0, 0, 1.0))
    assert info.value.step >= 1


def test_first_return_k6_lands_on_m_plus():
    mu = 0.003
    cfg = ToyModelConfig(mu=mu)
    spec = FirstReturnSpec(6, ToyLocalMap(cfg), ToyGlobalMap(cfg), 0.5, np.array([0, 0, 2.5 / 3**6]))
    out = first_return_eval(spec, [0, 0, 2.5 / 3**6])
    np.testing.assert_allclose(out.array, [0, 2, mu], atol=1e-12)


def test_first_return_outside_section():
    sys = ToyUnfolding()(ParamTriple(0.0, 0.5, 0.0))
    with pytest.raises(NotInSection):
        first_return_eval(sys.first_return(4), [1.0, 2.0, 0.0])


def test_first_return_spec_validates():
    cfg = ToyModelConfig()
    with pytest.raises(ConfigError):
        FirstReturnSpec(0, ToyLocalMap(cfg), ToyGlobalMap(cfg), 0.1)


@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 8), u=st.floats(-0.5, 0.5))
def test_first_return_is_composition(k, u):
    cfg = ToyModelConfig()
    L, G = ToyLocalMap(cfg), ToyGlobalMap(cfg)
    spec = FirstReturnSpec(k, L, G, 1.0)
    x = np.array([0.1 * u, 0.2, (2.5 + u) / 3**k])
    y = x
    for _ in range(k):
        y = L(y)
    np.testing.assert_allclose(spec.map(x), G(y), rtol=1e-13, atol=1e-13)


# -- unfolding -------------------------------------------------------------


def test_measure_unfolding_is_identity(family):
    p = ParamTriple(0.013, 0.7, -0.05)
    np.testing.assert_allclose(measure_unfolding(family(p)), p.array, atol=1e-12)


def test_unfolding_jacobian_identity(family):
    assert unfolding_jacobian(family, ParamTriple(0.0, math.pi / 6, 0.0)) == pytest.approx(1.0, abs=1e-6)


def test_unfolding_jacobian_frozen_mu(family):
    frozen = lambda p: family(ParamTriple(0.0, p.omega, p.rho))
    assert abs(unfolding_jacobian(frozen, ParamTriple(0.0, math.pi / 6, 0.0))) < 1e-9


def test_unfolding_jacobian_scaled_family(family):
    # mu = 2 a, omega = b, rho = 3 c  ->  determinant 6
    scaled = lambda p: family(ParamTriple(2 * p.mu, p.omega, 3 * p.rho))
    assert unfolding_jacobian(scaled, ParamTriple(0.0, 0.5, 0.0)) == pytest.approx(6.0, rel=1e-6)


# -- synthetic normal-form map --------------------------------------------


def test_normal_form_map_radial_law():
    m = NormalFormTestMap(0.9, -1.0)
    r = 1e-2
    out = m(np.array([r, 0.0, 0.1]))
    # |nu z + alpha z^2 zbar| = r |1 - lc r^2| for alpha = -nu lc
    assert math.hypot(out[0], out[1]) == pytest.approx(r * (1 + r * r), rel=1e-14)
    assert out[2] == pytest.approx(0.03)
