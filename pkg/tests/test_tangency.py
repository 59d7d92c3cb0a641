import math

import numpy as np
import pytest

from hopfcycle.errors import DegenerateContact, NotAligned, NoTangency
from hopfcycle.maps import CallableMap, ParamTriple, ToyGlobalMap, ToyModelConfig, ToyUnfolding
from hopfcycle.tangency import (
    GlobalMapCoefficients,
    OmegaWindow,
    WindowKind,
    check_EC,
    delta_prime,
    e_k_quantity,
    eta_star,
    expanding_quantity,
    extract_global_coefficients,
    omega_for_phase,
    omega_window_contains,
    quadratic_tangency_find,
    splitting_mu,
)

M_MINUS = np.array([0.0, 0.0, 2.5])
M_PLUS = np.array([0.0, 2.0, 0.0])


def coeffs(b=(1.0, 0.0), c=(0.0, 1.0), d=1.0):
    return GlobalMapCoefficients(0, 0, 0, 0, b[0], b[1], c[0], c[1], d, (0.0, 2.0), 2.5)


def toy_coeffs(eps=0.2, mu=0.0):
    return extract_global_coefficients(ToyGlobalMap(ToyModelConfig(eps=eps, mu=mu)), M_MINUS, [0, 2, mu])


def test_toy_coefficients():
    c = toy_coeffs()
    assert (c.b1, c.b2) == pytest.approx((10.0, 0.0))
    assert (c.c1, c.c2) == pytest.approx((0.2, 0.0))
    assert c.d == pytest.approx(100.0, rel=1e-12)
    assert c.a22 == pytest.approx(-0.2)


def test_misaligned_base_point():
    with pytest.raises(NotAligned):
        extract_global_coefficients(ToyGlobalMap(ToyModelConfig()), [0, 0, 2.4], M_PLUS)


def test_extract_reports_mu():
    G = ToyGlobalMap(ToyModelConfig(mu=0.03))
    assert extract_global_coefficients(G, M_MINUS, M_PLUS).mu == pytest.approx(0.03, abs=1e-15)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.3, 0.33])
def test_expanding_quantity_independent_of_eps(eps):
    assert expanding_quantity(toy_coeffs(eps)) == pytest.approx(2.0, abs=1e-10)


def test_expanding_quantity_simple():
    assert expanding_quantity(coeffs()) == 1.0


def test_check_EC():
    assert check_EC(toy_coeffs())
    assert not check_EC(coeffs(b=(1, 0), c=(0.5, 0)))
    assert not check_EC(coeffs())  # exactly 1 is not expanding


def test_expanding_quantity_invariance():
    """Rotating (x1, x2) and scaling x -> s x, y -> u y leaves b c unchanged."""
    rng = np.random.default_rng(3)
    G = ToyGlobalMap(ToyModelConfig())
    base = expanding_quantity(toy_coeffs())
    for _ in range(100):
        th = rng.uniform(0, 2 * math.pi)
        s, u = rng.uniform(0.2, 5.0, 2)
        R = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
        S = np.diag([s, s, u]) @ R
        Sinv = np.linalg.inv(S)

        g = CallableMap(
            lambda x, S=S, Sinv=Sinv: G(np.asarray(x, float) @ Sinv.T) @ S.T,
            lambda x, S=S, Sinv=Sinv: S @ G.jacobian(np.asarray(x, float) @ Sinv.T) @ Sinv,
        )
        mm, mp = S @ M_MINUS, S @ M_PLUS
        E = expanding_quantity(extract_global_coefficients(g, mm, mp, align_tol=1e-6))
        assert abs(E - base) < 1e-10


def test_tangency_certificate():
    e = 0.2
    curve = lambda t: np.array([2 / e * t - 4 / e**2 * t * t, 2.0, 4 / e**2 * t * t])
    cert = quadratic_tangency_find(curve, 2, (-0.1, 0.1))
    assert abs(cert.t_star) < 1e-8
    np.testing.assert_allclose(cert.point.array, [0, 2, 0], atol=1e-8)
    assert cert.d_coeff == pytest.approx(100.0, abs=1e-6)


def test_tangency_toy_global_curve():
    G = ToyGlobalMap(ToyModelConfig())
    cert = quadratic_tangency_find(lambda s: G(M_MINUS + [0, 0, s]), 2, (-0.1, 0.1))
    assert cert.d_coeff == pytest.approx(100.0, abs=1e-6)


def test_transverse_line():
    with pytest.raises(NoTangency):
        quadratic_tangency_find(lambda t: np.array([t, 0.0, t]), 2, (-1, 1))


def test_cubic_contact():
    with pytest.raises(DegenerateContact):
        quadratic_tangency_find(lambda t: np.array([t, 0.0, t**3]), 2, (-1, 1))


def test_shifted_parabola_has_no_contact():
    with pytest.raises(NoTangency):
        quadratic_tangency_find(lambda t: np.array([t, 0.0, t * t + 0.1]), 2, (-1, 1))


@pytest.mark.parametrize("mu", [0.0, 0.01, -0.01])
def test_splitting_mu(mu):
    assert splitting_mu(ToyGlobalMap(ToyModelConfig(mu=mu)), M_MINUS) == pytest.approx(mu, abs=1e-12)


def test_splitting_mu_from_family():
    sys = ToyUnfolding()(ParamTriple(0.004, 0.5, 0.0))
    assert splitting_mu(sys.global_, sys.m_minus) == pytest.approx(0.004, abs=1e-12)


def test_eta_star_identity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        c1, c2 = rng.normal(size=2)
        eta = eta_star(coeffs(c=(c1, c2)))
        for kw in rng.uniform(0, 10, 5):
            lhs = c1 * math.cos(kw) + c2 * math.sin(kw)
            assert lhs == pytest.approx(math.hypot(c1, c2) * math.sin(kw + eta), abs=1e-12)


def test_e_k_toy_example():
    c = toy_coeffs()
    assert e_k_quantity(c, 6, math.pi / 6) == pytest.approx(2.0, abs=1e-12)


def test_e_k_maximal_at_three_half_pi():
    c = coeffs(b=(3.0, 4.0), c=(0.3, -0.2))
    eta = eta_star(c)
    for k in (2, 6, 9):
        w = omega_for_phase(k, eta, 1.5 * math.pi, 1.0)
        assert e_k_quantity(c, k, w) == pytest.approx(expanding_quantity(c), rel=1e-12)


def test_e_k_direct_formula():
    c = coeffs(b=(2.0, 0.0), c=(0.7, 0.0))
    # with c2 = 0 and k omega = 0 (mod 2 pi): E = -b c1
    assert e_k_quantity(c, 4, math.pi / 2) == pytest.approx(-2.0 * 0.7)


def test_e_k_rejects_k():
    with pytest.raises(ValueError):
        e_k_quantity(coeffs(), 0, 1.0)


def _window_at_phase(kind, phase, k=4):
    c = coeffs(b=(2.0, 0.0), c=(1.0, 0.0))
    eta = eta_star(c)
    w = OmegaWindow.from_coefficients(kind, k, c)
    return omega_window_contains(w, omega_for_phase(k, eta, phase, 1.0))


def test_window_examples():
    assert _window_at_phase(WindowKind.BD, math.pi / 2)
    assert not _window_at_phase(WindowKind.PS, math.pi / 2)
    assert _window_at_phase(WindowKind.PS, 1.5 * math.pi)
    assert _window_at_phase("Ex", 1.5 * math.pi)
    assert not _window_at_phase(WindowKind.BD, 0.0)


def test_window_nesting():
    c = toy_coeffs()
    grid = np.linspace(1e-4, math.pi - 1e-4, 10_000)
    for k in (3, 6, 10):
        bd, ps, ex = (omega_window_contains(OmegaWindow.from_coefficients(kd, k, c), grid) for kd in WindowKind)
        assert not np.any(ex & ~ps)
        assert not np.any(ps & ~bd)
        assert ex.any()


def test_delta_prime():
    assert delta_prime(2.0) == pytest.approx(1 / 12)


def test_omega_for_phase():
    w = omega_for_phase(6, math.pi / 2, 1.5 * math.pi, math.pi / 6)
    assert 0 < w < math.pi
    assert math.sin(6 * w + math.pi / 2) == pytest.approx(-1.0, abs=1e-12)
