"""Global-map coefficients, the expanding quantity, tangency certificates and omega-windows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DegenerateContact, NoConvergence, NotAligned, NoTangency
from .maps import MapModel, StatePoint, as_array

E_BD = 1.0 / 20.0


@dataclass(frozen=True)
class GlobalMapCoefficients:
    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float
    c1: float
    c2: float
    d: float
    x_plus: tuple[float, float]
    y_minus: float
    mu: float = 0.0

    @property
    def b(self) -> float:
        return math.hypot(self.b1, self.b2)

    @property
    def c(self) -> float:
        return math.hypot(self.c1, self.c2)


def extract_global_coefficients(
    global_: MapModel, M_minus, M_plus, align_tol: float = 1e-8
) -> GlobalMapCoefficients:
    """First and second derivative data of the global map at ``M_minus``.

    The x-components of the image must land on ``M_plus``; the y-offset of
    the image is returned as ``mu``.
    """
    xm = as_array(M_minus)
    xp = as_array(M_plus)
    tay = global_.taylor(xm)
    if np.max(np.abs(tay.value[:2] - xp[:2])) > 1e-10:
        raise NotAligned(f"image {tay.value} of M- does not match M+ {xp}")
    J = tay.jac
    if abs(J[2, 2]) > align_tol:
        raise NotAligned(f"d ybar / d y = {J[2, 2]:.3e} at M-, base points are not on the tangency orbit")
    return GlobalMapCoefficients(
        a11=float(J[0, 0]),
        a12=float(J[0, 1]),
        a21=float(J[1, 0]),
        a22=float(J[1, 1]),
        b1=float(J[0, 2]),
        b2=float(J[1, 2]),
        c1=float(J[2, 0]),
        c2=float(J[2, 1]),
        d=0.5 * float(tay.hess[2, 2, 2]),
        x_plus=(float(xp[0]), float(xp[1])),
        y_minus=float(xm[2]),
        mu=float(tay.value[2] - xp[2]),
    )


def expanding_quantity(coeffs: GlobalMapCoefficients) -> float:
    return coeffs.b * coeffs.c


def check_EC(coeffs: GlobalMapCoefficients) -> bool:
    return expanding_quantity(coeffs) > 1.0


def delta_prime(E: float) -> float:
    """Half-width used by the exclusion window, (E - 1) / (6 E)."""
    return (E - 1.0) / (6.0 * E)


def eta_star(coeffs: GlobalMapCoefficients) -> float:
    """Phase with c1 cos(k w) + c2 sin(k w) = |c| sin(k w + eta), in [0, 2 pi)."""
    return float(np.arctan2(coeffs.c1, coeffs.c2) % (2 * math.pi))


def e_k_quantity(coeffs: GlobalMapCoefficients, k: int, omega: float) -> float:
    if k < 1:
        raise ValueError("k must be positive")
    return -coeffs.b * (coeffs.c1 * math.cos(k * omega) + coeffs.c2 * math.sin(k * omega))


# --------------------------------------------------------------------------
# Tangency detection


@dataclass(frozen=True)
class TangencyCertificate:
    t_star: float
    point: StatePoint
    d_coeff: float
    residuals: tuple[float, float]


def _derivs(g: Callable[[float], float], t: float, h: float) -> tuple[float, float, float]:
    """Value, first and second derivative with five-point stencils."""
    f = [g(t + j * h) for j in (-2, -1, 0, 1, 2)]
    d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
    d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    return f[2], d1, d2


def quadratic_tangency_find(
    curve: Callable[[float], object],
    plane_normal_coord: int,
    t_bracket: tuple[float, float],
    tol: float = 1e-8,
    max_iter: int = 100,
) -> TangencyCertificate:
    """Locate a quadratic contact of ``curve`` with the plane {coordinate = 0}."""
    lo, hi = t_bracket
    width = hi - lo

    def g(t):
        return float(as_array(curve(t))[plane_normal_coord])

    grid = np.linspace(lo, hi, 201)
    t = float(grid[np.argmin([abs(g(s)) for s in grid])])
    h = 1e-3 * width
    scale = max(1.0, max(abs(g(s)) for s in grid[::20]) / width**2)
    for _ in range(max_iter):
        _, d1, d2 = _derivs(g, t, h)
        if d2 == 0.0:
            break
        step = d1 / d2
        t -= step
        if not lo - width <= t <= hi + width:
            raise NoTangency("critical point search left the bracket")
        if abs(step) < 1e-15 * max(1.0, abs(t)):
            break
    g0, g1, g2 = _derivs(g, t, h)
    if not (lo <= t <= hi) or abs(g1) > tol * scale * max(1.0, width):
        raise NoTangency("separation has no critical point in the bracket")
    if abs(g2) / 2 < 1e-6 * scale:
        raise DegenerateContact(f"second derivative {g2:.3e} vanishes at the contact")
    if abs(g0) > tol * scale:
        raise NoTangency(f"critical value {g0:.3e} does not vanish")
    p = as_array(curve(t))
    return TangencyCertificate(t, StatePoint.from_array(p), g2 / 2, (g0, g1))


def splitting_mu(global_: MapModel, M_minus, max_iter: int = 50, window: float = 0.5) -> float:
    """Critical value of ybar along the image of the local unstable axis through ``M_minus``."""
    x0 = as_array(M_minus)
    s = 0.0
    for _ in range(max_iter):
        tay = global_.taylor(x0 + np.array([0.0, 0.0, s]))
        d1, d2 = tay.jac[2, 2], tay.hess[2, 2, 2]
        if d2 == 0.0:
            raise NotAligned("image curve has no quadratic fold")
        step = d1 / d2
        s -= step
        if abs(s) > window:
            raise NotAligned("no critical point of the image curve near M-")
        if abs(step) < 1e-15:
            break
    else:
        raise NoConvergence(max_iter)
    return float(global_(x0 + np.array([0.0, 0.0, s]))[2])


# --------------------------------------------------------------------------
# omega windows


class WindowKind(Enum):
    BD = "Bd"
    PS = "Ps"
    EX = "Ex"


@dataclass(frozen=True)
class OmegaWindow:
    kind: WindowKind
    k: int
    eta_star: float
    e_bd: float = E_BD
    delta_prime: float = 0.0

    @classmethod
    def from_coefficients(cls, kind: WindowKind | str, k: int, coeffs: GlobalMapCoefficients) -> "OmegaWindow":
        kind = WindowKind(kind) if isinstance(kind, str) else kind
        return cls(kind, k, eta_star(coeffs), E_BD, delta_prime(expanding_quantity(coeffs)))

    def phase_sine(self, omega):
        return np.sin(self.k * np.asarray(omega) + self.eta_star)


def omega_window_contains(window: OmegaWindow, omega) -> bool | np.ndarray:
    s = window.phase_sine(omega)
    if window.kind is WindowKind.BD:
        out = np.abs(s) > 2 * window.e_bd
    elif window.kind is WindowKind.PS:
        out = s < -2 * window.e_bd
    else:
        out = (s + 1 < window.delta_prime / 2) & (s < -2 * window.e_bd)
    return bool(out) if np.ndim(out) == 0 else out


def omega_for_phase(k: int, eta: float, phase: float, near: float) -> float:
    """The omega in (0, pi) closest to ``near`` with k omega + eta = phase (mod 2 pi)."""
    base = (phase - eta) / k
    period = 2 * math.pi / k
    m = round((near - base) / period)
    cands = [base + (m + j) * period for j in (-1, 0, 1)]
    cands = [w for w in cands if 0 < w < math.pi]
    if not cands:
        raise ValueError("no omega in (0, pi) with the requested phase")
    return min(cands, key=lambda w: abs(w - near))
