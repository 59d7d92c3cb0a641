"""Fixed points of first-return maps, multipliers and the Neimark-Sacker locus."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq, root_scalar

from .errors import (
    Ambiguous,
    DomainError,
    EigenFailure,
    HopfCycleError,
    NoConvergence,
    NoFixedPoint,
    NotBracketed,
    ResonanceGuard,
    SingularJacobian,
    WindowViolation,
)
from .maps import Chart, HomoclinicSystem, MapModel, ParamTriple, StatePoint, as_array, saddle_multipliers
from .tangency import (
    GlobalMapCoefficients,
    OmegaWindow,
    WindowKind,
    e_k_quantity,
    extract_global_coefficients,
    omega_window_contains,
)

RESONANT_ANGLES = (math.pi / 2, 2 * math.pi / 3)
RESONANCE_BAND = 1e-3
PAIR_IMAG_TOL = 1e-10


def near_resonance(psi: float, band: float = RESONANCE_BAND) -> bool:
    return any(abs(psi - r) < band for r in RESONANT_ANGLES)


@dataclass(frozen=True)
class FixedPointResult:
    point: StatePoint
    residual: float
    newton_iterations: int


@dataclass(frozen=True)
class MultiplierSet:
    nu1: complex
    nu2: complex
    nu3: complex
    psi: float | None = None

    def __iter__(self):
        return iter((self.nu1, self.nu2, self.nu3))

    @property
    def pair_product(self) -> complex:
        return self.nu1 * self.nu2

    @property
    def pair_trace(self) -> float:
        return float((self.nu1 + self.nu2).real)


def newton_fixed_point(
    map_: MapModel, guess, tol: float = 1e-12, max_iter: int = 50, cond_max: float = 1e14
) -> FixedPointResult:
    """Safeguarded Newton for ``T(p) = p``; the step is halved while the residual grows."""
    chart = guess.chart if isinstance(guess, StatePoint) else Chart.RETURN_SECTION
    x = as_array(guess).copy()
    F = map_(x) - x
    res = float(np.max(np.abs(F)))
    for it in range(max_iter + 1):
        if not math.isfinite(res):
            raise NoConvergence(it, res)
        if res <= tol:
            return FixedPointResult(StatePoint.from_array(x, chart), res, it)
        if it == max_iter:
            break
        A = map_.jacobian(x) - np.eye(3)
        cond = np.linalg.cond(A)
        if not cond < cond_max:
            raise SingularJacobian(cond)
        step = np.linalg.solve(A, -F)
        damp = 1.0
        for _ in range(30):
            xn = x + damp * step
            Fn = map_(xn) - xn
            rn = float(np.max(np.abs(Fn)))
            if rn < res or not math.isfinite(res):
                break
            damp *= 0.5
        else:
            # no decrease possible at this precision; accept the full step once
            xn = x + step
            Fn = map_(xn) - xn
            rn = float(np.max(np.abs(Fn)))
            if rn >= res:
                raise NoConvergence(it + 1, res)
        x, F, res = xn, Fn, rn
    raise NoConvergence(max_iter, res)


def _order_eigenvalues(ev: np.ndarray) -> MultiplierSet:
    ev = np.asarray(ev, dtype=complex)
    cplx = [i for i in range(3) if abs(ev[i].imag) > PAIR_IMAG_TOL]
    if len(cplx) == 2:
        i1 = cplx[0] if ev[cplx[0]].imag > 0 else cplx[1]
        nu1 = complex(ev[i1])
        nu3 = complex(ev[[i for i in range(3) if i not in cplx][0]].real)
        psi = float(np.angle(nu1)) if abs(abs(nu1) - 1) < 1e-6 else None
        return MultiplierSet(nu1, nu1.conjugate(), nu3, psi)
    vals = sorted((complex(v.real) for v in ev), key=abs)
    with np.errstate(divide="ignore"):
        dist = [abs(math.log(abs(v))) if v != 0 else math.inf for v in vals]
    i3 = max(i for i in range(3) if dist[i] == max(dist))
    rest = [vals[i] for i in range(3) if i != i3]
    return MultiplierSet(rest[0], rest[1], vals[i3], None)


def multipliers(map_: MapModel, fp) -> MultiplierSet:
    """Eigenvalues of the Jacobian at ``fp``; a conjugate pair goes to slots 1-2."""
    J = map_.jacobian(as_array(fp))
    try:
        ev = np.linalg.eigvals(J)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(ev)):
        raise EigenFailure("eigenvalues are not finite")
    return _order_eigenvalues(ev)


def rho_value(lambda_mod: float, gamma_mod: float) -> float:
    if not (lambda_mod > 0 and gamma_mod > 0):
        raise DomainError("multiplier moduli must be positive")
    return math.log(lambda_mod * gamma_mod)


class TangencyTag(Enum):
    SADDLE_11 = "Saddle11"
    SADDLE_FOCUS_12 = "SaddleFocus12"
    FOCUS_SADDLE_21 = "FocusSaddle21"
    BI_FOCUS_22 = "BiFocus22"


@dataclass(frozen=True)
class TangencyClass:
    tag: TangencyTag
    product: float


def classify(mults: MultiplierSet | Sequence[complex]) -> TangencyClass:
    """Classify a 3D saddle by the realness of its leading multipliers."""
    vals = [complex(v) for v in mults]
    if len(vals) != 3:
        raise ValueError(f"expected three multipliers, got {len(vals)}")
    if any(abs(abs(v) - 1) < 1e-10 for v in vals):
        raise Ambiguous("a multiplier lies on the unit circle")
    inside = sorted((v for v in vals if abs(v) < 1), key=abs)
    outside = sorted((v for v in vals if abs(v) > 1), key=abs)
    if not inside or not outside:
        raise ValueError("not a saddle: all multipliers on one side of the unit circle")
    lead_s, lead_u = inside[-1], outside[0]
    stable_focus = len(inside) == 2 and abs(inside[0].imag) > PAIR_IMAG_TOL
    unstable_focus = len(outside) == 2 and abs(outside[0].imag) > PAIR_IMAG_TOL
    if stable_focus:
        tag = TangencyTag.FOCUS_SADDLE_21
    elif unstable_focus:
        tag = TangencyTag.SADDLE_FOCUS_12
    else:
        tag = TangencyTag.SADDLE_11
    return TangencyClass(tag, abs(lead_s * lead_u))


class TraceAngle(NamedTuple):
    psi: float
    resonant: bool


def psi_of_trace(sigma: float) -> TraceAngle:
    if not abs(sigma) < 2:
        raise DomainError(f"|sigma| = {abs(sigma)} is not below 2")
    psi = math.acos(sigma / 2)
    return TraceAngle(psi, near_resonance(psi))


# --------------------------------------------------------------------------
# Neimark-Sacker locus


@dataclass(frozen=True)
class NSLocusPoint:
    k: int
    t: float
    omega: float
    mu: float
    rho: float
    fixed_point: FixedPointResult
    mults: MultiplierSet
    e_k: float
    E: float

    @property
    def params(self) -> ParamTriple:
        return ParamTriple(self.mu, self.omega, self.rho)

    @property
    def sigma(self) -> float:
        return self.mults.pair_trace


def system_coefficients(system: HomoclinicSystem) -> GlobalMapCoefficients:
    m_plus = np.array(system.m_plus, float)
    img = system.global_(np.asarray(system.m_minus, float))
    m_plus[2] = img[2]  # tolerate the splitting offset
    return extract_global_coefficients(system.global_, system.m_minus, m_plus)


class NSLocusSolver:
    """Solve for (mu, rho) such that T_k has a fixed point on the NS locus.

    ``family`` maps a :class:`ParamTriple` to a :class:`HomoclinicSystem`.
    The fixed point is placed by ``Y_Q = (E_k / 2d) lambda^k t`` where
    ``Y_Q`` is the y-coordinate after ``k`` local steps minus ``y-``.
    """

    def __init__(self, family: Callable[[ParamTriple], HomoclinicSystem], k: int, omega: float, tol: float = 1e-12):
        if k % 2:
            raise ValueError("k must be even")
        self.family = family
        self.k = k
        self.omega = omega
        self.tol = tol
        base = family(ParamTriple(0.0, omega, 0.0))
        self.coeffs = system_coefficients(base)
        self.E = self.coeffs.b * self.coeffs.c
        self.e_k = e_k_quantity(self.coeffs, k, omega)
        bd = OmegaWindow.from_coefficients(WindowKind.BD, k, self.coeffs)
        ps = OmegaWindow.from_coefficients(WindowKind.PS, k, self.coeffs)
        if not omega_window_contains(bd, omega):
            raise WindowViolation(f"omega={omega} outside the boundary window for k={k}")
        if not omega_window_contains(ps, omega):
            raise WindowViolation(f"omega={omega} outside the positive window for k={k}")
        self.rho0 = -math.log(self.e_k) / k
        self._warm: dict = {}

    # placement of the fixed point
    def y_target(self, rho: float, t: float, system: HomoclinicSystem) -> float:
        lam = saddle_multipliers(system.local, system.saddle)[0]
        return self.e_k / (2 * self.coeffs.d) * lam**self.k * t

    def shilnikov_y(self, system: HomoclinicSystem, x: np.ndarray) -> float:
        for _ in range(self.k):
            x = system.local(x)
        return float(x[2] - system.m_minus[2])

    def fixed_point_at(self, rho: float, t: float, mu_guess: float | None = None):
        """Inner solve: unknowns (x, mu) for fixed point plus Y-placement, rho fixed."""
        key = round(t, 12)
        warm = self._warm.get(key)
        sys0 = self.family(ParamTriple(0.0, self.omega, rho))
        ytar = self.y_target(rho, t, sys0)
        lam_s, _, gam = saddle_multipliers(sys0.local, sys0.saddle)
        if warm is not None:
            x, mu = warm[0].copy(), warm[1]
        else:
            x = np.array(sys0.m_plus, float)
            x[2] = (sys0.m_minus[2] + ytar) / gam**self.k
            mu = 0.0 if mu_guess is None else mu_guess
        hmu = 1e-7

        def residual(x, mu):
            sysm = self.family(ParamTriple(mu, self.omega, rho))
            T = sysm.first_return(self.k).map
            F = np.empty(4)
            F[:3] = T(x) - x
            F[3] = self.shilnikov_y(sysm, x) - ytar
            return F, sysm, T

        F, sysm, T = residual(x, mu)
        res = np.max(np.abs(F))
        for it in range(60):
            if res <= self.tol:
                break
            A = np.zeros((4, 4))
            A[:3, :3] = T.jacobian(x) - np.eye(3)
            # Y-placement row by differences along each coordinate
            for j in range(3):
                e = np.zeros(3)
                h = 1e-7 * max(1.0, abs(x[j]))
                e[j] = h
                A[3, j] = (self.shilnikov_y(sysm, x + e) - self.shilnikov_y(sysm, x - e)) / (2 * h)
            Fp, _, _ = residual(x, mu + hmu)
            Fm, _, _ = residual(x, mu - hmu)
            A[:, 3] = (Fp - Fm) / (2 * hmu)
            try:
                step = np.linalg.solve(A, -F)
            except np.linalg.LinAlgError as exc:
                raise NoFixedPoint(str(exc)) from exc
            damp = 1.0
            for _ in range(30):
                xn, mun = x + damp * step[:3], mu + damp * step[3]
                Fn, sysn, Tn = residual(xn, mun)
                rn = np.max(np.abs(Fn))
                if rn < res:
                    break
                damp *= 0.5
            else:
                break
            x, mu, F, sysm, T, res = xn, mun, Fn, sysn, Tn, rn
        if not res <= max(self.tol, 1e-10):
            raise NoFixedPoint(f"fixed-point solve stalled at residual {res:.3e}")
        self._warm[key] = (x.copy(), mu)
        fp = FixedPointResult(StatePoint.from_array(x, Chart.RETURN_SECTION), float(np.max(np.abs(F[:3]))), it)
        return fp, mu, T

    def product_defect(self, rho: float, t: float) -> float:
        fp, _, T = self.fixed_point_at(rho, t)
        m = multipliers(T, fp.point)
        return abs(m.pair_product) - 1.0

    def solve(self, t: float, guard: bool = True) -> NSLocusPoint:
        f = lambda r: self.product_defect(r, t)
        r0 = self.rho0
        sol = root_scalar(f, x0=r0, x1=r0 + 0.01 / self.k, method="secant", xtol=1e-16, rtol=1e-15, maxiter=100)
        rho = sol.root
        if not (sol.converged and abs(f(rho)) < 1e-11):
            lo, hi = r0 - 1.0 / self.k, r0 + 1.0 / self.k
            try:
                rho = brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
            except ValueError as exc:
                raise NoFixedPoint(f"unit-product condition not bracketed for t={t}") from exc
        fp, mu, T = self.fixed_point_at(rho, t)
        m = multipliers(T, fp.point)
        if guard and m.psi is not None and near_resonance(m.psi):
            raise ResonanceGuard(m.psi)
        return NSLocusPoint(self.k, t, self.omega, mu, rho, fp, m, self.e_k, self.E)

    def map_at(self, point: NSLocusPoint) -> MapModel:
        return self.family(point.params).first_return(self.k).map

    def sigma(self, t: float) -> float:
        return self.solve(t, guard=False).sigma


def ns_locus_solve(family, k: int, t: float, omega: float, guard: bool = True) -> NSLocusPoint:
    return NSLocusSolver(family, k, omega).solve(t, guard=guard)


def trace_interval(family, k: int, omega: float, t_max: float | None = None, solver: NSLocusSolver | None = None):
    """Parameters t- < t+ where the center pair trace equals -2 and +2."""
    solver = solver or NSLocusSolver(family, k, omega)
    sys0 = family(ParamTriple(0.0, omega, solver.rho0))
    lam = saddle_multipliers(sys0.local, sys0.saddle)[0]
    e, d = solver.e_k, solver.coeffs.d
    # keep Y_Q inside the return cube
    clip = sys0.delta_dom * abs(2 * d / e) / lam**k
    T = min(4 * max(1.0, abs(2 * d / e) / lam**k * 2), clip) if t_max is None else t_max

    def find(target):
        sgn = 1.0 if target > 0 else -1.0
        inner, outer = 0.0, 1.0
        s_in = solver.sigma(inner) - target
        while True:
            if outer > T:
                raise NotBracketed(f"trace does not reach {target} for |t| <= {T:.3g}")
            try:
                s_out = solver.sigma(sgn * outer) - target
            except (HopfCycleError, ValueError, ArithmeticError) as exc:  # solver failure ends the scan
                raise NotBracketed(f"locus solve failed at t={sgn * outer}: {exc}") from exc
            if s_in * s_out <= 0:
                break
            inner, s_in = outer, s_out
            outer *= 2
        a, b = sorted((sgn * inner, sgn * outer))
        return brentq(lambda t: solver.sigma(t) - target, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    t_minus = find(-2.0)
    t_plus = find(2.0)
    if not t_minus < t_plus:
        raise NotBracketed("trace is not increasing across the interval")
    return t_minus, t_plus


def t_for_trace(solver: NSLocusSolver, sigma: float, t_lo: float, t_hi: float) -> float:
    """Parameter t in (t_lo, t_hi) with pair trace ``sigma``."""
    return brentq(lambda t: solver.sigma(t) - sigma, t_lo, t_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
