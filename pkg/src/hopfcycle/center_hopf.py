"""Center-manifold reduction at a Neimark-Sacker point and the first Lyapunov coefficient.

Polynomials are dictionaries from exponent tuples to coefficients. For the
complex form ``{(p, q): c}`` stands for ``c z^p conj(z)^q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DomainError, ResonanceGuard, SingularHomological, SpectrumMismatch
from .fixed_points import MultiplierSet, multipliers, near_resonance
from .maps import MapModel, StatePoint, Taylor3, as_array

QUADRATIC = ((2, 0), (1, 1), (0, 2))
CUBIC = ((3, 0), (2, 1), (1, 2), (0, 3))
MONOMIALS = QUADRATIC + CUBIC
DEGENERATE_LC = 1e-8
LIMIT_QUADRATIC_NORM = math.sqrt(6.0)


# --------------------------------------------------------------------------
# truncated polynomial algebra


def poly_mul(a: Mapping, b: Mapping, order: int = 3) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        da = sum(ea)
        for eb, cb in b.items():
            if da + sum(eb) > order:
                continue
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return out


def poly_add(*polys: Mapping, scale=None) -> dict:
    out: dict = {}
    for i, p in enumerate(polys):
        s = 1 if scale is None else scale[i]
        for e, c in p.items():
            out[e] = out.get(e, 0) + s * c
    return out


def _conj(p: Mapping) -> dict:
    return {(q, r): np.conj(c) for (r, q), c in p.items()}


def _cpow(g: Mapping, gbar: Mapping, p: int, q: int, cache: dict, order: int) -> dict:
    key = (p, q)
    if key not in cache:
        if p > 0:
            cache[key] = poly_mul(_cpow(g, gbar, p - 1, q, cache, order), g, order)
        elif q > 0:
            cache[key] = poly_mul(_cpow(g, gbar, 0, q - 1, cache, order), gbar, order)
        else:
            cache[key] = {(0, 0): 1.0}
    return cache[key]


def compose_complex(f: Mapping, g: Mapping, order: int = 3) -> dict:
    """``f(g(z), conj(g(z)))`` truncated; ``g`` must have no constant term."""
    gbar = _conj(g)
    cache: dict = {}
    out: dict = {}
    for (p, q), c in f.items():
        for e, v in _cpow(g, gbar, p, q, cache, order).items():
            out[e] = out.get(e, 0) + c * v
    return out


def invert_near_identity(h: Mapping, order: int = 3) -> dict:
    """Series inverse of ``z -> z + h(z)`` with ``h`` of degree >= 2."""
    z = {(1, 0): 1.0}
    for _ in range(order):
        z = poly_add({(1, 0): 1.0}, compose_complex(h, z, order), scale=(1, -1))
    return z


def _eval_complex(coeffs: Mapping, z):
    z = np.asarray(z, dtype=complex)
    zb = np.conj(z)
    out = np.zeros_like(z)
    for (p, q), c in coeffs.items():
        out = out + c * z**p * zb**q
    return out


def _wirtinger(coeffs: Mapping, z):
    """(d/dz, d/dzbar) of a complex polynomial."""
    z = np.asarray(z, dtype=complex)
    zb = np.conj(z)
    dz = np.zeros_like(z)
    dzb = np.zeros_like(z)
    for (p, q), c in coeffs.items():
        if p:
            dz = dz + c * p * z ** (p - 1) * zb**q
        if q:
            dzb = dzb + c * q * z**p * zb ** (q - 1)
    return dz, dzb


def jacobian_det_complex(coeffs: Mapping, z):
    """Real Jacobian determinant |g_z|^2 - |g_zbar|^2."""
    dz, dzb = _wirtinger(coeffs, z)
    return np.abs(dz) ** 2 - np.abs(dzb) ** 2


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class PlanarTaylorMap:
    """``(u, v) -> R(psi)(u, v) + sum (ubar_pq, vbar_pq) u^p v^q`` for 2 <= p+q <= 3."""

    psi: float
    coeffs_u: Mapping = field(default_factory=dict)
    coeffs_v: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for key in set(self.coeffs_u) | set(self.coeffs_v):
            if key not in MONOMIALS:
                raise ValueError(f"monomial {key} outside 2 <= p+q <= 3")

    def cu(self, p, q) -> float:
        return float(self.coeffs_u.get((p, q), 0.0))

    def cv(self, p, q) -> float:
        return float(self.coeffs_v.get((p, q), 0.0))

    def __call__(self, uv):
        uv = np.asarray(uv, dtype=float)
        u, v = uv[..., 0], uv[..., 1]
        c, s = math.cos(self.psi), math.sin(self.psi)
        ou = c * u - s * v
        ov = s * u + c * v
        for (p, q) in MONOMIALS:
            m = u**p * v**q
            ou = ou + self.cu(p, q) * m
            ov = ov + self.cv(p, q) * m
        return np.stack([ou, ov], axis=-1)

    def jacobian(self, uv):
        uv = np.asarray(uv, dtype=float)
        u, v = uv[..., 0], uv[..., 1]
        c, s = math.cos(self.psi), math.sin(self.psi)
        J = np.zeros(uv.shape[:-1] + (2, 2))
        J[..., 0, 0], J[..., 0, 1], J[..., 1, 0], J[..., 1, 1] = c, -s, s, c
        for (p, q) in MONOMIALS:
            du = p * u ** max(p - 1, 0) * v**q if p else 0.0
            dv = q * u**p * v ** max(q - 1, 0) if q else 0.0
            J[..., 0, 0] += self.cu(p, q) * du
            J[..., 0, 1] += self.cu(p, q) * dv
            J[..., 1, 0] += self.cv(p, q) * du
            J[..., 1, 1] += self.cv(p, q) * dv
        return J


@dataclass(frozen=True)
class ComplexTaylorMap:
    """``z -> nu z + sum z_pq z^p conj(z)^q``."""

    nu: complex
    z_coeffs: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if abs(abs(self.nu) - 1) > 1e-12:
            raise ValueError(f"|nu| = {abs(self.nu)} is not 1")

    @classmethod
    def from_angle(cls, psi: float, z_coeffs: Mapping | None = None) -> "ComplexTaylorMap":
        return cls(complex(math.cos(psi), math.sin(psi)), dict(z_coeffs or {}))

    @property
    def psi(self) -> float:
        return float(np.angle(self.nu))

    def c(self, p, q) -> complex:
        return complex(self.z_coeffs.get((p, q), 0.0))

    @property
    def polynomial(self) -> dict:
        out = {(1, 0): complex(self.nu)}
        out.update({k: complex(v) for k, v in self.z_coeffs.items()})
        return out

    def __call__(self, z):
        return _eval_complex(self.polynomial, z)

    def det(self, z):
        return jacobian_det_complex(self.polynomial, z)

    @property
    def quadratic_norm(self) -> float:
        return math.sqrt(sum(abs(self.c(*e)) ** 2 for e in QUADRATIC))


@dataclass(frozen=True)
class CenterManifoldQuad:
    w20: float
    w11: float
    w02: float
    residual: float = 0.0

    def __call__(self, u, v):
        return self.w20 * u * u + self.w11 * u * v + self.w02 * v * v

    @property
    def polynomial(self) -> dict:
        return {(2, 0): self.w20, (1, 1): self.w11, (0, 2): self.w02}


class Verdict(Enum):
    WEAKLY_REPELLING = "WeaklyRepelling"
    WEAKLY_ATTRACTING = "WeaklyAttracting"
    DEGENERATE = "Degenerate"


def verdict_of(lc: float, threshold: float = DEGENERATE_LC) -> Verdict:
    if lc < -threshold:
        return Verdict.WEAKLY_REPELLING
    if lc > threshold:
        return Verdict.WEAKLY_ATTRACTING
    return Verdict.DEGENERATE


# --------------------------------------------------------------------------
# reduction pipeline


def center_basis(J, unit_tol: float = 1e-8):
    """Basis (columns) in which ``J`` is block-diag(R(psi), nu3)."""
    J = np.asarray(J, dtype=float)
    ev, vecs = np.linalg.eig(J)
    cplx = [i for i in range(3) if ev[i].imag > 1e-10]
    if len(cplx) != 1:
        raise SpectrumMismatch(f"no complex pair in spectrum {ev}")
    i = cplx[0]
    nu = ev[i]
    if abs(abs(nu) - 1) > unit_tol:
        raise SpectrumMismatch(f"|nu| = {abs(nu):.12f} is not on the unit circle")
    reals = [j for j in range(3) if abs(ev[j].imag) <= 1e-10]
    if len(reals) != 1:
        raise SpectrumMismatch(f"no real third multiplier in {ev}")
    nu3 = float(ev[reals[0]].real)
    if not abs(nu3) < 1:
        raise SpectrumMismatch(f"third multiplier {nu3} is not contracting")
    q = vecs[:, i]
    q = q * math.sqrt(2.0) / np.linalg.norm(q)
    mags = np.abs(q)
    lead = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[0])
    q = q * np.exp(-1j * np.angle(q[lead]))
    e3 = np.real(vecs[:, reals[0]])
    e3 = e3 / np.linalg.norm(e3)
    if e3[np.argmax(np.abs(e3))] < 0:
        e3 = -e3
    B = np.column_stack([q.real, -q.imag, e3])
    return B, float(np.angle(nu)), nu3


def _real_coefficients(tay: Taylor3, comp: int) -> dict:
    """Monomial coefficients (orders 2 and 3) of component ``comp`` in three variables."""
    out: dict = {}
    n = tay.jac.shape[0]
    for j in range(n):
        for k in range(n):
            e = [0] * n
            e[j] += 1
            e[k] += 1
            out[tuple(e)] = out.get(tuple(e), 0.0) + tay.hess[comp, j, k] / 2
            for l in range(n):
                e3 = list(e)
                e3[l] += 1
                out[tuple(e3)] = out.get(tuple(e3), 0.0) + tay.third[comp, j, k, l] / 6
    return out


def center_manifold_quadratic(taylor3: Taylor3) -> CenterManifoldQuad:
    """Order-2 graph w = h(u, v) of the center manifold, data given in the center basis."""
    L = taylor3.jac[:2, :2]
    nu3 = taylor3.jac[2, 2]
    if not abs(nu3) < 1 - 1e-6:
        raise SingularHomological(f"third multiplier {nu3} too close to the unit circle")
    a, b, c, d = L[0, 0], L[0, 1], L[1, 0], L[1, 1]
    M = np.array(
        [
            [a * a, a * c, c * c],
            [2 * a * b, a * d + b * c, 2 * c * d],
            [b * b, b * d, d * d],
        ]
    )
    H = taylor3.hess[2]
    g = np.array([H[0, 0] / 2, H[0, 1], H[1, 1] / 2])
    A = M - nu3 * np.eye(3)
    if np.linalg.cond(A) > 1e12:
        raise SingularHomological("homological operator is singular")
    w = np.linalg.solve(A, g)
    residual = float(np.max(np.abs(A @ w - g)))
    return CenterManifoldQuad(float(w[0]), float(w[1]), float(w[2]), residual)


def planar_restriction(taylor3: Taylor3, quad: CenterManifoldQuad, psi: float | None = None) -> PlanarTaylorMap:
    """Substitute w = h(u, v) into the (u, v) components and keep orders 2 and 3."""
    if psi is None:
        L = taylor3.jac[:2, :2]
        psi = float(math.atan2(L[1, 0] - L[0, 1], L[0, 0] + L[1, 1]))
    h = {(p, q, 0): c for (p, q), c in quad.polynomial.items()}
    w_powers = {0: {(0, 0, 0): 1.0}}
    for r in (1, 2, 3):
        w_powers[r] = poly_mul(w_powers[r - 1], h)
    planar = []
    for comp in (0, 1):
        poly = _real_coefficients(taylor3, comp)
        out: dict = {}
        for (p, q, r), c in poly.items():
            if c == 0.0:
                continue
            term = poly_mul({(p, q, 0): c}, w_powers[r])
            for e, v in term.items():
                if 2 <= sum(e) <= 3:
                    out[(e[0], e[1])] = out.get((e[0], e[1]), 0.0) + v
        planar.append({k: float(v) for k, v in out.items()})
    return PlanarTaylorMap(psi, planar[0], planar[1])


_U = {(1, 0): 0.5, (0, 1): 0.5}
_V = {(1, 0): -0.5j, (0, 1): 0.5j}


def complex_coefficients(planar: PlanarTaylorMap) -> ComplexTaylorMap:
    """Rewrite ubar + i vbar in z = u + iv and its conjugate."""
    out: dict = {}
    for (p, q) in MONOMIALS:
        coef = planar.cu(p, q) + 1j * planar.cv(p, q)
        if coef == 0:
            continue
        mono = {(0, 0): 1.0}
        for _ in range(p):
            mono = poly_mul(mono, _U)
        for _ in range(q):
            mono = poly_mul(mono, _V)
        for e, v in mono.items():
            out[e] = out.get(e, 0) + coef * v
    return ComplexTaylorMap.from_angle(planar.psi, {e: complex(out.get(e, 0)) for e in MONOMIALS})


def planar_from_complex(cmap: ComplexTaylorMap) -> PlanarTaylorMap:
    """Inverse of :func:`complex_coefficients`."""
    Z = {(1, 0): 1.0, (0, 1): 1j}
    Zb = {(1, 0): 1.0, (0, 1): -1j}
    out: dict = {}
    for (p, q), c in cmap.z_coeffs.items():
        if c == 0:
            continue
        mono = {(0, 0): 1.0}
        for _ in range(p):
            mono = poly_mul(mono, Z)
        for _ in range(q):
            mono = poly_mul(mono, Zb)
        for e, v in mono.items():
            out[e] = out.get(e, 0) + c * v
    cu = {e: float(np.real(out.get(e, 0))) for e in MONOMIALS}
    cv = {e: float(np.imag(out.get(e, 0))) for e in MONOMIALS}
    return PlanarTaylorMap(cmap.psi, cu, cv)


# --------------------------------------------------------------------------
# normal form and Lyapunov coefficient


def _guard(psi: float) -> None:
    if near_resonance(psi):
        raise ResonanceGuard(psi)


def _denominator(nu: complex, p: int, q: int) -> complex:
    return nu - nu**p * np.conj(nu) ** q


def quadratic_killer(cmap: ComplexTaylorMap) -> dict:
    """Coefficients of h in w = z + h(z) that remove all quadratic terms."""
    _guard(cmap.psi)
    return {e: cmap.c(*e) / _denominator(cmap.nu, *e) for e in QUADRATIC}


def alpha_by_substitution(cmap: ComplexTaylorMap) -> complex:
    """w^2 conj(w) coefficient after explicitly conjugating by w = z + h(z)."""
    h = quadratic_killer(cmap)
    phi = poly_add({(1, 0): 1.0}, h)
    conj_map = compose_complex(phi, compose_complex(cmap.polynomial, invert_near_identity(h)))
    return complex(conj_map.get((2, 1), 0.0))


def printed_formula_alpha(cmap: ComplexTaylorMap) -> complex:
    """A published closed-form combination; disagrees with substitution when quadratics are present."""
    _guard(cmap.psi)
    nu = cmap.nu
    nb = np.conj(nu)
    z20, z11, z02, z21 = cmap.c(2, 0), cmap.c(1, 1), cmap.c(0, 2), cmap.c(2, 1)
    return complex(
        z21
        + abs(z02) ** 2 * (4 * nu - 2 * nb**2) / (-2 + nu**3 + nb**3)
        + abs(z11) ** 2 * (2 - nb) / (-1 + nb) ** 2
        - z11 * z20 * (-6 + 2 * nu + nb) / (-1 + nu) ** 2
    )


def kill_quadratic(cmap: ComplexTaylorMap, method: str = "closed") -> complex:
    """Resonant cubic coefficient alpha of the normal form nu w + alpha w^2 conj(w).

    ``method="closed"`` evaluates the closed form obtained from the composed
    change of coordinates; ``"substitution"`` composes the polynomials
    explicitly; ``"printed"`` is the published combination kept for comparison.
    """
    if method == "substitution":
        return alpha_by_substitution(cmap)
    if method == "printed":
        return printed_formula_alpha(cmap)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    _guard(cmap.psi)
    nu = cmap.nu
    nb = np.conj(nu)
    z20, z11, z02, z21 = cmap.c(2, 0), cmap.c(1, 1), cmap.c(0, 2), cmap.c(2, 1)
    return complex(
        z21
        + z20 * z11 * (nb - 3 + 2 * nu) / ((nu**2 - nu) * (nb - 1))
        + abs(z11) ** 2 / (1 - nb)
        + 2 * abs(z02) ** 2 / (nu**2 - nb)
    )


def lyapunov_coefficient(cmap: ComplexTaylorMap, method: str = "closed") -> float:
    alpha = kill_quadratic(cmap, method)
    return float(-(np.conj(cmap.nu) * alpha).real)


def reference_curve(psi: float) -> float:
    """4 cos(psi)(1 + cos(psi)) / ((cos(psi) - 1)(1 + 2 cos(psi))^2)."""
    if not 0 < psi < math.pi:
        raise ValueError("psi must lie in (0, pi)")
    c = math.cos(psi)
    if abs(1 + 2 * c) < 1e-12:
        raise DomainError("pole at 2 pi / 3")
    return 4 * c * (1 + c) / ((c - 1) * (1 + 2 * c) ** 2)


@dataclass(frozen=True)
class CubicNormalForm:
    """Polynomial change w = phi(z) bringing a cubic map to nu w + alpha w^2 conj(w) + O(4)."""

    cmap: ComplexTaylorMap
    phi: Mapping
    alpha: complex

    @property
    def lc(self) -> float:
        return float(-(np.conj(self.cmap.nu) * self.alpha).real)

    def to_normal(self, z):
        return _eval_complex(self.phi, z)

    def from_normal(self, w, tol: float = 1e-15, max_iter: int = 50):
        """Invert phi by Newton on the real 2D system."""
        w = np.asarray(w, dtype=complex)
        z = w.copy()
        for _ in range(max_iter):
            r = _eval_complex(self.phi, z) - w
            dz, dzb = _wirtinger(self.phi, z)
            # solve dz * d + dzb * conj(d) = -r for d
            det = np.abs(dz) ** 2 - np.abs(dzb) ** 2
            d = (-np.conj(dz) * r + dzb * np.conj(r)) / det
            z = z + d
            if np.all(np.abs(d) <= tol * np.maximum(1.0, np.abs(z))):
                break
        return z

    def __call__(self, w):
        """The conjugated map phi o F o phi^-1 (exact, not truncated)."""
        z = self.from_normal(w)
        return _eval_complex(self.phi, self.cmap(z))

    def det(self, w):
        """Real Jacobian determinant of the conjugated map at ``w``."""
        z = self.from_normal(w)
        fz = self.cmap(z)
        return (
            jacobian_det_complex(self.phi, fz)
            * jacobian_det_complex(self.cmap.polynomial, z)
            / jacobian_det_complex(self.phi, z)
        )


def cubic_normal_form(cmap: ComplexTaylorMap) -> CubicNormalForm:
    """Remove quadratic and non-resonant cubic terms by two polynomial changes."""
    h2 = quadratic_killer(cmap)
    phi2 = poly_add({(1, 0): 1.0}, h2)
    g = compose_complex(phi2, compose_complex(cmap.polynomial, invert_near_identity(h2)))
    h3 = {e: g.get(e, 0) / _denominator(cmap.nu, *e) for e in CUBIC if e != (2, 1)}
    phi = poly_add(phi2, compose_complex(h3, phi2))
    return CubicNormalForm(cmap, {e: c for e, c in phi.items() if sum(e) <= 3}, complex(g.get((2, 1), 0)))


def radial_drift(cmap: ComplexTaylorMap, r0: float = 1e-2, n_iter: int = 10_000, window: int = 1000, escape: float = 10.0) -> float:
    """Change of the windowed mean of |z|^2 along an orbit started at radius ``r0``.

    Positive means the orbit drifts outward. Escaping orbits count as outward.
    """
    nu = complex(cmap.nu)
    c20, c11, c02 = (cmap.c(*e) for e in QUADRATIC)
    c30, c21, c12, c03 = (cmap.c(*e) for e in CUBIC)
    z = complex(r0, 0.0)
    bound = escape * r0
    r2 = np.empty(n_iter)
    for n in range(n_iter):
        zb = z.conjugate()
        zz, zzb, zbzb = z * z, z * zb, zb * zb
        z = nu * z + c20 * zz + c11 * zzb + c02 * zbzb + (c30 * zz + c21 * zzb + c12 * zbzb) * z + c03 * zbzb * zb
        a = abs(z)
        if not a < bound:
            return math.inf
        r2[n] = a * a
    return float(r2[-window:].mean() - r2[:window].mean())


# --------------------------------------------------------------------------
# full report


@dataclass(frozen=True)
class NSReport:
    fixed_point: StatePoint
    mults: MultiplierSet
    psi: float
    lc: float
    verdict: Verdict
    resonance_flag: bool
    lc_raw: float
    alpha: complex
    projection_distance: float
    basis: np.ndarray
    quad: CenterManifoldQuad
    planar: PlanarTaylorMap
    cmap: ComplexTaylorMap
    scale: float


def ns_report(map_: MapModel, fp, unit_tol: float = 1e-8) -> NSReport:
    """Center basis, center manifold, planar restriction, complex form and LC at ``fp``.

    ``lc`` is normalized so that the quadratic coefficients have the norm of
    the limiting first-return map (sqrt 6); ``lc_raw`` is in the raw basis.
    """
    x = as_array(fp)
    point = fp if isinstance(fp, StatePoint) else StatePoint.from_array(x)
    mults = multipliers(map_, x)
    tay = map_.taylor(x)
    B, psi, _ = center_basis(tay.jac, unit_tol)
    tb = tay.in_basis(B)
    quad = center_manifold_quadratic(tb)
    planar = planar_restriction(tb, quad, psi)
    cmap = complex_coefficients(planar)
    resonant = near_resonance(psi)
    projection = abs(abs(mults.nu1) - 1)
    if resonant:
        raise ResonanceGuard(psi)
    alpha = kill_quadratic(cmap)
    lc_raw = float(-(np.conj(cmap.nu) * alpha).real)
    qn = cmap.quadratic_norm
    scale = qn / LIMIT_QUADRATIC_NORM if qn > 1e-300 else 1.0
    lc = lc_raw / scale**2
    return NSReport(point, mults, psi, lc, verdict_of(lc), resonant, lc_raw, alpha, projection, B, quad, planar, cmap, scale)
