"""Differentiable 3D maps, the focus-saddle toy model and first-return maps.

Points are handled as numpy arrays ``(x1, x2, y)`` internally. Every map
accepts batched input of shape ``(..., 3)``. :class:`StatePoint` is the
tagged, immutable point type used at API boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ConfigError, LeftChart, NonFinite, NotInSection

_EPS = np.finfo(float).eps


class Chart(Enum):
    LOCAL_CYLINDER = "LocalCylinder"
    GLOBAL_NEIGHBORHOOD = "GlobalNeighborhood"
    RETURN_SECTION = "ReturnSection"


@dataclass(frozen=True)
class StatePoint:
    x1: float
    x2: float
    y: float
    chart: Chart = Chart.LOCAL_CYLINDER

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x1, self.x2, self.y)):
            raise NonFinite(f"non-finite coordinates {(self.x1, self.x2, self.y)}")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.y], dtype=float)

    @classmethod
    def from_array(cls, a, chart: Chart = Chart.LOCAL_CYLINDER) -> "StatePoint":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]), chart)

    def with_chart(self, chart: Chart) -> "StatePoint":
        return StatePoint(self.x1, self.x2, self.y, chart)


def as_array(p) -> np.ndarray:
    if isinstance(p, StatePoint):
        return p.array
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class ParamTriple:
    """Unfolding parameters: splitting ``mu``, rotation ``omega``, ``rho = log|lambda gamma|``."""

    mu: float
    omega: float
    rho: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mu, self.omega, self.rho)):
            raise ConfigError("parameters must be finite")
        if not 0.0 < self.omega < math.pi:
            raise ConfigError(f"omega={self.omega} outside (0, pi)")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.mu, self.omega, self.rho])


# --------------------------------------------------------------------------
# Taylor data through order three


@dataclass(frozen=True)
class Taylor3:
    """Value and derivatives of a map at a point.

    ``hess[i, j, k] = d2 f_i / dx_j dx_k`` and ``third[i, j, k, l]`` likewise.
    """

    value: np.ndarray
    jac: np.ndarray
    hess: np.ndarray
    third: np.ndarray
    error_estimate: float = 0.0

    def compose(self, inner: "Taylor3") -> "Taylor3":
        """Taylor data of ``self o inner``; ``self`` must be taken at ``inner.value``."""
        A, H, T = inner.jac, inner.hess, inner.third
        Jo, Ho, To = self.jac, self.hess, self.third
        jac = Jo @ A
        hess = np.einsum("iab,aj,bk->ijk", Ho, A, A) + np.einsum("ia,ajk->ijk", Jo, H)
        mixed = np.einsum("iab,ajk,bl->ijkl", Ho, H, A)
        third = (
            np.einsum("iabc,aj,bk,cl->ijkl", To, A, A, A)
            + mixed
            + mixed.transpose(0, 1, 3, 2)
            + mixed.transpose(0, 3, 2, 1)
            + np.einsum("ia,ajkl->ijkl", Jo, T)
        )
        return Taylor3(self.value, jac, hess, third, self.error_estimate + inner.error_estimate)

    def in_basis(self, B: np.ndarray, Binv: np.ndarray | None = None) -> "Taylor3":
        """Derivatives of ``xi -> Binv (F(x0 + B xi) - x0)``, i.e. the map in a new linear frame."""
        Binv = np.linalg.inv(B) if Binv is None else Binv
        jac = Binv @ self.jac @ B
        hess = np.einsum("ia,abc,bj,ck->ijk", Binv, self.hess, B, B)
        third = np.einsum("ia,abcd,bj,ck,dl->ijkl", Binv, self.third, B, B, B)
        return Taylor3(np.zeros_like(self.value), jac, hess, third, self.error_estimate)


def _linear_taylor(value, jac) -> Taylor3:
    n = len(value)
    return Taylor3(np.asarray(value, float), np.asarray(jac, float), np.zeros((n, n, n)), np.zeros((n, n, n, n)))


# --------------------------------------------------------------------------
# Map abstraction


class MapModel:
    """A differentiable self-map of a 3D chart.

    Subclasses implement ``__call__`` (batched). ``jacobian`` and ``taylor``
    fall back to finite differences when not overridden.
    """

    dimension = 3
    analytic = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        x = as_array(x)
        if x.ndim == 1:
            return jacobian_fd(self, x, _EPS ** (1 / 3) * max(1.0, float(np.max(np.abs(x)))))
        return np.stack([self.jacobian(xi) for xi in x.reshape(-1, 3)]).reshape(x.shape[:-1] + (3, 3))

    def taylor(self, x) -> Taylor3:
        return fd_taylor(self, as_array(x))

    def contains(self, x) -> np.ndarray | bool:
        return True

    def eval(self, p: StatePoint, chart: Chart | None = None) -> StatePoint:
        return StatePoint.from_array(self(p.array), chart or p.chart)


class CallableMap(MapModel):
    """Wrap plain callables; missing derivatives come from finite differences."""

    def __init__(self, f: Callable, jac: Callable | None = None):
        self._f = f
        self._jac = jac
        self.analytic = jac is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self._f(x), dtype=float)
        return np.stack([np.asarray(self._f(xi), float) for xi in x.reshape(-1, 3)]).reshape(x.shape)

    def jacobian(self, x):
        if self._jac is None:
            return super().jacobian(x)
        x = as_array(x)
        if x.ndim == 1:
            return np.asarray(self._jac(x), dtype=float)
        return np.stack([np.asarray(self._jac(xi), float) for xi in x.reshape(-1, 3)]).reshape(x.shape[:-1] + (3, 3))


class AffineMap(MapModel):
    """``x -> A (x - center) + image``; with defaults a linear map."""

    analytic = True

    def __init__(self, matrix, center=None, image=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.center = np.zeros(3) if center is None else np.asarray(center, float)
        self.image = np.zeros(3) if image is None else np.asarray(image, float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.center) @ self.matrix.T + self.image

    def jacobian(self, x):
        x = as_array(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + (3, 3)).copy()

    def taylor(self, x):
        x = as_array(x)
        return _linear_taylor(self(x), self.matrix)


def block_rotation_map(lam: float, omega: float, gamma: float) -> AffineMap:
    """The linear model diag(lam R(omega), gamma)."""
    c, s = math.cos(omega), math.sin(omega)
    return AffineMap([[lam * c, -lam * s, 0.0], [lam * s, lam * c, 0.0], [0.0, 0.0, gamma]])


def jacobian_fd(map_: Callable, p, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of ``map_`` at ``p``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = as_array(p)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fp = np.asarray(map_(x + e), float)
        fm = np.asarray(map_(x - e), float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFinite(f"non-finite evaluation near {x}")
        J[:, j] = (fp - fm) / (2 * h)
    return J


def fd_taylor(map_: MapModel, x: np.ndarray, h: float | None = None) -> Taylor3:
    """Order-3 Taylor data by Richardson-extrapolated differences of the Jacobian."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if h is None:
        h = _EPS**0.25 * max(1.0, float(np.max(np.abs(x))))
    J0 = map_.jacobian(x)

    def diffs(step):
        hess = np.empty((n, n, n))
        third = np.empty((n, n, n, n))
        plus = [map_.jacobian(x + step * e) for e in np.eye(n)]
        minus = [map_.jacobian(x - step * e) for e in np.eye(n)]
        for k in range(n):
            hess[:, :, k] = (plus[k] - minus[k]) / (2 * step)
            third[:, :, k, k] = (plus[k] - 2 * J0 + minus[k]) / step**2
        for k in range(n):
            for l in range(k + 1, n):
                ek, el = np.eye(n)[k] * step, np.eye(n)[l] * step
                val = (
                    map_.jacobian(x + ek + el)
                    - map_.jacobian(x + ek - el)
                    - map_.jacobian(x - ek + el)
                    + map_.jacobian(x - ek - el)
                ) / (4 * step**2)
                third[:, :, k, l] = val
                third[:, :, l, k] = val
        return hess, third

    H1, T1 = diffs(h)
    H2, T2 = diffs(h / 2)
    hess = (4 * H2 - H1) / 3
    third = (4 * T2 - T1) / 3
    hess = (hess + hess.transpose(0, 2, 1)) / 2
    third = sum(third.transpose(0, *perm) for perm in _PERMS3) / 6
    err = float(max(np.max(np.abs(H2 - H1)), np.max(np.abs(T2 - T1))))
    return Taylor3(map_(x), J0, hess, third, err)


_PERMS3 = [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]


# --------------------------------------------------------------------------
# Toy model


@dataclass(frozen=True)
class ToyModelConfig:
    eps: float = 0.2
    lam: float = 1.0 / 3.0
    omega: float = math.pi / 6
    gamma: float = 3.0
    mu: float = 0.0

    def __post_init__(self):
        vals = (self.eps, self.lam, self.omega, self.gamma, self.mu)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("toy parameters must be finite")
        if not 0.0 < self.eps < 1.0 / 3.0:
            raise ConfigError(f"eps={self.eps} outside (0, 1/3)")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lambda={self.lam} outside (0, 1)")
        if self.lam * self.gamma <= 0:
            raise ConfigError("lambda*gamma must be positive")


class ToyLocalMap(MapModel):
    """Linear focus-saddle map on the cylinder {x1^2 + x2^2 <= 9, 0 <= y <= 3}."""

    analytic = True

    def __init__(self, cfg: ToyModelConfig):
        self.cfg = cfg
        c, s = math.cos(cfg.omega), math.sin(cfg.omega)
        lam = cfg.lam
        self.matrix = np.array([[lam * c, -lam * s, 0.0], [lam * s, lam * c, 0.0], [0.0, 0.0, cfg.gamma]])

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T

    def jacobian(self, x):
        x = as_array(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + (3, 3)).copy()

    def taylor(self, x):
        x = as_array(x)
        return _linear_taylor(self(x), self.matrix)

    def contains(self, x, tol: float = 1e-12):
        x = np.asarray(x, dtype=float)
        return (x[..., 0] ** 2 + x[..., 1] ** 2 <= 9.0 + tol) & (x[..., 2] >= -tol) & (x[..., 2] <= 3.0 + tol)


class ToyGlobalMap(MapModel):
    """Quadratic transition map from a neighbourhood of M- = (0, 0, 2.5) to M+ = (0, 2, mu)."""

    analytic = True

    def __init__(self, cfg: ToyModelConfig):
        self.cfg = cfg

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e, mu = self.cfg.eps, self.cfg.mu
        s = x[..., 2] - 2.5
        q = 4.0 / e**2 * s**2
        return np.stack([2.0 / e * s - q, -e * x[..., 1] + 2.0, mu + e * x[..., 0] + q], axis=-1)

    def jacobian(self, x):
        x = as_array(x)
        e = self.cfg.eps
        s = x[..., 2] - 2.5
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 2] = 2.0 / e - 8.0 / e**2 * s
        J[..., 1, 1] = -e
        J[..., 2, 0] = e
        J[..., 2, 2] = 8.0 / e**2 * s
        return J

    def taylor(self, x):
        x = as_array(x)
        e = self.cfg.eps
        hess = np.zeros((3, 3, 3))
        hess[0, 2, 2] = -8.0 / e**2
        hess[2, 2, 2] = 8.0 / e**2
        return Taylor3(self(x), self.jacobian(x), hess, np.zeros((3, 3, 3, 3)))

    def contains(self, x, tol: float = 1e-12):
        x = np.asarray(x, dtype=float)
        return np.abs(x[..., 2] - 2.5) <= 0.5 + tol


def eval_toy_local(p: StatePoint, cfg: ToyModelConfig) -> StatePoint:
    if p.chart is not Chart.LOCAL_CYLINDER:
        raise ValueError(f"expected a LocalCylinder point, got {p.chart.value}")
    return StatePoint.from_array(ToyLocalMap(cfg)(p.array), Chart.LOCAL_CYLINDER)


def eval_toy_global(p: StatePoint, cfg: ToyModelConfig) -> StatePoint:
    if p.chart is not Chart.GLOBAL_NEIGHBORHOOD:
        raise ValueError(f"expected a GlobalNeighborhood point, got {p.chart.value}")
    return StatePoint.from_array(ToyGlobalMap(cfg)(p.array), Chart.RETURN_SECTION)


# --------------------------------------------------------------------------
# First-return maps


@dataclass(frozen=True)
class FirstReturnSpec:
    """``T_k = global o local^k`` restricted to the cube of half-width ``delta_dom`` about ``m_plus``."""

    k: int
    local: MapModel
    global_: MapModel
    delta_dom: float
    m_plus: np.ndarray = field(default_factory=lambda: np.array([0.0, 2.0, 0.0]))

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError("k must be a positive integer")
        if not self.delta_dom > 0:
            raise ConfigError("delta_dom must be positive")

    @property
    def map(self) -> "FirstReturnMap":
        return FirstReturnMap(self)

    def in_section(self, x) -> bool:
        return bool(np.all(np.abs(as_array(x) - self.m_plus) <= self.delta_dom))


class FirstReturnMap(MapModel):
    """Unchecked evaluation of ``T_k``; chart bookkeeping lives in :func:`first_return_eval`."""

    def __init__(self, spec: FirstReturnSpec):
        self.spec = spec
        self.analytic = spec.local.analytic and spec.global_.analytic

    def _orbit(self, x):
        pts = [np.asarray(x, dtype=float)]
        for _ in range(self.spec.k):
            pts.append(self.spec.local(pts[-1]))
        return pts

    def __call__(self, x):
        return self.spec.global_(self._orbit(x)[-1])

    def jacobian(self, x):
        x = as_array(x)
        pts = self._orbit(x)
        J = self.spec.global_.jacobian(pts[-1])
        for p in reversed(pts[:-1]):
            J = J @ self.spec.local.jacobian(p)
        return J

    def taylor(self, x):
        pts = self._orbit(as_array(x))
        t = self.spec.local.taylor(pts[0])
        for p in pts[1:-1]:
            t = self.spec.local.taylor(p).compose(t)
        return self.spec.global_.taylor(pts[-1]).compose(t)


def first_return_eval(spec: FirstReturnSpec, p) -> StatePoint:
    """Apply the local map ``k`` times and the global map once, checking charts at every step."""
    x = as_array(p)
    if not spec.in_section(x):
        raise NotInSection(f"{x} is outside the return section of half-width {spec.delta_dom}")
    for step in range(spec.k + 1):
        if not np.all(spec.local.contains(x)):
            raise LeftChart(step, x)
        if step < spec.k:
            x = spec.local(x)
    if not np.all(spec.global_.contains(x)):
        raise LeftChart(spec.k, x)
    out = spec.global_(x)
    if not np.all(np.isfinite(out)):
        raise NonFinite("first-return evaluation is not finite")
    return StatePoint.from_array(out, Chart.RETURN_SECTION)


# --------------------------------------------------------------------------
# Unfoldings


@dataclass(frozen=True)
class HomoclinicSystem:
    """A local saddle map, a global transition map and the two tangency base points."""

    local: MapModel
    global_: MapModel
    m_minus: np.ndarray
    m_plus: np.ndarray
    delta_dom: float = 0.05
    saddle: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def first_return(self, k: int, delta_dom: float | None = None) -> FirstReturnSpec:
        return FirstReturnSpec(k, self.local, self.global_, delta_dom or self.delta_dom, np.asarray(self.m_plus, float))


@dataclass(frozen=True)
class ToyUnfolding:
    """Three-parameter unfolding of the toy model.

    ``mu`` shifts the global y-equation, ``omega`` is the local rotation and
    ``lambda = exp(rho) / gamma`` with ``gamma`` fixed, so the parameters are
    their own measured values.
    """

    eps: float = 0.2
    gamma: float = 3.0
    delta_dom: float = 0.05

    def __post_init__(self):
        ToyModelConfig(eps=self.eps, gamma=self.gamma)

    def config(self, params: ParamTriple) -> ToyModelConfig:
        return ToyModelConfig(
            eps=self.eps, lam=math.exp(params.rho) / self.gamma, omega=params.omega, gamma=self.gamma, mu=params.mu
        )

    def system(self, params: ParamTriple) -> HomoclinicSystem:
        cfg = self.config(params)
        return HomoclinicSystem(
            ToyLocalMap(cfg),
            ToyGlobalMap(cfg),
            np.array([0.0, 0.0, 2.5]),
            np.array([0.0, 2.0, 0.0]),
            self.delta_dom,
        )

    __call__ = system


def saddle_multipliers(local: MapModel, saddle=None) -> tuple[float, float, float]:
    """(|lambda|, omega, |gamma|) read off the spectrum of the local map at its saddle."""
    x0 = np.zeros(3) if saddle is None else as_array(saddle)
    ev = np.linalg.eigvals(local.jacobian(x0))
    order = np.argsort(np.abs(ev))
    stable = ev[order[:2]]
    gamma = ev[order[2]]
    lead = stable[np.argmax(np.abs(stable))]
    return float(abs(lead)), float(abs(np.angle(lead))), float(abs(gamma))


def measure_unfolding(system: HomoclinicSystem) -> np.ndarray:
    """The functionals (mu, omega, rho) of a concrete system."""
    from .tangency import splitting_mu

    lam, omega, gamma = saddle_multipliers(system.local, system.saddle)
    mu = splitting_mu(system.global_, system.m_minus)
    return np.array([mu, omega, math.log(lam * gamma)])


def unfolding_jacobian(
    family: Callable[[ParamTriple], HomoclinicSystem],
    eps0: ParamTriple,
    h: float = 1e-6,
    measure: Callable[[HomoclinicSystem], np.ndarray] = measure_unfolding,
) -> float:
    """Determinant of d(mu, omega, rho)/d(parameters) by central differences."""
    base = eps0.array
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fp = measure(family(ParamTriple(*(base + e))))
        fm = measure(family(ParamTriple(*(base - e))))
        cols.append((fp - fm) / (2 * h))
    det = float(np.linalg.det(np.column_stack(cols)))
    if not math.isfinite(det):
        raise NonFinite("unfolding Jacobian is not finite")
    return det


class NormalFormTestMap(MapModel):
    """Synthetic NS map on (Z, Y, W): ``z -> nu z + alpha z^2 conj(z)`` with z = Z + iY, and ``W -> kappa W``.

    ``alpha = -nu lc`` so the cubic normal form has first Lyapunov
    coefficient ``lc`` exactly.
    """

    analytic = True

    def __init__(self, psi: float, lc: float, kappa: float = 0.3):
        self.nu = complex(math.cos(psi), math.sin(psi))
        self.alpha = -self.nu * lc
        self.kappa = kappa

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0] + 1j * x[..., 1]
        zn = self.nu * z + self.alpha * z * z * np.conj(z)
        return np.stack([zn.real, zn.imag, self.kappa * x[..., 2]], axis=-1)

    def jacobian(self, x):
        x = as_array(x)
        z = x[..., 0] + 1j * x[..., 1]
        # d/dz and d/dzbar of the complex part
        a = self.nu + 2 * self.alpha * z * np.conj(z)
        b = self.alpha * z * z
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = (a + b).real
        J[..., 0, 1] = (-(a - b).imag)
        J[..., 1, 0] = (a + b).imag
        J[..., 1, 1] = (a - b).real
        J[..., 2, 2] = self.kappa
        return J
