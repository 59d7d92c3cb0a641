"""Fixed-point solvers for implicit equations y = G(x) + H(x, y) with contraction certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import BoundViolation, ConfigError, NoConvergence, NotContractive

CONTRACTION_LIMIT = 0.5
CORRECTION_CONSTANT = 2.0
N_PROBE = 1024


def _box_samples(box, n: int, seed: int) -> np.ndarray:
    lo, hi = (np.atleast_1d(np.asarray(b, float)) for b in box)
    pts = qmc.Sobol(d=len(lo), scramble=True, seed=seed).random(n)
    return qmc.scale(pts, lo, hi) if np.any(hi > lo) else np.broadcast_to(lo, (n, len(lo))).copy()


def _scalar_x(x):
    a = np.asarray(x, float)
    return float(a) if a.ndim == 0 else a


@dataclass
class ImplicitScalarProblem:
    """``y = G(x) + H(x, y)``.

    Bounds not supplied are sampled with a scrambled Sobol set of 1024
    points over ``x_box`` times ``y_box``.
    """

    G: Callable
    H: Callable
    sup_H: float | None = None
    sup_Hy: float | None = None
    x_box: tuple | None = None
    y_box: tuple = (-1.0, 1.0)
    seed: int = 0

    def _samples(self):
        if self.x_box is None:
            raise ConfigError("bounds must be supplied or an x_box declared for sampling")
        xlo, xhi = (np.atleast_1d(np.asarray(b, float)) for b in self.x_box)
        lo = np.concatenate([xlo, [self.y_box[0]]])
        hi = np.concatenate([xhi, [self.y_box[1]]])
        pts = _box_samples((lo, hi), N_PROBE, self.seed)
        return pts[:, :-1], pts[:, -1]

    def _xs(self, xrow):
        return float(xrow[0]) if len(xrow) == 1 else xrow

    def bounds(self) -> tuple[float, float]:
        sH, sHy = self.sup_H, self.sup_Hy
        if sH is None or sHy is None:
            X, Y = self._samples()
            h = 1e-6
            vals, ders = [], []
            for xr, y in zip(X, Y):
                xs = self._xs(xr)
                vals.append(abs(self.H(xs, y)))
                ders.append(abs(self.H(xs, y + h) - self.H(xs, y - h)) / (2 * h))
            sH = max(vals) if sH is None else sH
            sHy = max(ders) if sHy is None else sHy
        return float(sH), float(sHy)

    def sup_Hx(self, h: float = 1e-6) -> float:
        """Sampled sup of |dH/dx| (max over x-components)."""
        X, Y = self._samples()
        best = 0.0
        for xr, y in zip(X, Y):
            for i in range(len(xr)):
                e = np.zeros(len(xr))
                e[i] = h
                d = (self.H(self._xs(xr + e), y) - self.H(self._xs(xr - e), y)) / (2 * h)
                best = max(best, abs(d))
        return best


@dataclass(frozen=True)
class ScalarSolution:
    y: float
    correction: float
    iterations: int
    residual: float
    sup_H: float
    sup_Hy: float

    @property
    def iteration_bound(self) -> int:
        """Picard count needed at rate sup_Hy to reach 1e-16 from an O(1) start."""
        if self.sup_Hy <= 0:
            return 1
        return int(math.ceil(math.log(1e-16) / math.log(self.sup_Hy))) + 1


def _picard(step: Callable[[float], float], y0: float, tol: float, max_iter: int) -> tuple[float, int, float]:
    """Iterate ``y <- step(y)`` with Aitken extrapolation on log-linear residuals."""
    y = y0
    diffs: list[float] = []
    for it in range(1, max_iter + 1):
        y_new = step(y)
        d = y_new - y
        if not math.isfinite(y_new):
            raise NoConvergence(it, math.inf)
        if abs(d) < max(tol, 16 * np.finfo(float).eps * max(1.0, abs(y_new))):
            return y_new, it, abs(d)
        diffs.append(d)
        y = y_new
        if len(diffs) >= 3 and diffs[-2] != 0 and diffs[-3] != 0:
            r1, r2 = diffs[-1] / diffs[-2], diffs[-2] / diffs[-3]
            if abs(r1) < 1 and abs(r1 - r2) < 0.1 * abs(r1) and r1 != 1:
                cand = y + d * r1 / (1 - r1)
                if math.isfinite(cand) and abs(step(cand) - cand) < abs(d):
                    y = cand
                    diffs.clear()
    raise NoConvergence(max_iter, abs(diffs[-1]) if diffs else math.inf)


def solve_scalar(prob: ImplicitScalarProblem, x, tol: float = 1e-12, max_iter: int = 500) -> ScalarSolution:
    sH, sHy = prob.bounds()
    if sHy >= CONTRACTION_LIMIT:
        raise NotContractive(sHy)
    xs = _scalar_x(x)
    g = float(prob.G(xs))
    step = lambda y: g + float(prob.H(xs, y))
    y, it, _ = _picard(step, g, tol * 1e-3, max_iter)
    res = abs(y - step(y))
    if not res < tol:
        raise NoConvergence(it, res)
    corr = y - g
    if abs(corr) > CORRECTION_CONSTANT * sH * (1 + 1e-12) + 1e-300:
        raise BoundViolation(f"|I| = {abs(corr):.3e} exceeds 2 sup|H| = {2 * sH:.3e}")
    return ScalarSolution(y, corr, it, res, sH, sHy)


# --------------------------------------------------------------------------
# systems


@dataclass
class ImplicitSystemProblem:
    """``y_j = G_j(x) + H_j(x, y)`` for j = 1..m; G and H return length-m arrays."""

    G: Callable
    H: Callable
    m: int
    sup_H: Sequence[float] | None = None
    sup_DyH: np.ndarray | None = None
    x_box: tuple | None = None
    y_box: tuple = (-1.0, 1.0)
    seed: int = 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-component sup|H_j| and the matrix of sup|dH_j/dy_i|."""
        sH = None if self.sup_H is None else np.asarray(self.sup_H, float)
        sD = None if self.sup_DyH is None else np.asarray(self.sup_DyH, float)
        if sH is None or sD is None:
            if self.x_box is None:
                raise ConfigError("bounds must be supplied or an x_box declared for sampling")
            xlo, xhi = (np.atleast_1d(np.asarray(b, float)) for b in self.x_box)
            nx = len(xlo)
            lo = np.concatenate([xlo, np.full(self.m, self.y_box[0])])
            hi = np.concatenate([xhi, np.full(self.m, self.y_box[1])])
            pts = _box_samples((lo, hi), N_PROBE, self.seed)
            h = 1e-6
            vals = np.zeros(self.m)
            der = np.zeros((self.m, self.m))
            for row in pts:
                xs = float(row[0]) if nx == 1 else row[:nx]
                y = row[nx:]
                vals = np.maximum(vals, np.abs(self.H(xs, y)))
                for i in range(self.m):
                    e = np.zeros(self.m)
                    e[i] = h
                    der[:, i] = np.maximum(der[:, i], np.abs(self.H(xs, y + e) - self.H(xs, y - e)) / (2 * h))
            sH = vals if sH is None else sH
            sD = der if sD is None else sD
        return sH, sD


@dataclass(frozen=True)
class SystemSolution:
    y: np.ndarray
    corrections: np.ndarray
    residual: float
    evaluations: int


def solve_system(prob: ImplicitSystemProblem, x, tol: float = 1e-12, max_iter: int = 500) -> SystemSolution:
    """Recursive elimination: component j is solved by Picard iteration with
    components j+1..m re-solved as functions of y_1..y_j at every step.

    Inner solves are warm-started and use a tolerance tied to the outer
    step, and the final residual of every equation is re-checked.
    """
    sH, sD = prob.bounds()
    rows = sD.sum(axis=1)
    if np.any(rows >= CONTRACTION_LIMIT):
        raise NotContractive(float(rows.max()))
    xs = _scalar_x(x)
    g = np.asarray(prob.G(xs), float)
    m = prob.m
    y = g.copy()
    count = [0]

    def H(v):
        count[0] += 1
        return np.asarray(prob.H(xs, v), float)

    def solve_tail(j: int, inner_tol: float) -> None:
        """Solve components j..m-1 in place given y[:j]."""
        if j >= m:
            return

        def step(t):
            y[j] = t
            solve_tail(j + 1, inner_tol)
            return g[j] + H(y)[j]

        t, _, _ = _picard(step, y[j], inner_tol, max_iter)
        y[j] = t
        solve_tail(j + 1, inner_tol)

    solve_tail(0, tol * 1e-3)
    # polish: a few plain sweeps of the full system
    for _ in range(max_iter):
        r = g + H(y) - y
        if np.max(np.abs(r)) < tol * 1e-3:
            break
        y = y + r
    res = float(np.max(np.abs(g + H(y) - y)))
    if not res < tol:
        raise NoConvergence(max_iter, res)
    corr = y - g
    bad = np.abs(corr) > CORRECTION_CONSTANT * sH * (1 + 1e-12) + 1e-300
    if bad.any():
        raise BoundViolation(f"component {int(np.argmax(bad))}: |I| exceeds 2 sup|H|")
    return SystemSolution(y, corr, res, count[0])


# --------------------------------------------------------------------------
# derivative of the correction


@dataclass(frozen=True)
class DerivativeProbe:
    dI_dx: np.ndarray
    sup_Hx: float
    bound: float


def derivative_bound_probe(prob: ImplicitScalarProblem, x, h: float = 1e-5, tol: float = 1e-13) -> DerivativeProbe:
    """Central-difference derivative of the correction I(x) and the bound 2 sup|H_x|.

    Only constant G is accepted.
    """
    X, _ = prob._samples()
    g0 = prob.G(prob._xs(X[0]))
    if any(abs(prob.G(prob._xs(xr)) - g0) > 1e-14 * max(1.0, abs(g0)) for xr in X[:64]):
        raise ConfigError("derivative probe needs a constant G")
    xa = np.atleast_1d(np.asarray(x, float))
    d = np.empty(len(xa))
    for i in range(len(xa)):
        e = np.zeros(len(xa))
        e[i] = h
        ip = solve_scalar(prob, _scalar_x(xa + e) if len(xa) > 1 else float(xa[0] + h), tol).correction
        im = solve_scalar(prob, _scalar_x(xa - e) if len(xa) > 1 else float(xa[0] - h), tol).correction
        d[i] = (ip - im) / (2 * h)
    sHx = prob.sup_Hx()
    bound = CORRECTION_CONSTANT * sHx
    # FD noise allowance: tol / h from each side
    if np.any(np.abs(d) > bound + 4 * tol / h):
        raise BoundViolation(f"|dI/dx| = {np.max(np.abs(d)):.3e} exceeds {bound:.3e}")
    return DerivativeProbe(d, sHx, bound)
