"""Sampling checks of cone fields and area expansion, unstable-set growth and stable-manifold distance."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .center_hopf import PlanarTaylorMap
from .errors import ConfigError, EmptyCloud, MeshExplosion
from .maps import HomoclinicSystem, MapModel, StatePoint, as_array

# --------------------------------------------------------------------------
# coordinate frames


@dataclass(frozen=True)
class AffineFrame:
    """``xi = F (x - origin)``; frame coordinates are ordered (Z, Y, W)."""

    matrix: np.ndarray
    origin: np.ndarray

    def to_frame(self, x):
        return (np.asarray(x, float) - self.origin) @ np.asarray(self.matrix).T

    def from_frame(self, xi):
        return np.asarray(xi, float) @ np.linalg.inv(self.matrix).T + self.origin


class FramedMap(MapModel):
    """``map_`` written in the coordinates of ``frame``."""

    def __init__(self, map_: MapModel, frame: AffineFrame):
        self.base = map_
        self.frame = frame
        self.analytic = map_.analytic
        self._Finv = np.linalg.inv(frame.matrix)

    def __call__(self, xi):
        return self.frame.to_frame(self.base(self.frame.from_frame(xi)))

    def jacobian(self, xi):
        J = self.base.jacobian(self.frame.from_frame(xi))
        return self.frame.matrix @ J @ self._Finv


def shilnikov_frame(system: HomoclinicSystem, k: int) -> AffineFrame:
    """Frame centred at the tangency base points.

    Z and W are the x-offsets from ``M+`` rotated so that Z points along the
    global map's b-vector; Y is the y-coordinate after ``k`` linearised local
    steps, measured from ``M-``.
    """
    from .tangency import extract_global_coefficients

    m_plus = np.asarray(system.m_plus, float)
    m_minus = np.asarray(system.m_minus, float)
    target = m_plus.copy()
    target[2] = system.global_(m_minus)[2]
    coeffs = extract_global_coefficients(system.global_, m_minus, target)
    beta = math.atan2(coeffs.b2, coeffs.b1)
    g = abs(system.local.jacobian(np.asarray(system.saddle, float))[2, 2]) ** k
    cb, sb = math.cos(beta), math.sin(beta)
    F = np.array([[cb, sb, 0.0], [0.0, 0.0, g], [-sb, cb, 0.0]])
    origin = np.array([m_plus[0], m_plus[1], m_minus[2] / g])
    return AffineFrame(F, origin)


# --------------------------------------------------------------------------
# cones


class ConeKind(Enum):
    SS = "SS"
    CU = "CU"


@dataclass(frozen=True)
class ConeSpec:
    """Cone predicates in frame coordinates (Z, Y, W) with tangent components (z, y, w).

    SS: |z| + |y| < K delta_dom |w|.  CU: |w| < K((|Y| + lambda_k)|z| + |y| / gamma_k).
    """

    kind: ConeKind
    K: float
    delta_dom: float
    k: int = 1
    lambda_k: float = 0.0
    gamma_k: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.delta_dom > 0:
            raise ValueError("delta_dom must be positive")
        if not self.gamma_k > 0:
            raise ValueError("gamma_k must be positive")
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", ConeKind(self.kind))

    def with_K(self, K: float) -> "ConeSpec":
        return ConeSpec(self.kind, K, self.delta_dom, self.k, self.lambda_k, self.gamma_k)

    def _sides(self, point, v):
        """Left and right side of the strict inequality ``lhs < rhs``."""
        z, y, w = np.abs(v[..., 0]), np.abs(v[..., 1]), np.abs(v[..., 2])
        if self.kind is ConeKind.SS:
            return z + y, self.K * self.delta_dom * w
        Y = np.abs(point[..., 1])
        return w, self.K * ((Y + self.lambda_k) * z + y / self.gamma_k)

    def margin(self, point, v):
        """Signed margin in [-1, 1]; positive strictly inside the cone."""
        lhs, rhs = self._sides(np.asarray(point, float), np.asarray(v, float))
        tot = lhs + rhs
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, (rhs - lhs) / np.where(tot > 0, tot, 1.0), -1.0)

    def contains(self, point, v):
        return self.margin(point, v) > 0

    def sample(self, point, rng: np.random.Generator):
        """Vectors inside the cone at each of ``point`` (shape (n, 3)).

        Half the draws are pushed to within 1e-3 of the boundary, where
        violations show up first.
        """
        point = np.asarray(point, float)
        n = point.shape[0]
        frac = rng.uniform(0.0, 1.0, n)
        edge = rng.uniform(size=n) < 0.5
        frac[edge] = 1.0 - rng.uniform(0.0, 1e-3, edge.sum())
        frac *= 1.0 - 1e-9
        sgn = rng.choice([-1.0, 1.0], size=(n, 3))
        phi = rng.uniform(0.0, math.pi / 2, n)
        v = np.empty((n, 3))
        if self.kind is ConeKind.SS:
            budget = self.K * self.delta_dom * frac
            v[:, 0] = budget * np.cos(phi) ** 2
            v[:, 1] = budget * np.sin(phi) ** 2
            v[:, 2] = 1.0
        else:
            Y = np.abs(point[:, 1])
            a = np.cos(phi) ** 2
            b = np.sin(phi) ** 2
            v[:, 0] = a / (Y + self.lambda_k) if self.lambda_k > 0 else a / np.maximum(Y, 1e-300)
            v[:, 1] = b * self.gamma_k
            v[:, 2] = self.K * frac
        v *= sgn
        return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class ConeReport:
    violations: int
    worst_margin: float
    n_samples: int
    acceptance_rate: float
    K: float


def _sample_region(map_: MapModel, region, n: int, rng: np.random.Generator, batch: int, max_draws: int):
    lo, hi = (np.asarray(b, float) for b in region)
    pts, imgs = [], []
    got = drawn = 0
    while got < n:
        if drawn >= max_draws:
            raise RuntimeError(f"only {got} of {n} region points map back into the region after {drawn} draws")
        p = rng.uniform(lo, hi, size=(batch, 3))
        drawn += batch
        with np.errstate(all="ignore"):
            q = map_(p)
        ok = np.all(np.isfinite(q), axis=1) & np.all((q >= lo) & (q <= hi), axis=1)
        pts.append(p[ok])
        imgs.append(q[ok])
        got += int(ok.sum())
    return np.concatenate(pts)[:n], np.concatenate(imgs)[:n], got / drawn


def cone_invariance_check(
    map_: MapModel,
    cone: ConeSpec,
    region,
    n_samples: int = 10_000,
    seed: int = 0,
    batch: int = 100_000,
    max_draws: int = 50_000_000,
) -> ConeReport:
    """Sampled check that SS cones are backward invariant and CU cones forward invariant.

    ``map_`` must already be written in the frame where ``cone`` is defined;
    ``region`` is a box ``(lo, hi)`` in that frame. Points are drawn with
    their image in the region as well.
    """
    rng = np.random.default_rng(seed)
    p, q, rate = _sample_region(map_, region, n_samples, rng, batch, max_draws)
    J = map_.jacobian(p)
    if cone.kind is ConeKind.SS:
        v = cone.sample(q, rng)
        u = np.linalg.solve(J, v[..., None])[..., 0]
        m = cone.margin(p, u)
    else:
        v = cone.sample(p, rng)
        u = np.einsum("nij,nj->ni", J, v)
        m = cone.margin(q, u)
    m = np.where(np.isfinite(m), m, -1.0)
    return ConeReport(int(np.sum(m <= 0)), float(m.min()), n_samples, rate, cone.K)


def calibrate_cone_K(
    map_: MapModel,
    cone: ConeSpec,
    region,
    pilot: int = 1000,
    seed: int = 0,
    safety: float = 2.0,
    K_range: tuple[float, float] = (1e-6, 1e8),
    per_decade: int = 10,
) -> float:
    """Smallest grid K whose pilot sample passes, times ``safety``.

    The grid is scanned upward; a K is accepted only if ``safety * K``
    passes the pilot as well, which skips isolated lucky draws below the
    true threshold.
    """
    lo, hi = math.log10(K_range[0]), math.log10(K_range[1])
    grid = np.logspace(lo, hi, int(round((hi - lo) * per_decade)) + 1)
    for K in grid:
        K = float(K)
        if cone_invariance_check(map_, cone.with_K(K), region, pilot, seed).violations:
            continue
        if cone_invariance_check(map_, cone.with_K(safety * K), region, pilot, seed).violations:
            continue
        return safety * K
    raise ValueError(f"cone fails the pilot for every K up to {grid[-1]:.3g}")


# --------------------------------------------------------------------------
# area expansion on the center manifold


@dataclass(frozen=True)
class DetExpansionReport:
    min_product: float
    products: np.ndarray
    left: np.ndarray
    steps: np.ndarray

    @property
    def surviving_min(self) -> float:
        keep = ~self.left
        return float(self.products[keep].min()) if keep.any() else math.nan


def det_expansion_check(
    planar: PlanarTaylorMap,
    annulus: tuple[float, float],
    n_iter: int,
    n_samples: int = 200,
    seed: int = 0,
    chart_radius: float = 0.5,
) -> DetExpansionReport:
    """Products of |det| of the planar Jacobian along orbits started in the annulus.

    An orbit stops once it leaves the disk of radius ``chart_radius``; such
    samples are flagged in ``left`` and keep the product accumulated so far.
    """
    r_in, r_out = annulus
    if not 0 < r_in <= r_out:
        raise ValueError("annulus needs 0 < r_in <= r_out")
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(r_in**2, r_out**2, n_samples))
    a = rng.uniform(0, 2 * math.pi, n_samples)
    p = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    log_prod = np.zeros(n_samples)
    active = np.ones(n_samples, bool)
    steps = np.zeros(n_samples, int)
    for _ in range(n_iter):
        if not active.any():
            break
        pa = p[active]
        det = np.abs(np.linalg.det(planar.jacobian(pa)))
        log_prod[active] += np.log(det)
        steps[active] += 1
        nxt = planar(pa)
        out = ~(np.all(np.isfinite(nxt), axis=1) & (np.hypot(nxt[:, 0], nxt[:, 1]) <= chart_radius))
        p[active] = nxt
        idx = np.flatnonzero(active)
        active[idx[out]] = False
    prod = np.exp(log_prod)
    return DetExpansionReport(float(prod.min()), prod, ~active, steps)


# --------------------------------------------------------------------------
# unstable-set growth


@dataclass
class ManifoldCloud:
    points: np.ndarray
    generation_of: np.ndarray
    segments: np.ndarray
    generation: int
    y_extent: tuple[float, float]
    reached: bool
    resolution: float
    extent_history: list = field(default_factory=list)
    seed_extent: float = 0.0
    radius_history: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def state_points(self) -> list[StatePoint]:
        return [StatePoint.from_array(p) for p in self.points]


def write_cloud_csv(cloud: ManifoldCloud, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "Z", "Y", "W"])
        for g, (z, y, wv) in zip(cloud.generation_of, cloud.points):
            w.writerow([int(g), f"{z:.17g}", f"{y:.17g}", f"{wv:.17g}"])


def center_plane(J) -> np.ndarray:
    """Orthonormal basis (2 columns) of the invariant plane of the complex pair of ``J``.

    Without a complex pair the two eigenvalues of largest modulus are used.
    """
    ev, V = np.linalg.eig(np.asarray(J, float))
    cplx = np.flatnonzero(np.abs(ev.imag) > 1e-12)
    if cplx.size:
        i = cplx[np.argmax(ev[cplx].imag)]
        P = np.column_stack([V[:, i].real, V[:, i].imag])
    else:
        order = np.argsort(-np.abs(ev))
        P = V[:, order[:2]].real
    Q, _ = np.linalg.qr(P)
    return Q


def _linear_extent(J: np.ndarray, q: np.ndarray, offsets: np.ndarray, cap: int = 1000) -> float:
    """Largest |Y| reached by the linearised images of the seed ring over one revolution."""
    ev = np.linalg.eigvals(J)
    turn = np.max(np.abs(np.angle(ev)))
    n = cap if turn < 2 * math.pi / cap else int(math.ceil(2 * math.pi / turn))
    off = offsets.copy()
    ext = float(np.max(np.abs(q[1] + off[:, 1])))
    for _ in range(n):
        off = off @ J.T
        ext = max(ext, float(np.max(np.abs(q[1] + off[:, 1]))))
    return ext


def _refine(map_: MapModel, pre: np.ndarray, img: np.ndarray, closed: bool, max_len: float, max_rounds: int = 40):
    """Insert preimage midpoints wherever an image segment is longer than ``max_len``."""
    for _ in range(max_rounds):
        if len(pre) < 2:
            break
        nxt_pre = np.roll(pre, -1, axis=0) if closed else pre[1:]
        nxt_img = np.roll(img, -1, axis=0) if closed else img[1:]
        cur_img = img if closed else img[:-1]
        cur_pre = pre if closed else pre[:-1]
        with np.errstate(invalid="ignore"):
            long = np.linalg.norm(nxt_img - cur_img, axis=1) > max_len
        long &= np.all(np.isfinite(nxt_img), axis=1) & np.all(np.isfinite(cur_img), axis=1)
        if not long.any():
            break
        idx = np.flatnonzero(long)
        mid = 0.5 * (cur_pre[idx] + nxt_pre[idx])
        with np.errstate(all="ignore"):
            mid_img = map_(mid)
        pre = np.insert(pre, idx + 1, mid, axis=0)
        img = np.insert(img, idx + 1, mid_img, axis=0)
    return pre, img


def _coarsen(pre: np.ndarray, img: np.ndarray, closed: bool, min_len: float):
    """Drop every other point whose neighbours' images are closer than ``min_len``."""
    n = len(img)
    if n < 4:
        return pre, img
    prev = np.roll(img, 1, axis=0)
    nxt = np.roll(img, -1, axis=0)
    with np.errstate(invalid="ignore"):
        short = np.linalg.norm(nxt - prev, axis=1) < min_len
    if not closed:
        short[[0, -1]] = False
    short[1::2] = False
    if closed and n % 2:
        short[-1] = False
    if short.sum() == 0 or n - short.sum() < 8:
        return pre, img
    return pre[~short], img[~short]


def _clip(pts: np.ndarray, closed: bool, lo, hi):
    """Split a polyline into the runs that stay inside the box."""
    inside = np.all(np.isfinite(pts), axis=1) & np.all((pts >= lo) & (pts <= hi), axis=1)
    if inside.all():
        return [(pts, closed)]
    runs = []
    start = None
    for i, ok in enumerate(np.append(inside, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            runs.append(pts[start:i])
            start = None
    if closed and inside[0] and inside[-1] and len(runs) > 1:
        runs[0] = np.concatenate([runs.pop(), runs[0]])
    return [(r, False) for r in runs]


def grow_unstable_set(
    map_: MapModel,
    Q,
    seed_radius: float,
    max_generations: int,
    box,
    y_target: float | None = None,
    resolution: float | None = None,
    budget: int = 1_000_000,
    n_seed: int = 64,
) -> ManifoldCloud:
    """Iterate a small ring in the center plane at ``Q`` and collect the images.

    Coordinates are (Z, Y, W); growth stops once some point has
    ``|Y| >= y_target`` (default: the smaller Y-face of ``box``). Image
    segments longer than three times ``resolution`` are refined by
    inserting preimage midpoints.
    """
    q = as_array(Q)
    lo, hi = (np.asarray(b, float) for b in box)
    if y_target is None:
        y_target = min(abs(lo[1]), abs(hi[1]))
    J = map_.jacobian(q)
    P = center_plane(J)
    a = np.linspace(0.0, 2 * math.pi, n_seed, endpoint=False)
    offsets = seed_radius * (np.outer(np.cos(a), P[:, 0]) + np.outer(np.sin(a), P[:, 1]))
    seed_extent = _linear_extent(J, q, offsets)
    if seed_extent >= y_target:
        raise ConfigError(
            f"seed radius {seed_radius:.3g} too large: the linearised ring already reaches |Y| = {seed_extent:.3g}"
        )
    ring = q + offsets
    if resolution is None:
        resolution = 2 * math.pi * seed_radius / n_seed
    max_len = 3.0 * resolution

    curves = [(ring, True)]
    chunks, gens, segs = [ring], [np.zeros(n_seed, int)], [_segments(0, n_seed, True)]
    total = n_seed
    ys = ring[:, 1]
    y_min, y_max = float(ys.min()), float(ys.max())
    history = [(y_min, y_max)]
    radii = [float(np.max(np.linalg.norm(ring - q, axis=1)))]
    reached = max(abs(y_min), abs(y_max)) >= y_target
    gen = 0

    def cloud(gen_done):
        pts = np.concatenate(chunks)
        return ManifoldCloud(
            points=pts,
            generation_of=np.concatenate(gens),
            segments=np.concatenate(segs) if segs else np.zeros((0, 2), int),
            generation=gen_done,
            y_extent=(y_min, y_max),
            reached=reached,
            resolution=resolution,
            extent_history=history,
            radius_history=radii,
            seed_extent=seed_extent,
        )

    while not reached and gen < max_generations and curves:
        gen += 1
        new_curves = []
        for pre, closed in curves:
            with np.errstate(all="ignore"):
                img = map_(pre)
            pre, img = _refine(map_, pre, img, closed, max_len)
            pre, img = _coarsen(pre, img, closed, resolution)
            new_curves.extend(c for c in _clip(img, closed, lo, hi) if len(c[0]) >= 2)
            if total + len(img) > budget:
                total += len(img)
                raise MeshExplosion(total, cloud(gen - 1))
        curves = new_curves
        gen_pts = [c for c, _ in curves]
        if not gen_pts:
            break
        for c, closed in curves:
            chunks.append(c)
            gens.append(np.full(len(c), gen))
            segs.append(_segments(total, len(c), closed))
            total += len(c)
        allp = np.concatenate(gen_pts)
        y_min = min(y_min, float(allp[:, 1].min()))
        y_max = max(y_max, float(allp[:, 1].max()))
        history.append((y_min, y_max))
        radii.append(float(np.max(np.linalg.norm(allp - q, axis=1))))
        reached = max(abs(y_min), abs(y_max)) >= y_target
    return cloud(gen)


def _segments(offset: int, n: int, closed: bool) -> np.ndarray:
    i = np.arange(n - 1)
    s = np.stack([i, i + 1], axis=1)
    if closed and n > 2:
        s = np.vstack([s, [n - 1, 0]])
    return s + offset


# --------------------------------------------------------------------------
# distance to a stable surface


@dataclass(frozen=True)
class StableDistance:
    min_distance: float
    pair: tuple[np.ndarray, np.ndarray]
    crossing: bool
    evidence: bool
    tol: float


def stable_manifold_distance(
    cloud: ManifoldCloud,
    stable_graph: Callable,
    tol: float | None = None,
    n_candidates: int = 32,
) -> StableDistance:
    """Distance between the cloud and the surface ``Y = f(Z, W)``.

    A sign change of ``Y - f`` along a cloud segment is a crossing; its
    distance is bounded by the segment length. Otherwise the closest
    candidates by vertical gap are refined by minimisation.
    """
    pts = np.asarray(cloud.points, float)
    if len(pts) == 0:
        raise EmptyCloud("cloud has no points")
    if tol is None:
        tol = 10.0 * cloud.resolution
    f = lambda Z, W: np.asarray(stable_graph(Z, W), float)
    gap = pts[:, 1] - f(pts[:, 0], pts[:, 2])
    best_d, best_pair, crossing = math.inf, None, False

    hit = np.flatnonzero(gap == 0)
    if hit.size:
        p = pts[hit[0]]
        return StableDistance(0.0, (p, p.copy()), False, True, tol)

    segs = np.asarray(cloud.segments, int).reshape(-1, 2)
    if len(segs):
        sc = np.flatnonzero(gap[segs[:, 0]] * gap[segs[:, 1]] < 0)
        if sc.size:
            crossing = True
            a, b = pts[segs[sc, 0]], pts[segs[sc, 1]]
            ga, gb = gap[segs[sc, 0]], gap[segs[sc, 1]]
            s = (ga / (ga - gb))[:, None]
            x = a + s * (b - a)
            surf = np.stack([x[:, 0], f(x[:, 0], x[:, 2]), x[:, 2]], axis=1)
            d = np.maximum(np.linalg.norm(x - surf, axis=1), 0.0)
            j = int(np.argmin(d))
            # the straight chord can miss a curved surface by its own length at most
            bound = min(float(d[j]), float(np.linalg.norm(b[j] - a[j])))
            best_d, best_pair = bound, (x[j], surf[j])

    order = np.argsort(np.abs(gap))[:n_candidates]
    for i in order:
        p = pts[i]

        def dist2(zw):
            return float((p[0] - zw[0]) ** 2 + (p[1] - f(zw[0], zw[1])) ** 2 + (p[2] - zw[1]) ** 2)

        res = minimize(dist2, x0=[p[0], p[2]], method="Nelder-Mead", options={"xatol": 1e-14, "fatol": 1e-30, "maxiter": 2000})
        d = math.sqrt(max(res.fun, 0.0))
        d = min(d, abs(gap[i]))
        if d < best_d:
            zw = res.x if math.sqrt(max(res.fun, 0.0)) <= abs(gap[i]) else (p[0], p[2])
            best_d = d
            best_pair = (p.copy(), np.array([zw[0], float(f(zw[0], zw[1])), zw[1]]))
    return StableDistance(float(best_d), best_pair, crossing, bool(crossing or best_d < tol), tol)
