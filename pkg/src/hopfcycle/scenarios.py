"""Ready-made toy-model NS points shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixed_points import NSLocusPoint, NSLocusSolver, system_coefficients, t_for_trace, trace_interval
from .invariance import AffineFrame, ConeKind, ConeSpec, FramedMap, shilnikov_frame
from .maps import MapModel, ParamTriple, ToyUnfolding, block_rotation_map
from .tangency import eta_star, omega_for_phase

PS_CENTER = 1.5 * math.pi  # k omega + eta* where sin = -1
PSI_WINDOW = (0.0, math.pi / 2 - math.pi / 20)
PSI_MID = 0.5 * (PSI_WINDOW[0] + PSI_WINDOW[1])


def toy_omega(k: int, phase_offset: float = 0.0, family: ToyUnfolding | None = None, near: float = math.pi / 6) -> float:
    """The omega in (0, pi) with k omega + eta* = 3 pi / 2 + phase_offset, closest to ``near``."""
    family = family or ToyUnfolding()
    coeffs = system_coefficients(family(ParamTriple(0.0, near, 0.0)))
    return omega_for_phase(k, eta_star(coeffs), PS_CENTER + phase_offset, near)


@dataclass
class ToyNSPoint:
    solver: NSLocusSolver
    point: NSLocusPoint
    t_interval: tuple[float, float]

    @property
    def map(self) -> MapModel:
        return self.solver.map_at(self.point)

    def frame(self) -> AffineFrame:
        return shilnikov_frame(self.solver.family(self.point.params), self.solver.k)

    def framed(self) -> tuple[FramedMap, np.ndarray]:
        fr = self.frame()
        return FramedMap(self.map, fr), fr.to_frame(self.point.fixed_point.point.array)


def toy_ns_point(
    k: int,
    phase_offset: float = 0.0,
    psi: float = PSI_MID,
    family: ToyUnfolding | None = None,
) -> ToyNSPoint:
    """NS point of the toy unfolding whose center pair has rotation angle ``psi``."""
    family = family or ToyUnfolding()
    omega = toy_omega(k, phase_offset, family)
    solver = NSLocusSolver(family, k, omega)
    t_lo, t_hi = trace_interval(family, k, omega, solver=solver)
    t = t_for_trace(solver, 2 * math.cos(psi), t_lo, t_hi)
    return ToyNSPoint(solver, solver.solve(t), (t_lo, t_hi))


# --------------------------------------------------------------------------
# cone scenarios

# (x1, x2, y) -> (Z, Y, W): the rotation plane of the block model is (Z, W)
BLOCK_FRAME = AffineFrame(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]), np.zeros(3))


@dataclass
class ConeScenario:
    map: MapModel
    region: tuple[np.ndarray, np.ndarray]
    ss: ConeSpec
    cu: ConeSpec


def block_cone_scenario(lam: float = 1.0 / 3.0, omega: float = math.pi / 6, gamma: float = 3.0) -> ConeScenario:
    """The linear block model in (Z, Y, W) on the box [-1, 1]^3, with delta_dom = 1."""
    m = FramedMap(block_rotation_map(lam, omega, gamma), BLOCK_FRAME)
    box = (-np.ones(3), np.ones(3))
    return ConeScenario(m, box, ConeSpec(ConeKind.SS, 1.0, 1.0), ConeSpec(ConeKind.CU, 1.0, 1.0, 1, lam, gamma))


def toy_cone_scenario(k: int = 10, turn: float = 0.2, half_width: float = 1e-3, family: ToyUnfolding | None = None) -> ConeScenario:
    """T_k of the toy with k omega = pi + turn and lambda gamma = 1, in the Shilnikov frame.

    mu is chosen so that the frame origin is mapped to Y = 0.
    """
    family = family or ToyUnfolding()
    omega = (math.pi + turn) / k
    g = family.gamma**k
    mu = (2.5 + 2 * family.eps * math.sin(k * omega)) / g
    system = family(ParamTriple(mu, omega, 0.0))
    frame = shilnikov_frame(system, k)
    m = FramedMap(system.first_return(k).map, frame)
    box = (-half_width * np.ones(3), half_width * np.ones(3))
    lam_k = 1.0 / g
    dd = system.delta_dom
    return ConeScenario(m, box, ConeSpec(ConeKind.SS, 1.0, dd, k, lam_k, g), ConeSpec(ConeKind.CU, 1.0, dd, k, lam_k, g))
