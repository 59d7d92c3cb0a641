"""Numerics for Neimark-Sacker points near a homoclinic tangency to a focus-saddle in 3D maps.

Modules: ``maps`` (local, global and first-return maps, the toy model),
``fixed_points`` (Newton, multipliers, the NS locus), ``center_hopf``
(center manifold and first Lyapunov coefficient), ``tangency`` (global-map
coefficients and omega-windows), ``invariance`` (cones, growth, distance),
``contraction`` (implicit-equation solvers) and ``cli``.
"""

from .center_hopf import ComplexTaylorMap, PlanarTaylorMap, lyapunov_coefficient, ns_report, reference_curve
from .contraction import ImplicitScalarProblem, ImplicitSystemProblem, solve_scalar, solve_system
from .errors import HopfCycleError
from .fixed_points import NSLocusSolver, multipliers, newton_fixed_point, trace_interval
from .maps import FirstReturnSpec, ParamTriple, StatePoint, ToyModelConfig, ToyUnfolding

__version__ = "0.1.0"
