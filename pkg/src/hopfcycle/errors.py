"""Exception hierarchy shared by all modules."""


class HopfCycleError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HopfCycleError, ValueError):
    """Invalid model parameters or scenario configuration."""


class DomainError(HopfCycleError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NonFinite(HopfCycleError, ArithmeticError):
    """A map evaluation produced NaN or infinity."""


class LeftChart(HopfCycleError):
    """An orbit left the chart on which the map is defined."""

    def __init__(self, step, point=None):
        self.step = step
        self.point = point
        super().__init__(f"orbit left the chart at step {step}")


class NotInSection(HopfCycleError):
    """Point outside the return section."""


class NoConvergence(HopfCycleError):
    def __init__(self, iterations, residual=float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


class SingularJacobian(HopfCycleError):
    def __init__(self, condition_number):
        self.condition_number = condition_number
        super().__init__(f"Jacobian is numerically singular (cond {condition_number:.3e})")


class EigenFailure(HopfCycleError):
    pass


class Ambiguous(HopfCycleError):
    """Multiplier too close to the unit circle to classify."""


class NoFixedPoint(HopfCycleError):
    pass


class ResonanceGuard(HopfCycleError):
    def __init__(self, psi):
        self.psi = psi
        super().__init__(f"rotation angle {psi:.6f} is within the strong-resonance guard band")


class WindowViolation(HopfCycleError):
    pass


class NotBracketed(HopfCycleError):
    pass


class SpectrumMismatch(HopfCycleError):
    pass


class SingularHomological(HopfCycleError):
    pass


class NotAligned(HopfCycleError):
    pass


class NoTangency(HopfCycleError):
    pass


class DegenerateContact(HopfCycleError):
    pass


class MeshExplosion(HopfCycleError):
    def __init__(self, n_points, cloud=None):
        self.n_points = n_points
        self.cloud = cloud
        super().__init__(f"manifold mesh exceeded the point budget ({n_points} points)")


class EmptyCloud(HopfCycleError):
    pass


class NotContractive(HopfCycleError):
    def __init__(self, bound):
        self.bound = bound
        super().__init__(f"derivative bound {bound:.4g} is not below 1/2")


class BoundViolation(HopfCycleError, AssertionError):
    """A certified a-priori bound failed on a computed solution."""
