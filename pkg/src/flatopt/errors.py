"""Exception types shared across the package."""


class FlatoptError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrix(FlatoptError):
    """Linear solve hit a pivot below the singularity threshold."""


class RhsDomainError(FlatoptError):
    """An ODE right-hand side was evaluated outside its valid domain.

    The adaptive integrator treats this as a rejected step and retries
    with a smaller one, so raising it from a controller callback is the
    supported way to signal "this trial state is not admissible".
    """


class StepUnderflow(FlatoptError):
    """Adaptive integration could not meet tolerance above the minimum step."""


class NotHurwitz(FlatoptError):
    """Characteristic polynomial has a root with non-negative real part."""


class UnsupportedOrder(FlatoptError):
    """Requested derivative order is outside what the problem supplies."""


class ValidationFailed(FlatoptError):
    """A user-supplied derivative callback disagrees with finite differences."""


class BarrierDomain(RhsDomainError):
    """Barrier evaluation at a point violating an inequality constraint.

    Subclasses RhsDomainError so the integrator's rejection logic also
    covers trial states that leave the relaxed feasible set.
    """


class RankDeficient(FlatoptError):
    """Equality constraint matrix does not have full row rank."""


class FlatnessSingularity(FlatoptError):
    """Flat map is not invertible at this jet (e.g. zero forward speed)."""


class NoConvergence(FlatoptError):
    """Iterative oracle exhausted its iteration budget."""


class InsufficientSamples(FlatoptError):
    """Too few usable samples to fit a decay rate."""


class UnknownScenario(FlatoptError):
    """Scenario name not recognized by the builder."""


class InCollision(FlatoptError):
    """Evaluation point lies inside an obstacle disk."""


class InfeasibleStart(FlatoptError):
    """Scenario initial condition violates its constraints at t = 0."""


class ConfigError(FlatoptError):
    """Malformed configuration text or unknown/invalid keys."""
