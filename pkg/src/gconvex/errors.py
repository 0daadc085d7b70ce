"""Exception and warning types shared across the package."""


class GConvexError(Exception):
    """Base class for all errors raised by this package."""


class ExpressionSyntaxError(GConvexError):
    """Source text does not match the driver-expression grammar.

    ``offset`` is the byte offset of the offending token in the source.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownVariable(GConvexError):
    """A z-index exceeds the declared dimension, or a name is not a variable."""

    def __init__(self, name, offset, dim_z=None):
        msg = f"unknown variable {name!r}"
        if dim_z is not None:
            msg += f" for dim_z={dim_z}"
        super().__init__(f"{msg} (offset {offset})")
        self.name = name
        self.offset = offset


class DivisionHazard(GConvexError):
    """A denominator subtree can vanish on the validation grid."""


class NonLipschitzWarning(UserWarning):
    """Lipschitz estimate keeps growing under grid refinement."""


class StabilityViolation(GConvexError):
    """Requested grids break the explicit scheme's stability relation."""


class DomainTooSmall(GConvexError):
    """Boundary influence reaches the evaluation point."""


class InterpolationOutOfRange(GConvexError):
    """Query point lies outside the stored surface/table."""


class GrowthBoundViolated(GConvexError):
    """Payoff exceeds its declared polynomial growth bound on the grid."""


class RegressionSingular(GConvexError):
    """Normal matrix of the regression is numerically singular."""


class PicardDivergence(GConvexError):
    """Implicit step is not a contraction (mu_hat * dt >= 1)."""


class DerivativeUnavailable(GConvexError):
    """Derivative requested at a kink of a tabulated function."""


class GridTooCoarse(GConvexError):
    """Too few grid points remain after kink exclusion."""


class EmptyMinorantFamily(GConvexError):
    """No feasible affine minorant exists on the slope grid."""


class DominationViolated(GConvexError):
    """A family member exceeds the dominating function."""


class HypothesisNotVerified(GConvexError):
    """A structural hypothesis of a composition/corollary check failed."""


class PreconditionFailed(GConvexError):
    """Operation precondition (generator structure) does not hold."""


class InconsistentRoutes(GConvexError):
    """Flag-based and membership-based verdicts disagree."""


class InconclusiveClassification(GConvexError):
    """Process discrepancy mixes signs beyond tolerance."""


class ContradictionDetected(GConvexError):
    """Solver outcome contradicts a certified pointwise verdict."""


class InputNotInEpigraph(GConvexError):
    """Terminal pair violates h(x1) <= x2 on the grid."""


class AxiomViolated(GConvexError):
    """A g-expectation axiom fails beyond tolerance (scheme defect)."""

    def __init__(self, axiom, message):
        super().__init__(f"axiom {axiom}: {message}")
        self.axiom = axiom


class ScenarioError(GConvexError):
    """Malformed scenario/batch input."""
