"""Exception hierarchy shared by all modules."""


class PathInvError(Exception):
    """Base class for every error raised by :mod:`pathinv`."""


class NotInNeighborhood(PathInvError):
    """A point lies outside the tubular neighborhood where projection is unique."""


class NonUniqueProjection(PathInvError):
    """Two distinct foot points are (numerically) equally close."""


class CurvatureInfeasible(PathInvError):
    """The path curvature exceeds what the steering limit allows."""

    def __init__(self, message, worst_lambda=None, margin=None):
        super().__init__(message)
        self.worst_lambda = worst_lambda
        self.margin = margin


class SteeringLimit(PathInvError):
    """The steering angle is outside ``[-x4_max, x4_max]``."""


class NonFiniteState(PathInvError):
    """The integrated state became NaN or infinite."""


class Singularity(PathInvError):
    """The decoupling matrix is singular (typically ``vrm + x5 == 0``)."""


class HeadingViolation(PathInvError):
    """The heading points away from the direction of increasing path parameter."""


class EmptyPlan(PathInvError):
    pass


class StartInCollision(PathInvError):
    pass


class BudgetExhausted(PathInvError):
    """The planner ran out of iterations. This is not a proof of infeasibility."""


class NotInFlowOrJumpSet(PathInvError):
    pass


class ScenarioError(PathInvError):
    """A scenario file is malformed or violates a validation rule."""
