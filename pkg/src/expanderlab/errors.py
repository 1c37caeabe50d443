"""Exception types shared across the package."""


class ExpanderLabError(Exception):
    """Base class for all package errors."""


class ValidationError(ExpanderLabError, ValueError):
    """Inputs violate a documented precondition."""


class OddStubCount(ValidationError):
    pass


class DegreeInfeasible(ValidationError):
    pass


class RetryExhausted(ExpanderLabError):
    pass


class Disconnected(ExpanderLabError):
    pass


class UnreachableNode(ExpanderLabError):
    def __init__(self, nodes, message="nodes cannot reach the destination"):
        self.nodes = list(nodes)
        super().__init__(f"{message}: {self.nodes[:20]}{' ...' if len(self.nodes) > 20 else ''}")


class CycleDetected(ExpanderLabError):
    pass


class NotModeled(ExpanderLabError):
    pass


class NoRoot(ExpanderLabError):
    pass


class NoPath(ExpanderLabError):
    pass


class NonConvergence(ExpanderLabError):
    pass


class PremiseViolated(ValidationError):
    pass


class ProductMismatch(ValidationError):
    pass


class CapacityExceeded(ExpanderLabError):
    pass


class MalformedPlan(ExpanderLabError):
    pass


class EmptyPhase(ValidationError):
    pass


class UnplacedNode(ExpanderLabError):
    pass


class LayoutInfeasible(ExpanderLabError):
    pass


class Infeasible(ExpanderLabError):
    def __init__(self, constraint, message=""):
        self.constraint = constraint
        super().__init__(f"infeasible ({constraint}){': ' + message if message else ''}")


class InfeasibleRatio(Infeasible):
    def __init__(self, message=""):
        super().__init__("oversubscription ratio", message)
