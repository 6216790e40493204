"""Exception types raised across the package."""


class BdrisError(Exception):
    """Base class for all package errors."""


class InvalidConfig(BdrisError, ValueError):
    pass


class DegenerateGeometry(BdrisError, ValueError):
    pass


class DegenerateRetraction(BdrisError, ArithmeticError):
    pass


class DivisionDegenerate(BdrisError, ArithmeticError):
    pass


class Infeasible(BdrisError):
    """The QoS constraints of the precoder subproblem admit no point."""


class SolverStall(BdrisError):
    """The conic solver did not reach its tolerance within the iteration cap."""


class QosInfeasible(BdrisError):
    """QoS thresholds stayed infeasible after every allowed relaxation."""
