"""Exception types shared across the package."""


class HymppcError(Exception):
    """Base class for all package-specific errors."""


class UnknownMode(HymppcError):
    pass


class UnknownTransition(HymppcError):
    pass


class DimensionMismatch(HymppcError):
    pass


class SingularSystem(HymppcError):
    """The assembled linear system is singular or too ill-conditioned to trust."""


class NoRoot(HymppcError):
    """Every Newton start failed; the candidate sequence is treated as infeasible."""


class OrderViolation(NoRoot):
    """A converged root has non-ordered jump times; treated as infeasible."""


class Exhausted(HymppcError):
    """The branch-and-bound frontier emptied out: every candidate was infeasible."""


class IterationLimit(HymppcError):
    pass


class ZenoSuspect(HymppcError):
    """Two jumps were localized at the same time instant."""


class IntegrationFailure(HymppcError):
    pass
