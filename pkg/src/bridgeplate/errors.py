"""Exception hierarchy shared by every module."""


class BridgePlateError(Exception):
    """Base class for all package errors."""


class ConfigError(BridgePlateError, ValueError):
    """A configuration value violates a documented invariant."""


class CflViolation(ConfigError):
    """Time step exceeds the history-grid spacing of the upwind transport."""


class DimensionMismatch(BridgePlateError, ValueError):
    pass


class SolverError(BridgePlateError, RuntimeError):
    """Factorization or iterative solve failed."""


class ConvergenceError(SolverError):
    pass


class InstabilityDetected(BridgePlateError, FloatingPointError):
    """A state field overflowed or became non-finite."""


class NotApplicable(BridgePlateError, ValueError):
    """A diagnostic was requested outside its domain (e.g. negative energy)."""
