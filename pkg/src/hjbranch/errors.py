"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration/schema
problems exit 2, inadmissible discretizations exit 3, runtime failures
(solver, regime, bracket) exit 4.
"""


class HJBError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HJBError):
    """Invalid grid, family, or scenario configuration."""


class AdmissibilityError(ConfigurationError):
    """Discretization violates the monotonicity (CFL-type) condition."""


class UsageError(HJBError):
    """API misuse, e.g. mixing functions from different grids."""


class OrderingViolationError(HJBError):
    """A signed distance was requested for a sign-indefinite difference."""


class PropertyFailureError(HJBError):
    """An exact algebraic property of the stencil failed beyond tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EigenIterationError(HJBError):
    """Inverse power iteration lost its sign cone or failed to converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BracketError(HJBError):
    """A bisection bracket does not straddle the target value."""


class RegimeError(HJBError):
    """Spectral regime precondition violated, or existence failed where
    the configured regime guarantees it."""


class FoldTraceError(HJBError):
    """Pseudo-arclength continuation failed below the minimal step size."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class UnstableDetectionError(HJBError):
    """Critical-value detection produced non-monotone evidence."""

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence
