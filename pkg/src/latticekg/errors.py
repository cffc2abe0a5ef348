"""Exception hierarchy shared by all latticekg modules.

Every error that a caller can act on gets its own class so the harness can
map failures to config keys and the tests can assert on the exact failure
mode rather than on message strings.
"""


class LatticeKGError(Exception):
    """Base class for all package errors."""


class ConfigError(LatticeKGError):
    """Invalid, unknown, missing or cross-field-inconsistent configuration.

    Carries the offending key path(s) in ``keys`` when known.
    """

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class ResonanceError(LatticeKGError):
    """Exact rational resonance <k, omega> in pi*Z within the probe cutoff."""

    def __init__(self, message, k):
        super().__init__(message)
        self.k = tuple(k)


class DomainError(LatticeKGError):
    """Argument outside the mathematical domain of an operation."""


class DimensionError(LatticeKGError):
    """Array length does not match the lattice window."""


class PositivityError(LatticeKGError):
    """Operator expected positive definite is not (m too small vs. V)."""


class NearSingularError(LatticeKGError):
    """Resolvent shift too close to the spectrum."""


class WindowError(LatticeKGError):
    """Lattice window too small for the requested run (light cone or decay range)."""


class ContaminatedTrajectoryError(LatticeKGError):
    """Wave amplitude reached the window boundary; recorded norms untrustworthy."""


class PrecisionError(LatticeKGError):
    """Quadrature tolerance not met within the panel budget.

    ``achieved`` holds the best error estimate reached.
    """

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = float(achieved)


class InsufficientDataError(LatticeKGError):
    """Not enough samples for a statistically meaningful fit."""


class MissingStatesError(LatticeKGError):
    """Operation needs full per-time states but the trajectory is storage-lean."""


class RunError(LatticeKGError):
    """Module error wrapped with the run kind and config hash by the harness."""

    def __init__(self, message, kind, config_hash):
        super().__init__(message)
        self.kind = kind
        self.config_hash = config_hash
