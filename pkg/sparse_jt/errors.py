"""
Exception hierarchy for the sparse-JT simulator.
"""


class SparseJTError(Exception):
    """Base class for every error raised by sparse_jt."""


class ConfigError(SparseJTError, ValueError):
    """Invalid or unknown configuration values."""


class DimensionMismatch(SparseJTError, ValueError):
    """Array shapes do not agree with the network dimensions."""


class CapacityTooSmall(SparseJTError):
    """Fronthaul capacity cannot carry even a single quantization bit."""


class RankDeficient(SparseJTError):
    """Zero-forcing is impossible for the given channel dimensions."""


class SingularSystem(SparseJTError):
    """A linear system in the power iteration could not be factorized."""


class MaxIterExceeded(SparseJTError):
    """The inner power iteration hit its iteration cap."""


class BracketFailure(SparseJTError):
    """No sign change of g(lambda) was found while expanding the bracket."""


class NotStationary(SparseJTError):
    """A second-order test was requested away from a stationary point."""


class EmptySupport(SparseJTError):
    """A support pattern selects no (RRH, user) block at all."""


class ZeroDenominator(SparseJTError):
    """A Rayleigh-quotient denominator vanished."""


class SimulationError(SparseJTError):
    """A realization or experiment failed for a reason outside the solver."""
