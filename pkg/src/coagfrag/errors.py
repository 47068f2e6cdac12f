"""Exception hierarchy shared by every module.

The CLI maps these onto its exit-code contract: configuration and
validation problems exit 2, numeric failures exit 3 (verification
verdicts are not exceptions and exit 4 at the orchestration layer).
"""


class CoagFragError(Exception):
    """Base class for all package errors."""


class InvalidMassError(CoagFragError, ValueError):
    """A mass is negative, non-finite, or otherwise outside (0, inf)."""


class ParameterError(CoagFragError, ValueError):
    """A scalar parameter is outside its admissible range."""


class EventIndexError(CoagFragError, IndexError):
    """A particle or atom index is outside the occupied slots."""


class ConfigurationError(CoagFragError, ValueError):
    """A kernel, measure, or experiment configuration is rejected."""


class CannotSampleError(CoagFragError, ValueError):
    """Sampling was requested from a measure with zero total weight."""


class NumericError(CoagFragError, RuntimeError):
    """A numerical routine failed to reach its required accuracy."""


class TruncationError(CoagFragError, RuntimeError):
    """An enumeration guard tripped before the requested depth was reached."""
