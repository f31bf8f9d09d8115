"""Exception types shared across the engine.

The CLI maps these onto exit codes: ParameterError -> 1 (usage),
LoadError/FormatError -> 2 (data), DivergenceError -> 3 (numerics).
"""


class KrdError(Exception):
    """Base class for all engine errors."""


class ParameterError(KrdError, ValueError):
    """Invalid argument or configuration value."""


class LoadError(KrdError):
    """A required input file is missing or unreadable."""


class FormatError(KrdError):
    """An input file exists but violates the documented format."""


class FitError(KrdError):
    """Histogram fit cannot proceed (e.g. no agreement mass)."""


class DivergenceError(KrdError):
    """Training produced a non-finite loss or activation."""


class ContractError(KrdError):
    """An internal cross-module contract was violated."""
