"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage/config problems -> 1,
data problems -> 2, numeric problems -> 3.
"""


class FraudseqError(Exception):
    pass


class DimensionError(FraudseqError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(FraudseqError, ValueError):
    """Invalid configuration key or value."""


class DataError(FraudseqError, ValueError):
    """Degenerate, ill-ordered, or malformed data."""


class PolicyError(FraudseqError, ValueError):
    """Operation requested on a split where it is disallowed."""


class NumericError(FraudseqError, ArithmeticError):
    """NaN/Inf encountered, divergence, or a determinism violation."""
