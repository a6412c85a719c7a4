"""Exceptions raised by emoretrieval.

Errors caused by an input value derive from ``ValueError`` so that callers
can keep catching the builtin type.
"""

__all__ = [
    "EmoRetrievalError",
    "ConfigError",
    "DataFormatError",
    "ShapeError",
    "StaleTapeError",
    "CheckpointError",
    "NonFiniteError",
]


class EmoRetrievalError(Exception):
    """Base class of all package errors"""


class ConfigError(EmoRetrievalError, ValueError):
    """Invalid configuration key, value or path"""


class DataFormatError(EmoRetrievalError, ValueError):
    """Malformed or inconsistent input data file"""


class ShapeError(EmoRetrievalError, ValueError):
    """Array dimensions do not chain"""


class StaleTapeError(ShapeError):
    """Tape does not belong to the current state of the network"""


class CheckpointError(EmoRetrievalError, ValueError):
    """Checkpoint file cannot be decoded into the requested model"""


class NonFiniteError(EmoRetrievalError, ArithmeticError):
    """NaN or Inf encountered in a loss or gradient"""
