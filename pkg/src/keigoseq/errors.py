"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``DataError`` subclasses exit 2 and
``NumericError`` exits 3.
"""


class KeigoseqError(Exception):
    pass


class DataError(KeigoseqError, ValueError):
    """Malformed input data: corpus lines, vocab files, checkpoints."""


class RuleError(KeigoseqError, ValueError):
    """A sentence falls outside what the formality rules can handle."""


class ConversionError(RuleError):
    pass


class CheckpointError(DataError):
    pass


class NumericError(KeigoseqError, ArithmeticError):
    """Non-finite loss or gradient encountered during training."""
