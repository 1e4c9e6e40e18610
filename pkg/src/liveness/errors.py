"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: format/I/O problems exit 2, numeric
failures exit 3.
"""


class LivenessError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LivenessError, ValueError):
    pass


class ConfigError(LivenessError, ValueError):
    pass


class InputError(LivenessError, ValueError):
    pass


class LabelError(InputError):
    pass


class SplitError(InputError):
    pass


class UndefinedRateError(InputError):
    """A class needed as a rate denominator has no samples."""

    def __init__(self, empty_class):
        self.empty_class = empty_class
        super().__init__(f"no {empty_class} samples: rate is undefined")


class NumericError(LivenessError, ArithmeticError):
    pass


class DegenerateBatchError(NumericError):
    """Batch statistics requested over fewer than two elements."""


class FormatError(LivenessError):
    """Bad magic bytes, unknown version, or otherwise unparseable file."""


class CorruptionError(FormatError):
    """File parsed but its contents are inconsistent (CRC, sizes, shapes)."""


class TruncatedFileError(LivenessError, OSError):
    """File ended before the declared payload was read."""
