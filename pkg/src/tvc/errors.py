"""Exception hierarchy shared across the codec; the CLI maps these to exit codes."""


class TvcError(Exception):
    """Base for all codec errors."""


class FormatError(TvcError):
    """Malformed file, header, or bitstream (CLI exit code 2)."""


class ModelMismatchError(TvcError):
    """Bitstream was produced with different weights or config (exit code 3)."""


class NumericError(TvcError):
    """Non-finite values or a diverging optimization (exit code 4)."""
