"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class DimensionError(ValueError):
    """Array extents do not satisfy an operation's contract."""


class ContractError(ValueError):
    """An operation was called outside its stated preconditions."""


class DegenerateInputError(ValueError):
    """Input is empty, silent, or otherwise carries no usable signal."""


class GeometryError(ValueError):
    """A source or microphone lies outside the simulated room."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(ValueError):
    """An on-disk artifact (manifest, checkpoint, dataset) is unusable."""


class WavFormatError(DataError):
    """A WAV file could not be parsed; message includes the byte offset."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values and was aborted."""
