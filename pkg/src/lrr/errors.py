"""Exception types shared across the package."""


class LrrError(Exception):
    """Base class for all package errors."""


class ShapeError(LrrError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(LrrError):
    """Non-finite values or numerically invalid inputs."""


class DomainError(LrrError):
    """A coordinate or box lies outside its valid domain."""


class EmptyBankError(LrrError):
    """An embedding bank with no entries was used for selection."""


class FormatError(LrrError):
    """A binary file failed magic/CRC/shape validation."""


class ConfigError(LrrError):
    """Invalid configuration key or value."""


class TrainingError(LrrError):
    """Training diverged; carries the last good checkpoint if available."""

    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


class MetricError(LrrError):
    """A metric was requested on empty or mismatched inputs."""
