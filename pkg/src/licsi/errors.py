"""Exception hierarchy shared by all licsi modules.

The CLI maps these onto process exit codes, see ``licsi.cli``.
"""


class LicsiError(Exception):
    """Base class for every error raised by this package."""

    stage = None

    def with_stage(self, stage):
        self.stage = stage
        return self

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ConfigError(LicsiError, ValueError):
    """Invalid configuration or argument combination."""


class DimensionError(ConfigError):
    """Array shapes do not agree with the declared dimensions."""


class InsufficientDataError(ConfigError):
    """Not enough samples to build the requested structure."""


class FormatError(LicsiError):
    """Malformed or truncated binary data (dataset, codec or payload)."""

    def __init__(self, msg, offset=None):
        if offset is not None:
            msg = f"{msg} (at byte offset {offset})"
        super().__init__(msg)
        self.offset = offset


class NumericalError(LicsiError, ArithmeticError):
    """Base class for numerical failures."""


class SingularityError(NumericalError):
    """A frequency coincides with a pole, or two sample frequencies collide."""

    def __init__(self, msg, indices=()):
        super().__init__(msg)
        self.indices = tuple(indices)


class IllConditionedError(NumericalError):
    """A matrix that must be inverted is (numerically) singular."""


class DiagonalizationError(NumericalError):
    """The reduced state matrix is defective or nearly so."""


class RankError(NumericalError):
    """A matrix expected to have full row rank does not."""


class TrainingError(NumericalError):
    """Training diverged."""


class UntrainedError(LicsiError, RuntimeError):
    """Inference was requested on a codec that has not been trained."""
