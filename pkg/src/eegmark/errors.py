"""Exception hierarchy shared by every eegmark module."""


class EEGMarkError(Exception):
    """Base class for all errors raised by eegmark."""


# identity
class InvalidSeed(EEGMarkError, ValueError):
    pass


class InvalidOwnerId(EEGMarkError, ValueError):
    pass


class SigningFailure(EEGMarkError):
    pass


# filtergen
class BlockTooLarge(EEGMarkError, ValueError):
    pass


class InvalidLabelSpace(EEGMarkError, ValueError):
    pass


class ShapeMismatch(EEGMarkError, ValueError):
    pass


class InvalidChannelMap(EEGMarkError, ValueError):
    pass


class InvalidPermutation(EEGMarkError, ValueError):
    pass


# nn
class ConfigError(EEGMarkError, ValueError):
    pass


class DivergenceError(EEGMarkError, ArithmeticError):
    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class EmptyDataset(EEGMarkError, ValueError):
    pass


class InvalidRatio(EEGMarkError, ValueError):
    pass


class SelectorError(EEGMarkError, ValueError):
    pass


class CheckpointError(EEGMarkError):
    pass


# data
class SpecError(EEGMarkError, ValueError):
    pass


class FormatError(EEGMarkError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MetadataError(EEGMarkError, ValueError):
    pass


class SplitError(EEGMarkError, ValueError):
    pass


class InsufficientData(EEGMarkError, ValueError):
    pass


# pipeline
class RecordIntegrityError(EEGMarkError, ValueError):
    pass


# attacks
class ModeError(EEGMarkError, ValueError):
    pass


class RatioOrderError(EEGMarkError, ValueError):
    pass


# cli
class RefusedOverwrite(EEGMarkError, FileExistsError):
    pass
