"""Exception hierarchy for the vge package."""


class VGEError(Exception):
    """Base class for all errors raised by vge."""


# npy / csv parsing

class NpyFormatError(VGEError, ValueError):
    pass


class BadMagic(NpyFormatError):
    pass


class UnsupportedVersion(NpyFormatError):
    pass


class UnsupportedDtype(NpyFormatError):
    pass


class FortranOrderUnsupported(NpyFormatError):
    pass


class TruncatedPayload(NpyFormatError):
    pass


class NonFiniteInput(VGEError, ValueError):
    pass


class LabelFormatError(VGEError, ValueError):
    pass


class MalformedRow(LabelFormatError):
    pass


class SegmentOutOfRange(LabelFormatError):
    pass


class UnknownSpacecraft(LabelFormatError):
    pass


# dataset

class DataError(VGEError):
    pass


class MissingFile(DataError, FileNotFoundError):
    pass


class ColumnMismatch(DataError, ValueError):
    pass


class UnlabeledChannel(DataError, KeyError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class SeriesTooShort(DataError, ValueError):
    pass


# numerics

class EmptyWindow(VGEError, ValueError):
    pass


class ShapeMismatch(VGEError, ValueError):
    pass


class EmptyBatch(VGEError, ValueError):
    pass


class InsufficientSamples(VGEError, ValueError):
    pass


class LengthMismatch(VGEError, ValueError):
    pass


class EmptySet(VGEError, ValueError):
    pass


class TrainingDiverged(VGEError, ArithmeticError):
    pass


class InsufficientPopulation(VGEError, RuntimeError):
    pass


class NoLabels(VGEError, ValueError):
    pass


class AllExcluded(VGEError, ValueError):
    pass


# pipeline

class ConfigError(VGEError, ValueError):
    pass


class StageError(VGEError):
    """A pipeline stage failed; ``cause`` holds the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
