"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to, so module code
can raise without knowing about the CLI.
"""


class MathRecError(Exception):
    exit_code = 10


class ConfigError(MathRecError):
    exit_code = 2


class DataError(MathRecError):
    exit_code = 3


class RendererError(MathRecError):
    exit_code = 4


class CheckpointError(MathRecError):
    exit_code = 5


# latex
class UnbalancedBraces(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class InvalidTokenId(DataError):
    pass


# data
class ManifestSchemaError(DataError):
    pass


class MissingImage(DataError):
    pass


class DataExhausted(DataError):
    pass


class VocabularyMismatch(DataError):
    pass


class CompileFailure(RendererError):
    pass


class RendererUnavailable(RendererError):
    pass


# augment
class InvalidKernel(ConfigError):
    pass


class UnknownKind(ConfigError):
    pass


# model / train
class ShapeError(MathRecError):
    pass


class ShapeMismatch(ShapeError):
    pass


class SequenceTooLong(ShapeError):
    pass


class DisabledModule(MathRecError):
    pass


class NonFiniteLoss(MathRecError):
    pass


class StepOutOfRange(ConfigError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class LengthMismatch(DataError):
    pass
