"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`HcamError`.
The CLI maps the three families below onto its exit codes:

* :class:`ConfigError` -> 1 (usage)
* :class:`DataContractError` -> 2 (data contract)
* :class:`NumericError` -> 3 (numeric failure)
"""


class HcamError(Exception):
    exit_code = 2


class ConfigError(HcamError, ValueError):
    exit_code = 1


class ShapeError(HcamError, ValueError):
    exit_code = 2


class NumericError(HcamError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericError):
    """Non-finite loss or gradient during training."""


class DataContractError(HcamError):
    exit_code = 2


class ContractError(DataContractError, ValueError):
    """An operation's precondition does not hold (e.g. unnormalized features)."""


# manifest
class ManifestError(DataContractError):
    pass


class ManifestFormatError(ManifestError):
    pass


class DuplicateOrderError(ManifestError):
    pass


class OrderingGapError(ManifestError):
    pass


class MissingEmbeddingError(ManifestError):
    pass


class LabelRangeError(ManifestError, ValueError):
    pass


class EmptySplitError(DataContractError):
    pass


# embedding files
class EmbeddingFileError(DataContractError):
    pass


class BadMagicError(EmbeddingFileError):
    pass


class UnsupportedVersionError(EmbeddingFileError):
    pass


class TruncatedPayloadError(EmbeddingFileError):
    pass


class NonFinitePayloadError(EmbeddingFileError):
    pass


# checkpoints and stores
class CheckpointError(DataContractError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    pass


class MissingStoreError(DataContractError):
    pass


class StoreKeyError(DataContractError, KeyError):
    pass


class FrozenStageViolation(DataContractError):
    pass


class OutputExistsError(DataContractError):
    pass
