"""Exception taxonomy shared by all repsim modules.

Every contract violation maps to a distinct class so callers (and the CLI
exit-code logic) can tell input problems, format problems, and numerical
failures apart without string matching.
"""


class RepsimError(Exception):
    """Base class for all repsim errors."""


class InvalidInputError(RepsimError):
    """Input violates a precondition (non-finite values, bad range)."""


class ShapeError(RepsimError):
    """Array shapes are inconsistent with the operation's contract."""


class NumericalError(RepsimError):
    """A numerical routine failed to converge or produced non-finite values."""


class NotPSDError(NumericalError):
    """Matrix expected to be positive semi-definite has a genuinely negative eigenvalue."""


class DegenerateInputError(RepsimError):
    """Input is technically well-formed but too degenerate to process."""


class DegenerateBatchError(DegenerateInputError):
    """No sequence in the batch satisfies the objective's length requirement."""


class DegenerateMaskError(DegenerateInputError):
    """Mask policy selected no frames."""


class DegenerateVarianceError(DegenerateInputError):
    """A statistic is undefined because an input has zero variance."""


class DegenerateTaskError(DegenerateInputError):
    """Classification task has fewer than two classes in the training set."""


class InsufficientDataError(DegenerateInputError):
    """Too few samples for the requested statistic."""


class ProposalUnsatisfiableError(RepsimError):
    """Negative-sample proposal cannot be satisfied by the batch."""


class AlignmentError(RepsimError):
    """Representation matrices do not share pooling provenance or row count."""


class ContractError(RepsimError):
    """API misuse: stale tape reuse, frozen-state mutation, unseen class, ..."""


class MissingLabelError(RepsimError):
    """Operation requires labels the dataset does not carry."""


class ConfigError(RepsimError):
    """Run configuration is invalid (unknown model name, bad path, missing seed)."""


class FileFormatError(RepsimError):
    """Base class for binary/manifest file format violations."""


class MalformedFileError(FileFormatError):
    """File is truncated or structurally broken."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FileFormatError):
    """File carries an unsupported format version."""


class BadDimensionsError(FileFormatError):
    """Declared dimensions disagree with the payload length."""


class UnsupportedEncodingError(FileFormatError):
    """WAV encoding other than 16-bit mono PCM."""
