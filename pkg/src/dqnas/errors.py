"""Exception hierarchy shared by all engine modules."""


class DqnasError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DqnasError):
    """A configuration value is missing, duplicated, or out of range."""


class UnknownSpec(DqnasError):
    """A layer spec does not belong to the action vocabulary."""


class IndexOutOfRange(DqnasError):
    """An action index lies outside [0, vocabulary size)."""


class NegativeDimension(DqnasError):
    """Shape propagation produced a non-positive spatial dimension."""


class KernelExceedsInput(DqnasError):
    """A valid-padding kernel is larger than its input on some axis."""


class LayerConstraintError(DqnasError):
    """A layer was applied to a shape it cannot accept (e.g. Dense on an
    unflattened tensor)."""


class InvalidArchitecture(DqnasError):
    """An operation that requires a valid architecture received an invalid one."""


class DimensionMismatch(DqnasError):
    """A tensor's width does not match the network's expected input width."""


class NonFiniteLoss(DqnasError):
    """A training step produced a non-finite loss; parameters were not touched."""


class EmptyMask(DqnasError):
    """An action mask with no allowed entries was passed where one is required."""


class EmptyBuffer(DqnasError):
    """A batch was requested from an empty replay buffer."""


class BlobArityMismatch(DqnasError):
    """The number of weight blobs does not match the architecture length."""


class WorkerCrashed(DqnasError):
    """The external evaluation worker exited before answering."""


class WorkerTimeout(DqnasError):
    """The external evaluation worker did not answer within the deadline."""


class ProtocolError(DqnasError):
    """The worker sent a malformed or invariant-violating message."""


class WorkerError(DqnasError):
    """The worker reported a build or training failure for one request."""


class EvaluatorUnavailable(DqnasError):
    """No evaluator could be started; the search cannot proceed."""


class CorruptCheckpoint(DqnasError):
    """A checkpoint failed its integrity check."""


class VersionMismatch(DqnasError):
    """A checkpoint was written by an incompatible engine version."""
