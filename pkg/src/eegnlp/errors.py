"""Exception and warning types shared across the pipeline.

Grouping them in one place keeps the command-line layer's exit-code
mapping trivial: every anticipated failure inherits from PipelineError,
anything else is an internal fault.
"""


class PipelineError(Exception):
    """Base class for all anticipated pipeline failures."""


# ---------------------------------------------------------------- raw signal

class MissingChannel(PipelineError):
    """A required channel column is absent from a recording file."""


class NonMonotonicTime(PipelineError):
    """Timestamps in a recording do not strictly increase."""


class EmptyRecording(PipelineError):
    """A recording contains too few valid rows to be usable."""


class ZeroVarianceChannel(PipelineError):
    """A channel is constant, so it cannot be z-scored."""


class InvalidBand(PipelineError):
    """A filter band violates 0 < lo < hi < Nyquist."""


class SegmentOutOfRange(PipelineError):
    """A manifest segment falls outside the recording, or is empty."""


# ------------------------------------------------------------------ spectral

class SegmentTooShort(PipelineError):
    """Segment shorter than the minimum spectral analysis window."""


class BandOutOfRange(PipelineError):
    """A power band lies outside the estimated frequency range."""


# ------------------------------------------------------------------- parsing

class UnbalancedParens(PipelineError):
    """Bracketed tree text with unbalanced or trailing parentheses."""


class EmptyTree(PipelineError):
    """Bracketed tree text with no content."""


class BareToken(PipelineError):
    """Bracketed tree content that does not fit the (LABEL ...) form."""


class MalformedLine(PipelineError):
    """A data line does not have the expected shape."""


class HeadOutOfRange(PipelineError):
    """A dependency head points outside the sentence."""


class CyclicHeads(PipelineError):
    """The dependency head graph contains a cycle or lacks a root."""


class TokenCountMismatch(UserWarning):
    """Constituency and dependency views disagree on token count.

    This is a data-quality signal rather than a failure, so it is a
    warning category: features are still computed from each view.
    """


# ------------------------------------------------------------------- dataset

class DuplicateKey(PipelineError):
    """Two rows in one source share (participant, passage, sentence)."""


class NoRatings(PipelineError):
    """No confusion ratings available to derive labels from."""


class NoLabeledRows(PipelineError):
    """No rows carry both labels, so the contingency table is empty."""


# ------------------------------------------------------------------- balance

class MinorityTooSmall(PipelineError):
    """Too few minority samples to interpolate between."""


class MissingClassInLabels(PipelineError):
    """Semi-supervised spreading needs at least one seed per class."""


class NoConvergence(UserWarning):
    """Iterative procedure hit its iteration cap before the tolerance."""


# ------------------------------------------------------------------ learners

class SingleClassInput(PipelineError):
    """A classifier was given training labels with only one class."""


class ModelFormatError(PipelineError):
    """A serialized model file does not match the expected layout."""


# ------------------------------------------------------------ evaluation

class TooFewGroups(PipelineError):
    """Fewer participant groups than requested folds."""


class TooFewSamples(PipelineError):
    """Not enough samples per class for the requested fold count."""


class MissingLabels(PipelineError):
    """The evaluation task has no labeled rows to train or score on."""


class InvalidFeatureSet(PipelineError):
    """The requested feature set is not defined for the task."""


# ----------------------------------------------------------------- interface

class ConfigInvalid(PipelineError):
    """A config file or override contains unknown or ill-typed entries."""


class MissingArtifact(PipelineError):
    """A pipeline stage requires an artifact that has not been produced."""


class IoFailure(PipelineError):
    """Reading or writing a pipeline file failed at the OS level."""


class UnknownKernel(PipelineError):
    """The benchmark harness does not know the requested kernel."""
