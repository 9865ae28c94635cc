"""Exception taxonomy.

ValidationError subclasses mean bad inputs, configs, or API contracts
(including malformed or corrupted input files) and map to CLI exit code 1;
RuntimeFailure subclasses mean the computation itself broke (overflow,
training divergence) and map to exit code 2.
"""


class VisentError(Exception):
    pass


class ValidationError(VisentError):
    pass


class RuntimeFailure(VisentError):
    pass


class DimensionError(ValidationError):
    """Shape mismatch or out-of-range axis; message names the shapes involved."""


class ContractError(ValidationError):
    """API misuse: non-scalar loss, zero finite-difference step, and the like."""


class DomainError(ValidationError):
    """Input outside a function's domain, e.g. log of a non-positive value."""


class DegenerateSliceError(ValidationError):
    """Softmax slice with every entry masked out."""


class VocabularyError(ValidationError):
    """Token index outside the embedding table."""


class EmptyPremiseError(ValidationError):
    """Image branch invoked with zero regions."""


class EmptyHypothesisError(ValidationError):
    """Text branch invoked with zero tokens."""


class EmptySplitError(ValidationError):
    """Evaluation requested on a split with no examples."""


class ProvenanceError(ValidationError):
    """Caption identifier does not carry a recoverable image filename."""


class SplitSpecError(ValidationError):
    """Train/val/test image sets overlap or are empty."""


class ConfigError(ValidationError):
    pass


class PreflightError(ValidationError):
    """Training inputs are mutually inconsistent (e.g. missing feature files)."""


class FormatError(ValidationError):
    """A file does not conform to its declared format."""


class CorruptionError(FormatError):
    """A file matches the format but its payload is truncated or damaged."""


class NumericError(RuntimeFailure):
    """An operation on finite inputs produced NaN or Inf (overflow is an error)."""


class TrainAborted(RuntimeFailure):
    """Training stopped mid-run; a diagnostic dump is written beside the log."""
