"""Exception types raised across the pipeline."""


class SliceMineError(Exception):
    """Base class for all slicemine errors."""


class MalformedGherkin(SliceMineError):
    """A .feature file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(SliceMineError):
    """A step-record row is missing or has an invalid mandatory field."""

    def __init__(self, row: int, field: str):
        super().__init__(f"row {row}: missing or invalid field {field!r}")
        self.row = row
        self.field = field


class MissingClusterId(SliceMineError):
    """Passthrough clustering requires every record to carry a cluster_id."""


class EmbeddingProviderUnavailable(SliceMineError):
    """The configured embedding provider could not be reached or misbehaved."""


class InsufficientPopulation(SliceMineError):
    """The labelling-pool request exceeds the available pattern population."""


class DegenerateMarginals(SliceMineError):
    """Chance agreement is 1; the kappa statistic is undefined."""


class DegenerateLabels(SliceMineError):
    """Training labels contain a single class."""


class NotScopeEligible(SliceMineError):
    """Pattern has no RQ1/RQ2/RQ3 scope signal and cannot be featurized."""


class FoldTooSmall(SliceMineError):
    """A cross-validation fold lacks one of the classes."""


class JudgeUnavailable(SliceMineError):
    """The judge endpoint kept failing after all retries."""


class AuthError(SliceMineError):
    """The judge endpoint rejected the supplied credentials."""


class MissingInput(SliceMineError):
    """A rollup view was requested without the inputs it depends on."""
