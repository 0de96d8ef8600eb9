"""Exception hierarchy. Everything raised on bad input derives from ArgmineError
so the CLI can map domain failures to exit code 1."""


class ArgmineError(Exception):
    """Base class for all domain errors."""


class StructuralError(ArgmineError):
    """Corpus tree is malformed (e.g. a cycle in parent links)."""


class IngestionError(ArgmineError):
    """A record cannot be ingested (orphan post, bad schema, ...)."""


class CapacityError(ArgmineError):
    """A configured bound was exceeded (e.g. more authors than user tokens)."""


class SplitError(ArgmineError):
    """Split plan cannot be built (e.g. fewer than two submission groups)."""


class InputError(ArgmineError):
    """An operation received an empty or ill-formed input."""


class AnnotationError(ArgmineError):
    """Annotations are inconsistent (e.g. overlapping component spans)."""


class MappingError(ArgmineError):
    """A fine-grained relation type is unknown to the schema mapping."""


class LabelError(ArgmineError):
    """A gold label sequence violates the transition constraints."""


class NumericError(ArgmineError):
    """Non-finite values where finite ones are required."""


class ConfigError(ArgmineError):
    """Invalid or inconsistent configuration."""


class BatchingError(ArgmineError):
    """A batch cannot be formed (e.g. a single item exceeds the token budget)."""


class PromptError(ArgmineError):
    """A prompt instance cannot be built (e.g. empty component after truncation)."""
