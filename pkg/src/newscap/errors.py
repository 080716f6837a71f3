"""Exception taxonomy shared across the package."""


class NewscapError(Exception):
    """Base class for every error this package raises deliberately."""


class FormatError(NewscapError):
    """A file or stream does not conform to its declared format."""


class DuplicateIdError(NewscapError):
    """An identifier that must be unique appeared twice."""


class DegenerateVectorError(NewscapError):
    """A zero or non-finite vector where a direction is required."""


class NotFoundError(NewscapError):
    """Lookup of an unknown identifier."""


class IoError(NewscapError):
    """An underlying I/O operation failed while writing an artifact."""


class DimensionError(NewscapError):
    """Embedding dimensions that must agree do not."""


class EmptyPatchError(NewscapError):
    """A patch matrix with zero rows where at least one is required."""


class MissingPatchesError(NewscapError):
    """A record needed for patch-level re-ranking carries no patches."""


class ConfigError(NewscapError):
    """A configuration value outside its legal range."""


class MissingTruthError(NewscapError):
    """A ranked query has no ground-truth entry."""


class NoCandidatesError(NewscapError):
    """A match was requested against an empty candidate list."""


class IncompleteBundleError(NewscapError):
    """A context bundle lacks a field the prompt template requires."""
