"""Exception hierarchy shared across the pipeline."""


class AffectVLMError(Exception):
    """Base class for all pipeline errors."""


class InvalidInputError(AffectVLMError, ValueError):
    """Caller passed data violating an operation's precondition."""


class ProtocolError(AffectVLMError):
    """A pipeline-level contract was violated (fold leakage, batch composition, ...)."""


class ShapeError(InvalidInputError):
    """Dimension mismatch; carries expected/actual for diagnostics."""

    def __init__(self, expected, actual, what="input"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected shape {expected}, got {actual}")


class ParseError(AffectVLMError):
    """Malformed on-disk data; names the byte offset where parsing failed."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class VersionError(AffectVLMError):
    """On-disk format version is not supported by this build."""

    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"format version {found} not supported (supported: {supported})")


class UsageError(AffectVLMError):
    """API misuse, e.g. backward() without a cached forward pass."""


class DivergenceError(AffectVLMError):
    """Training produced a non-finite loss; carries the offending step."""

    def __init__(self, step, value):
        self.step = step
        super().__init__(f"non-finite loss ({value}) at step {step}")


class WorkerConnectionError(AffectVLMError):
    """A distributed worker dropped; carries the rank that failed."""

    def __init__(self, rank, reason=""):
        self.rank = rank
        suffix = f": {reason}" if reason else ""
        super().__init__(f"worker rank {rank} lost connectivity{suffix}")
