"""Exception hierarchy shared across the toolkit."""


class BootparseError(Exception):
    """Base class for every error raised by this package."""


# -- MRL -------------------------------------------------------------------

class MrlError(BootparseError, ValueError):
    pass


class UnbalancedBrackets(MrlError):
    pass


class RootNotIntent(MrlError):
    pass


class BadLabel(MrlError):
    pass


class TextUnderIntent(MrlError):
    pass


class MixedContent(MrlError):
    """A slot holding both surface text and a nested intent."""


# -- data ------------------------------------------------------------------

class DataError(BootparseError):
    pass


class MalformedRow(DataError):
    pass


class SchemaVersionMismatch(DataError):
    pass


class SpanNotFound(DataError):
    pass


class OverlappingSpans(DataError):
    pass


class MissingSubstitution(DataError):
    pass


class EmptySubstitution(DataError):
    pass


class EmptyCorpus(DataError, ValueError):
    pass


class EmptySentence(DataError, ValueError):
    pass


class IdMismatch(DataError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


# -- translation -----------------------------------------------------------

class BackendError(BootparseError):
    pass


class BackendUnavailable(BackendError):
    """Network or server failure; retrying later may succeed."""


class CacheMiss(BackendError):
    pass


class QuotaExceeded(BackendError):
    pass


# -- parser ----------------------------------------------------------------

class ParserError(BootparseError):
    pass


class CopyTargetNotFound(ParserError):
    pass


class AllExamplesSkipped(ParserError):
    pass


class DivergedLoss(ParserError):
    pass


class CheckpointError(ParserError):
    pass


class MaxLengthExceeded(ParserError):
    pass
