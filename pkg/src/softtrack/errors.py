"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about bad
input can catch one thing.
"""


class SoftTrackError(ValueError):
    pass


class DimensionMismatch(SoftTrackError):
    pass


class CenterOutOfField(SoftTrackError):
    pass


class ZeroNormEmbedding(SoftTrackError):
    pass


class AlreadyAugmented(SoftTrackError):
    pass


class NonFiniteCost(SoftTrackError):
    pass


class InfeasibleMarginals(SoftTrackError):
    pass


class IterationMismatch(SoftTrackError):
    pass


class LabelOutOfRange(SoftTrackError):
    pass


class EmbeddingCountMismatch(SoftTrackError):
    pass


class NonMonotonicFrame(SoftTrackError):
    pass


class SeparationInfeasible(SoftTrackError):
    pass


class TooLarge(SoftTrackError):
    pass


class ParseError(SoftTrackError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<input>", line=None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class CountMismatch(SoftTrackError):
    pass
