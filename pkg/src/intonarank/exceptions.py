"""Exception types raised across the package."""


class IntonaRankError(Exception):
    """Base class for package errors."""


class WavFormatError(IntonaRankError, ValueError):
    """WAV file is not RIFF / PCM16 / mono, or its header is truncated."""


class ClipTooShortError(IntonaRankError, ValueError):
    """Clip holds fewer samples than one 25 ms analysis frame."""


class DegenerateClusterError(IntonaRankError, ValueError):
    """K-means could not split the data into two distinct clusters."""


class EmptyClassError(IntonaRankError, ValueError):
    """One of the question / statement classes has no members."""


class NonFiniteObjectiveError(IntonaRankError, FloatingPointError):
    """Ranker objective became NaN or infinite during optimisation."""


class ModelFormatError(IntonaRankError, ValueError):
    """Persisted model document has an unknown schema or wrong shape."""
