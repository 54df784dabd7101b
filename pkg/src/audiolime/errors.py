"""Exception hierarchy shared across the package.

Everything raised on a domain-level failure derives from AudioLimeError so
the CLI can map any of it to exit code 1. Classes that also subclass
ValueError behave like argument errors for library callers.
"""


class AudioLimeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AudioLimeError, ValueError):
    """A precondition or type invariant was violated."""


class WavFormatError(AudioLimeError, ValueError):
    """A WAV file could not be read or written; the message names the
    offending property (path, encoding, channel count, length)."""


class AmbiguousMaskError(AudioLimeError):
    """A clip could not be attributed to a unique binary component mask."""


class PredictorError(AudioLimeError):
    """An external predictor failed (process exit, malformed reply, timeout)."""


class SingularSystemError(AudioLimeError):
    """The ridge normal equations are singular (lambda = 0) or too
    ill-conditioned to meet the solver's residual guarantee."""
