class GhostflareError(Exception):
    """Base class for every error raised by ghostflare.

    Attributes:
        message -- explanation of the error
    """

    def __init__(self, message="ghostflare error"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return f"{type(self).__name__} : {self.message}"


class ConfigError(GhostflareError, ValueError):
    """A config file or CLI argument failed validation."""


class RankDeficient(GhostflareError, ArithmeticError):
    """A linear system is underdetermined or numerically singular."""


class DegenerateProjection(GhostflareError, ArithmeticError):
    """A world point maps to the camera plane (w = 0)."""


class InvalidRatio(GhostflareError, ValueError):
    """Ghost ratio r was zero."""


class NonPositiveDistance(GhostflareError, ValueError):
    """A distance argument was not strictly positive."""

    def __init__(self, distance, message="Distance must be positive"):
        self.distance = distance
        super().__init__(f"{message} (got {distance!r})")


class OutOfTable(GhostflareError, ValueError):
    """Distance has no entry in the published resolution ladder."""


class DegeneratePairs(GhostflareError, ValueError):
    """No light source / ghost pair is away from the image centre."""


class NonPositiveAmbient(GhostflareError, ValueError):
    """Ambient illuminance must be strictly positive."""


class PlacementOutOfBounds(GhostflareError, ValueError):
    """Ghost rectangle does not fit the target image or pattern."""


class InsufficientVariation(GhostflareError, ValueError):
    """Calibration samples do not span enough distinct settings."""


class NonConvergence(GhostflareError, ArithmeticError):
    """An iterative fit hit its iteration limit."""


class AllZeroIlluminance(GhostflareError, ValueError):
    """Every flare-gain sample had zero illuminance."""


class DimMismatch(GhostflareError, ValueError):
    """Array dimensions are incompatible."""


class ParseError(GhostflareError, ValueError):
    """A file could not be parsed.

    Attributes:
        offset -- byte offset where parsing failed, when known
    """

    def __init__(self, message="Parse error", offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at byte {offset}"
        super().__init__(message)


class InvalidShape(GhostflareError, ValueError):
    """Biased-penalty shape parameters violate alpha > beta > 0."""


class EmptySamples(GhostflareError, ValueError):
    """A Monte-Carlo estimate was requested from zero samples."""


class NonFiniteObjective(GhostflareError, ArithmeticError):
    """The optimiser produced a NaN or infinite objective.

    Attributes:
        trace -- objective values recorded before the failure
    """

    def __init__(self, trace, message="Objective became non-finite"):
        self.trace = list(trace)
        super().__init__(f"{message} after {len(self.trace)} iterations")
