"""Exception types shared across the registration toolkit."""


class MvregError(Exception):
    """Base class for all toolkit-specific errors."""


class AngleNearPi(MvregError):
    """Rotation angle too close to pi; the matrix logarithm is not unique."""


class NotSe3(MvregError):
    """Matrix lacks se(3) structure (skew-symmetric block / zero bottom row)."""


class ParseError(MvregError):
    """Malformed point-cloud file."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class EmptyCloud(MvregError):
    """Point-cloud file contained no points."""


class TooFewPoints(MvregError):
    """Operation requires more points than the cloud provides."""


class NoFeasibleOverlap(MvregError):
    """No overlap fraction satisfies the lower search bound."""


class DegenerateConfiguration(MvregError):
    """Correspondence set does not determine a unique rigid motion."""


class DisconnectedGraph(MvregError):
    """Some scan is unreachable from the reference scan."""


class RankDeficient(MvregError):
    """Design matrix lost full column rank; the solve is underdetermined."""


class NotConverged(MvregError):
    """Iteration limit reached before meeting the convergence threshold."""


class InvalidOverlap(MvregError):
    """Requested overlap fraction outside the valid range."""
