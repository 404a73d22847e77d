class RtRisegError(Exception):
    pass


class NonPositiveDt(RtRisegError, ValueError):
    pass


class CollinearTriplet(RtRisegError, ValueError):
    pass


class InvalidDepth(RtRisegError, ValueError):
    pass


class DimensionMismatch(RtRisegError, ValueError):
    pass


class NoPlaneFound(RtRisegError):
    pass


class EmptyMask(RtRisegError, ValueError):
    pass


class ContactMiss(RtRisegError):
    pass


class SceneParseError(RtRisegError, ValueError):
    pass


class EpisodeError(RtRisegError):
    pass


class NonConvergenceWarning(RuntimeWarning):
    """Markov clustering hit max_iters before the flow matrix settled."""
