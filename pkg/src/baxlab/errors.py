"""Exception hierarchy shared by all baxlab modules."""


class BaxlabError(Exception):
    """Base class for every error raised by this package."""


class DuplicateValues(BaxlabError, ValueError):
    pass


class IndexOutOfRange(BaxlabError, IndexError):
    pass


class PatternLargerThanHost(BaxlabError, ValueError):
    pass


class SizeTooLarge(BaxlabError, ValueError):
    pass


class InvalidPermutation(BaxlabError, ValueError):
    pass


class BadIncrement(BaxlabError, ValueError):
    pass


class LeftQuadrant(BaxlabError, ValueError):
    pass


class BadEndpoints(BaxlabError, ValueError):
    pass


class NotTotalOrder(BaxlabError, ValueError):
    pass


class NotInImage(BaxlabError, ValueError):
    pass


class MalformedTree(BaxlabError, ValueError):
    pass


class BadInterval(BaxlabError, ValueError):
    pass


class InvalidMap(BaxlabError, ValueError):
    """A bipolar orientation failed one of its structural invariants."""


class ResolutionMismatch(BaxlabError, ValueError):
    pass


class InvalidPermuton(BaxlabError, ValueError):
    pass


class BadParameter(BaxlabError, ValueError):
    pass


class OffGridStart(BaxlabError, ValueError):
    pass


class BadEpsilon(BaxlabError, ValueError):
    pass


class SamplerBudgetExceeded(BaxlabError, RuntimeError):
    """The rejection sampler ran out of its trial or time budget."""

    def __init__(self, message, trials=0, elapsed=0.0):
        super().__init__(message)
        self.trials = trials
        self.elapsed = elapsed
