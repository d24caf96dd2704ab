"""Exception hierarchy.

Every domain failure raises a subclass of :class:`StratvarError`; the CLI
reports the class name and exits with status 1.
"""


class StratvarError(Exception):
    """Base class for all domain errors."""


class NonPartition(StratvarError):
    pass


class SizeMismatch(StratvarError):
    pass


class BadTreatedCount(StratvarError):
    pass


class NonFinite(StratvarError):
    pass


class EmptyCluster(StratvarError):
    pass


class LengthMismatch(StratvarError):
    pass


class SupportTooLarge(StratvarError):
    pass


class TooFewStrata(StratvarError):
    pass


class RankDeficient(StratvarError):
    pass


class LeverageOne(StratvarError):
    pass


class SingletonArm(StratvarError):
    pass


class BadAlpha(StratvarError):
    pass


class OutOfRange(StratvarError):
    pass


class OddCount(StratvarError):
    pass


class MultivariateUnsupported(StratvarError):
    pass


class NoCovariates(StratvarError):
    pass


class TooLarge(StratvarError):
    pass


class ParseError(StratvarError):
    pass


class ReplicationFailed(StratvarError):
    """An estimator raised inside a Monte Carlo replication."""

    def __init__(self, replication, cause):
        super().__init__(f"replication {replication}: {type(cause).__name__}: {cause}")
        self.replication = replication
        self.cause = cause
