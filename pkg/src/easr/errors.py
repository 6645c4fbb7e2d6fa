"""Exception hierarchy.

Every error carries a ``category`` (the class name); the CLI prints it as the
machine-parsable first token of its failure line.
"""


class EASRError(Exception):
    category = "EASRError"

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        cls.category = cls.__name__


# core
class InvalidSignal(EASRError):
    """Non-finite or malformed trial data."""


class NotSymmetric(EASRError):
    pass


class DegenerateCovariance(EASRError):
    pass


class DimensionMismatch(EASRError):
    pass


# preprocessing
class InvalidBand(EASRError):
    pass


class AlreadyProcessed(EASRError):
    """The preprocessing chain was applied to an already processed set."""


# alignment
class EmptyRun(EASRError):
    pass


# augmentation
class InvalidSegmentation(EASRError):
    pass


class EmptyClass(EASRError):
    pass


# model
class InvalidLabel(EASRError):
    pass


class NonFiniteGradient(EASRError):
    pass


class EmptySplit(EASRError):
    pass


# experiments
class StratificationFailure(EASRError):
    pass


class InsufficientSubjects(EASRError):
    pass


class PairingError(EASRError):
    pass


class ConfigError(EASRError):
    pass


# stats
class EmptyInput(EASRError):
    pass


class DomainError(EASRError):
    pass


# io
class BadMagic(EASRError):
    pass


class VersionUnsupported(EASRError):
    pass


class HashMismatch(EASRError):
    pass


class TruncatedPayload(EASRError):
    pass
