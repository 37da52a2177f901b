"""Exception types shared across the toolkit.

Every error raised on a domain-level failure (bad corpus, bad distribution,
shape conflicts) derives from DomainShiftError so the CLI can map it to a
structured JSON error and exit code 1.
"""


class DomainShiftError(Exception):
    pass


# corpus ingestion
class EmptyCorpus(DomainShiftError):
    pass


class ClassMismatch(DomainShiftError):
    pass


class ParseError(DomainShiftError):
    pass


class InvariantViolation(DomainShiftError):
    pass


class DecodeError(DomainShiftError):
    pass


# histograms
class EmptyPool(DomainShiftError):
    pass


class DimensionMismatch(DomainShiftError):
    pass


class DegenerateRange(DomainShiftError):
    pass


# divergences
class LengthMismatch(DomainShiftError):
    pass


class NotADistribution(DomainShiftError):
    pass


# shift metrics
class NoUsableClass(DomainShiftError):
    pass


class EmptyDomain(DomainShiftError):
    pass


# trainer
class ShapeMismatch(DomainShiftError):
    pass


class LabelOutOfRange(DomainShiftError):
    pass


class NonFiniteLoss(DomainShiftError):
    pass
