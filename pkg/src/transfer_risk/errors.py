"""Exception types raised across the toolkit.

Every error derives from :class:`TransferRiskError` (itself a ``ValueError``)
so callers can catch the whole family in one place.
"""


class TransferRiskError(ValueError):
    pass


class NotSPD(TransferRiskError):
    pass


class DimensionMismatch(TransferRiskError):
    pass


class NonPositiveVariance(TransferRiskError):
    pass


class EmptySample(TransferRiskError):
    pass


class InvalidProbabilityVector(TransferRiskError):
    pass


class NegativeRisk(TransferRiskError):
    pass


class ZeroPretrainedSignal(TransferRiskError):
    pass


class DegenerateOutputCovariance(NotSPD):
    pass


class StructureMismatch(TransferRiskError):
    pass


class DegeneratePath(TransferRiskError):
    pass


class SeriesMismatch(TransferRiskError):
    pass


class InsufficientHistory(TransferRiskError):
    pass


class EmptyDataset(TransferRiskError):
    pass


class SingularSystem(TransferRiskError):
    pass


class ConstantActuals(TransferRiskError):
    pass


class ConstantSeries(TransferRiskError):
    pass


class InsufficientData(TransferRiskError):
    pass


class ZeroVariancePortfolio(TransferRiskError):
    pass


class NonPositiveSourceSharpe(TransferRiskError):
    pass


class DimensionTooLarge(TransferRiskError):
    pass


class ParseError(TransferRiskError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTimestamps(ParseError):
    pass


class NonPositivePrice(ParseError):
    pass


class FrequencyTooFine(TransferRiskError):
    pass


class EmptyResult(TransferRiskError):
    pass


class NoOverlap(TransferRiskError):
    pass


class EmptySplit(TransferRiskError):
    pass


class DataMissing(TransferRiskError):
    pass


class TooFewRows(TransferRiskError):
    pass


class ConfigError(TransferRiskError):
    pass
