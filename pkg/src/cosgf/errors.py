"""Exception hierarchy.

Ingestion problems derive from :class:`IngestionError`, estimation problems
from :class:`EstimationError`; the CLI maps the two families to distinct exit
codes.
"""


class CosError(Exception):
    """Base class for all package errors."""


class IngestionError(CosError):
    pass


class DanglingClusterRef(IngestionError):
    pass


class DuplicateClusterId(IngestionError):
    pass


class InconsistentSchema(IngestionError):
    pass


class EmptyCluster(IngestionError):
    pass


class InvalidValue(IngestionError):
    """A cell could not be parsed as a finite number (or a 0/1 treatment)."""


class EstimationError(CosError):
    pass


class OneArmEmpty(EstimationError):
    pass


class NoRows(EstimationError):
    pass


class MissingAggregates(EstimationError):
    pass


class MissingClusterRow(EstimationError):
    pass


class BadQuantileLevel(EstimationError, ValueError):
    pass


class StageOrderViolation(EstimationError):
    pass


class TooManyDegenerateReplicates(EstimationError):
    pass


class ZeroPooledSD(EstimationError, ZeroDivisionError):
    pass
