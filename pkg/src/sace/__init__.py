"""Survivor average causal effects identified through a substitutional variable."""

__version__ = "0.1.0"

from .data import Dataset, ObservationRecord, load_csv, validate  # noqa: E402
from .errors import (  # noqa: E402
    DataError,
    EstimationError,
    NotIdentifiableError,
    SaceError,
    UsageError,
)
from .pipeline import estimate, point_estimate  # noqa: E402

__all__ = [
    "Dataset",
    "ObservationRecord",
    "load_csv",
    "validate",
    "estimate",
    "point_estimate",
    "SaceError",
    "UsageError",
    "DataError",
    "EstimationError",
    "NotIdentifiableError",
]
