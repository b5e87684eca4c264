"""Workload characterization and reduction toolkit.

Derives micro-architectural metric vectors from performance-counter
profiles, reduces large workload sets to representatives via
standardization, PCA, and k-means, classifies system and data behavior
with explicit rules, and estimates cache footprints with a trace-driven
LRU simulator.
"""

__version__ = "0.1.0"

from .errors import DataError, ParseError, WcrError
from .model import (
    BehaviorLabels,
    Category,
    DataSizeClass,
    DataVolumes,
    MetricDescriptor,
    MetricGroup,
    MetricSchema,
    MetricUnit,
    MetricVector,
    RawProfile,
    SystemBehavior,
    SystemBehaviorMetrics,
    SystemTelemetry,
    TelemetrySample,
    default_schema,
    validate_profile,
)

__all__ = [
    "BehaviorLabels",
    "Category",
    "DataError",
    "DataSizeClass",
    "DataVolumes",
    "MetricDescriptor",
    "MetricGroup",
    "MetricSchema",
    "MetricUnit",
    "MetricVector",
    "ParseError",
    "RawProfile",
    "SystemBehavior",
    "SystemBehaviorMetrics",
    "SystemTelemetry",
    "TelemetrySample",
    "WcrError",
    "default_schema",
    "validate_profile",
    "__version__",
]
