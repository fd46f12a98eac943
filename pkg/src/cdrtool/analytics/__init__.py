"""
聚合、时间序列与相关分析。
"""

from .aggregate import (
    Demographics,
    StationAccumulator,
    StationAggregate,
    age_bucket_labels,
    aggregate_station,
    demographic_summary,
    read_aggregates_csv,
    write_aggregates_csv,
)
from .series import (
    POOLED,
    SeriesSet,
    TimeSeries,
    activity_series,
    daily_profiles,
    read_series_csv,
    write_series_csv,
)
from .stats import (
    AreaSummary,
    CorrelationPoint,
    CorrelationReport,
    area_summary,
    correlation_report,
    pearson,
)

__all__ = [
    "Demographics",
    "StationAccumulator",
    "StationAggregate",
    "age_bucket_labels",
    "aggregate_station",
    "demographic_summary",
    "read_aggregates_csv",
    "write_aggregates_csv",
    "POOLED",
    "SeriesSet",
    "TimeSeries",
    "activity_series",
    "daily_profiles",
    "read_series_csv",
    "write_series_csv",
    "AreaSummary",
    "CorrelationPoint",
    "CorrelationReport",
    "area_summary",
    "correlation_report",
    "pearson",
]
