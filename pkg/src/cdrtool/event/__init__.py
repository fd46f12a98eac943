"""
事件出席记录的时空筛选。
"""

from .window import (
    EventSpec,
    ThresholdResult,
    apply_activity_threshold,
    attendance_window,
    filter_event,
)

__all__ = [
    "EventSpec",
    "ThresholdResult",
    "attendance_window",
    "filter_event",
    "apply_activity_threshold",
]
