"""
手机属性融合: TAC 连接、价格与相对年龄指标。
"""

from .tac import (
    CoverageReport,
    PhoneProperty,
    PhonePropertyTable,
    SesSample,
    SesSampleTable,
    demote_anomalies,
    flag_anomalies,
    fuse,
    load_tacdb,
    months_between,
    per_device_samples,
)

__all__ = [
    "PhoneProperty",
    "PhonePropertyTable",
    "SesSample",
    "SesSampleTable",
    "CoverageReport",
    "load_tacdb",
    "months_between",
    "fuse",
    "flag_anomalies",
    "demote_anomalies",
    "per_device_samples",
]
