"""
事件窗口

出席记录 = 选定基站集合 ∩ 演出时间 ± 边距 (半开区间), 再剔除窗口内活动过少的基站。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Tuple, Union

import numpy as np

from cdrtool.core.config import EventConfig
from cdrtool.core.store import CdrStore, query_window_table
from cdrtool.ingest.cleaning import parse_timestamp
from cdrtool.ingest.records import CdrTable
from cdrtool.utils.exceptions import ArgumentError, DataQualityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EventSpec:
    """事件的空间与时间定义"""

    stations: FrozenSet[int]
    t_start: int
    t_end: int
    margin_s: int = 1800
    min_activity: int = 500

    def __post_init__(self):
        object.__setattr__(self, "stations", frozenset(int(s) for s in self.stations))
        if not self.t_start < self.t_end:
            raise ArgumentError("event start must precede its end")
        if self.margin_s < 0:
            raise ArgumentError("margin_s must be >= 0")
        if self.min_activity < 0:
            raise ArgumentError("min_activity must be >= 0")

    @classmethod
    def from_config(cls, config: EventConfig, stations: Iterable[int], tz: str = "Europe/Budapest") -> "EventSpec":
        return cls(
            stations=frozenset(stations),
            t_start=parse_timestamp(config.show_start, tz),
            t_end=parse_timestamp(config.show_end, tz),
            margin_s=int(round(config.margin_min * 60)),
            min_activity=config.min_activity,
        )

    def with_stations(self, stations: Iterable[int]) -> "EventSpec":
        return EventSpec(frozenset(stations), self.t_start, self.t_end, self.margin_s, self.min_activity)


def attendance_window(spec: EventSpec) -> Tuple[int, int]:
    """Half-open [w0, w1): the show widened by the margin on both sides."""
    return spec.t_start - spec.margin_s, spec.t_end + spec.margin_s


def filter_event(source: Union[CdrStore, CdrTable], spec: EventSpec) -> CdrTable:
    """
    Records at the event stations inside the attendance window, ts-ordered.

    ``source`` is either a merged store (index-backed query) or an in-memory
    table with station ids.
    """
    if not spec.stations:
        raise ArgumentError("event spec has no stations")
    w0, w1 = attendance_window(spec)
    if isinstance(source, CdrStore):
        result = query_window_table(source, w0, w1, spec.stations, key="station_id")
    else:
        if source.station_id is None:
            raise ArgumentError("records have no station ids; merge cells first")
        wanted = np.fromiter(sorted(spec.stations), dtype=np.int64)
        mask = (source.ts >= w0) & (source.ts < w1) & np.isin(source.station_id, wanted)
        result = source.take(mask).sorted_by_time()

    if len(result) == 0:
        logger.warning(f"⚠️ No records at {len(spec.stations)} stations in window [{w0}, {w1})")
    else:
        logger.info(f"🎆 {len(result):,} event records at {len(spec.stations)} stations in window [{w0}, {w1})")
    return result


@dataclass
class ThresholdResult:
    """最小活动量过滤的结果"""

    kept_stations: List[int]
    removed_stations: Dict[int, int]  # station_id -> 窗口内记录数
    counts: Dict[int, int] = field(default_factory=dict)
    cdrs: CdrTable = field(default_factory=lambda: CdrTable.empty(with_stations=True))

    def to_dict(self) -> dict:
        return {
            "kept_stations": self.kept_stations,
            "removed_stations": {str(k): v for k, v in sorted(self.removed_stations.items())},
            "kept_records": len(self.cdrs),
        }


def apply_activity_threshold(event_cdrs: CdrTable, spec: EventSpec) -> ThresholdResult:
    """
    Drop stations with fewer than ``spec.min_activity`` window records, and
    their records.

    Raises:
        DataQualityError: every station was removed
    """
    if event_cdrs.station_id is None:
        raise ArgumentError("records have no station ids; merge cells first")
    stations = sorted(spec.stations)
    ids, n = np.unique(event_cdrs.station_id, return_counts=True)
    observed = dict(zip(ids.tolist(), n.tolist()))
    counts = {s: int(observed.get(s, 0)) for s in stations}

    removed = {s: c for s, c in counts.items() if c < spec.min_activity}
    kept = [s for s in stations if s not in removed]
    if stations and not kept:
        raise DataQualityError(
            f"all {len(stations)} event stations have fewer than {spec.min_activity} records; "
            "check the seed area against the event window"
        )
    for station_id, count in sorted(removed.items()):
        logger.info(f"🚫 Station {station_id} removed: {count} records < {spec.min_activity}")

    mask = np.isin(event_cdrs.station_id, np.asarray(kept, dtype=np.int64))
    return ThresholdResult(kept_stations=kept, removed_stations=removed, counts=counts, cdrs=event_cdrs.take(mask))
