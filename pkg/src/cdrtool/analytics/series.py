"""
活动时间序列

按半开时间桶统计记录数: 每个基站一条、汇总一条, 以及按本地日历日拆分的日内曲线。
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from cdrtool.ingest.cleaning import resolve_zone
from cdrtool.ingest.records import CdrTable
from cdrtool.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)

POOLED = "all"


@dataclass
class TimeSeries:
    """等宽时间桶计数; 第 i 个桶覆盖 [bin_start + i*w, bin_start + (i+1)*w)"""

    bin_start: int
    bin_width_s: int
    counts: np.ndarray
    label: str = POOLED

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_width_s <= 0:
            raise ArgumentError("bin_width_s must be positive")
        if (self.counts < 0).any():
            raise ArgumentError("counts must be non-negative")

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def bin_starts(self) -> np.ndarray:
        return self.bin_start + self.bin_width_s * np.arange(len(self.counts), dtype=np.int64)

    @property
    def end(self) -> int:
        return self.bin_start + self.bin_width_s * len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def peak_bin(self) -> Optional[int]:
        """Start of the first bin holding the maximum count."""
        if not len(self.counts):
            return None
        return int(self.bin_starts[int(np.argmax(self.counts))])


@dataclass
class SeriesSet:
    """汇总序列加每个基站的序列, 时间轴相同"""

    pooled: TimeSeries
    per_station: Dict[int, TimeSeries] = field(default_factory=dict)

    def all(self) -> List[TimeSeries]:
        return [self.pooled] + [self.per_station[s] for s in sorted(self.per_station)]


def _bin_index(ts: np.ndarray, start: int, width: int, n_bins: int):
    index = (ts - start) // width
    inside = (ts >= start) & (index < n_bins)
    return index, inside


def activity_series(
    cdrs: CdrTable,
    bin_width_s: int = 3600,
    start: Optional[int] = None,
    end: Optional[int] = None,
    by_station: bool = True,
) -> SeriesSet:
    """
    Count records per half-open bin, pooled and per station.

    Args:
        cdrs: records; station ids needed when by_station
        bin_width_s: bin width in seconds
        start: series origin; default is the first record's time floored to the bin width
        end: exclusive end; default covers the last record

    Returns:
        SeriesSet whose pooled counts sum to the records inside [start, end)
    """
    if bin_width_s <= 0:
        raise ArgumentError("bin_width_s must be positive")
    ts = cdrs.ts
    if start is None:
        start = int(ts.min()) // bin_width_s * bin_width_s if len(ts) else 0
    if end is None:
        end = int(ts.max()) + 1 if len(ts) else start
    if end < start:
        raise ArgumentError("series end precedes its start")
    n_bins = -(-(end - start) // bin_width_s)

    index, inside = _bin_index(ts, start, bin_width_s, n_bins)
    # a range end inside the last bin still excludes later records
    inside &= ts < end
    pooled = TimeSeries(start, bin_width_s, np.bincount(index[inside], minlength=n_bins), POOLED)

    per_station: Dict[int, TimeSeries] = {}
    if by_station and cdrs.station_id is not None and len(cdrs):
        stations = cdrs.station_id[inside]
        ids, position = np.unique(stations, return_inverse=True)
        table = np.bincount(position * n_bins + index[inside], minlength=len(ids) * n_bins).reshape(len(ids), n_bins)
        for row, station_id in enumerate(ids.tolist()):
            per_station[station_id] = TimeSeries(start, bin_width_s, table[row], f"station {station_id}")
    return SeriesSet(pooled, per_station)


def daily_profiles(cdrs: CdrTable, zone: str = "Europe/Budapest", bin_width_s: int = 3600) -> Dict[str, TimeSeries]:
    """
    One series per local calendar day, each starting at local midnight.
    DST days have 23 or 25 hours of bins.
    """
    if bin_width_s <= 0:
        raise ArgumentError("bin_width_s must be positive")
    if len(cdrs) == 0:
        return {}
    resolve_zone(zone)
    local = pd.to_datetime(cdrs.ts, unit="s", utc=True).tz_convert(zone)
    midnights = local.normalize()
    profiles: Dict[str, TimeSeries] = {}
    for midnight in midnights.unique().sort_values():
        day_start = int(midnight.timestamp())
        next_midnight = (midnight.tz_localize(None) + pd.Timedelta(days=1)).tz_localize(zone)
        day_end = int(next_midnight.timestamp())
        n_bins = -(-(day_end - day_start) // bin_width_s)
        day_ts = cdrs.ts[(cdrs.ts >= day_start) & (cdrs.ts < day_end)]
        counts = np.bincount((day_ts - day_start) // bin_width_s, minlength=n_bins)
        label = midnight.strftime("%Y-%m-%d")
        profiles[label] = TimeSeries(day_start, bin_width_s, counts, label)
    logger.info(f"📅 Built {len(profiles)} daily activity profiles")
    return profiles


def write_series_csv(series: List[TimeSeries], path: Union[str, Path]) -> Path:
    """Long format: label,bin_start,bin_end,count."""
    frames = [
        pd.DataFrame(
            {
                "label": s.label,
                "bin_start": s.bin_starts,
                "bin_end": s.bin_starts + s.bin_width_s,
                "count": s.counts,
            }
        )
        for s in series
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["label", "bin_start", "bin_end", "count"]
    )
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_series_csv(path: Union[str, Path]) -> List[TimeSeries]:
    frame = pd.read_csv(path, dtype={"label": str})
    series = []
    for label, group in frame.groupby("label", sort=False):
        starts = group["bin_start"].to_numpy(dtype=np.int64)
        width = int(group["bin_end"].iloc[0] - group["bin_start"].iloc[0])
        series.append(TimeSeries(int(starts[0]), width, group["count"].to_numpy(), str(label)))
    return series
