"""
基站级聚合

每个基站: 样本总数、带指标样本数、平均价格与平均相对年龄, 以及到访设备的
年龄段/性别分布。求和部分是可结合的累加器, 可以分区并行后按分区顺序合并。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from cdrtool.core.config import AnalyticsConfig
from cdrtool.fusion.tac import SesSampleTable
from cdrtool.ingest.records import GENDER_CODES, DeviceTable, Gender
from cdrtool.utils.exceptions import ArgumentError, InvariantViolation

logger = logging.getLogger(__name__)

UNKNOWN = "unknown"
GENDER_LABELS = {
    GENDER_CODES[Gender.MALE]: "male",
    GENDER_CODES[Gender.FEMALE]: "female",
    GENDER_CODES[None]: UNKNOWN,
}
GENDER_ORDER = ["male", "female", UNKNOWN]


def age_bucket_labels(width: int = 10, max_age: int = 120) -> List[str]:
    """Decade-style labels ``0-9 ... 110-119`` plus ``unknown``."""
    if width <= 0 or max_age <= 0:
        raise ArgumentError("bucket width and max age must be positive")
    return [f"{lo}-{lo + width - 1}" for lo in range(0, max_age, width)] + [UNKNOWN]


def _age_bucket_codes(ages: np.ndarray, width: int, max_age: int) -> np.ndarray:
    """Bucket index per age; ages at or above max_age go to the last decade, negatives to unknown."""
    n_known = len(age_bucket_labels(width, max_age)) - 1
    codes = np.minimum(np.maximum(ages, 0) // width, n_known - 1)
    return np.where(ages < 0, n_known, codes)


@dataclass
class Demographics:
    """一组不同设备的年龄段与性别分布"""

    n_devices: int
    age_histogram: Dict[str, int]
    gender_counts: Dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_devices": self.n_devices,
            "age_histogram": dict(self.age_histogram),
            "gender_counts": dict(self.gender_counts),
        }


def _device_rows(devices: DeviceTable, device_ids: np.ndarray) -> np.ndarray:
    """Row positions of device ids in a non-empty table; -1 when absent."""
    order = np.argsort(devices.device_id, kind="stable")
    sorted_ids = devices.device_id[order]
    pos = np.minimum(np.searchsorted(sorted_ids, device_ids), len(sorted_ids) - 1)
    return np.where(sorted_ids[pos] == device_ids, order[pos], -1)


def _device_attributes(devices: Optional[DeviceTable], device_ids: np.ndarray):
    """(age, gender code) per device id; unknown where the device is absent."""
    unknown_gender = GENDER_CODES[None]
    if devices is None or len(devices) == 0:
        return np.full(len(device_ids), -1), np.full(len(device_ids), unknown_gender)
    rows = _device_rows(devices, device_ids)
    present = rows >= 0
    age = np.where(present, devices.age[np.maximum(rows, 0)].astype(np.int64), -1)
    gender = np.where(present, devices.gender[np.maximum(rows, 0)].astype(np.int64), unknown_gender)
    return age, gender


def demographic_summary(
    devices: Optional[DeviceTable],
    device_ids: Iterable[int],
    bucket_width: int = 10,
    max_age: int = 120,
) -> Demographics:
    """
    Age and gender distribution over the distinct devices in ``device_ids``.
    Missing demographics are counted under ``unknown``.
    """
    ids = np.unique(np.fromiter(device_ids, dtype=np.int64))
    labels = age_bucket_labels(bucket_width, max_age)
    age, gender = _device_attributes(devices, ids)
    age_counts = np.bincount(_age_bucket_codes(age, bucket_width, max_age), minlength=len(labels))
    gender_counts = {label: 0 for label in GENDER_ORDER}
    for code, count in zip(*np.unique(gender, return_counts=True)):
        gender_counts[GENDER_LABELS[int(code)]] += int(count)
    return Demographics(
        n_devices=len(ids),
        age_histogram=dict(zip(labels, age_counts.tolist())),
        gender_counts=gender_counts,
    )


@dataclass
class StationAggregate:
    """
    单个基站的聚合结果

    不变量: n_with_ses <= n_total; 当且仅当 n_with_ses == 0 时均值缺失。
    """

    station_id: int
    n_total: int
    n_with_ses: int
    mean_price_eur: Optional[float] = None
    mean_age_months: Optional[float] = None
    n_devices: int = 0
    age_histogram: Dict[str, int] = field(default_factory=dict)
    gender_counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.n_with_ses <= self.n_total:
            raise InvariantViolation(f"station {self.station_id}: n_with_ses {self.n_with_ses} > n_total {self.n_total}")
        has_means = self.mean_price_eur is not None and self.mean_age_months is not None
        if has_means != (self.n_with_ses > 0):
            raise InvariantViolation(f"station {self.station_id}: means must be present iff n_with_ses > 0")

    @property
    def has_ses(self) -> bool:
        return self.n_with_ses > 0


@dataclass
class StationAccumulator:
    """按基站索引的可结合累加器"""

    n_total: np.ndarray
    n_with_ses: np.ndarray
    sum_price: np.ndarray
    sum_age: np.ndarray

    @classmethod
    def empty(cls, size: int = 0) -> "StationAccumulator":
        return cls(
            n_total=np.zeros(size, dtype=np.int64),
            n_with_ses=np.zeros(size, dtype=np.int64),
            sum_price=np.zeros(size, dtype=np.float64),
            sum_age=np.zeros(size, dtype=np.float64),
        )

    @classmethod
    def from_samples(cls, samples: SesSampleTable, size: int) -> "StationAccumulator":
        station = samples.station_id
        matched = samples.has_ses
        return cls(
            n_total=np.bincount(station, minlength=size).astype(np.int64),
            n_with_ses=np.bincount(station[matched], minlength=size).astype(np.int64),
            sum_price=np.bincount(station[matched], weights=samples.price_eur[matched], minlength=size),
            sum_age=np.bincount(
                station[matched], weights=samples.age_months[matched].astype(np.float64), minlength=size
            ),
        )

    def merge(self, other: "StationAccumulator") -> "StationAccumulator":
        size = max(len(self.n_total), len(other.n_total))

        def grow(a: np.ndarray) -> np.ndarray:
            return np.pad(a, (0, size - len(a)))

        return StationAccumulator(
            n_total=grow(self.n_total) + grow(other.n_total),
            n_with_ses=grow(self.n_with_ses) + grow(other.n_with_ses),
            sum_price=grow(self.sum_price) + grow(other.sum_price),
            sum_age=grow(self.sum_age) + grow(other.sum_age),
        )


def accumulate(samples: SesSampleTable, threads: int = 1) -> StationAccumulator:
    """Partition samples into ``threads`` contiguous blocks and merge in block order."""
    size = int(samples.station_id.max()) + 1 if len(samples) else 0
    if threads <= 1 or len(samples) < 2 * threads:
        return StationAccumulator.from_samples(samples, size)
    bounds = np.linspace(0, len(samples), threads + 1).astype(np.int64)
    parts = [samples.take(slice(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        partials = list(pool.map(lambda p: StationAccumulator.from_samples(p, size), parts))
    return reduce(StationAccumulator.merge, partials, StationAccumulator.empty(size))


def aggregate_station(
    samples: SesSampleTable,
    devices: Optional[DeviceTable] = None,
    config: Optional[AnalyticsConfig] = None,
    stations: Optional[Iterable[int]] = None,
    threads: int = 1,
) -> List[StationAggregate]:
    """
    Per-station totals, SES means and demographics, sorted by station id.

    Args:
        samples: fused samples with anomalies already removed
        devices: device table for demographics; all "unknown" when None
        config: age bucket settings
        stations: stations to report even without samples
        threads: partitions for the sum reduction

    Returns:
        One StationAggregate per station that has samples or is listed in ``stations``
    """
    config = config or AnalyticsConfig()
    acc = accumulate(samples, threads)
    wanted = set(np.unique(samples.station_id).tolist()) | set(int(s) for s in (stations or ()))
    labels = age_bucket_labels(config.age_bucket_width, config.age_bucket_max)
    n_buckets = len(labels)

    # distinct (station, device) pairs for demographics
    if len(samples):
        pairs = np.unique(np.column_stack([samples.station_id, samples.device_id]), axis=0)
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    age, gender = _device_attributes(devices, pairs[:, 1])
    bucket = _age_bucket_codes(age, config.age_bucket_width, config.age_bucket_max)
    size = max(len(acc.n_total), max(wanted, default=-1) + 1)
    age_table = np.bincount(pairs[:, 0] * n_buckets + bucket, minlength=size * n_buckets).reshape(size, n_buckets)
    gender_table = np.zeros((size, len(GENDER_ORDER)), dtype=np.int64)
    gender_index = np.array([GENDER_ORDER.index(GENDER_LABELS[int(g)]) for g in gender], dtype=np.int64)
    np.add.at(gender_table, (pairs[:, 0], gender_index), 1)

    acc = acc.merge(StationAccumulator.empty(size))
    aggregates = []
    for station_id in sorted(wanted):
        n_total = int(acc.n_total[station_id])
        n_ses = int(acc.n_with_ses[station_id])
        aggregates.append(
            StationAggregate(
                station_id=station_id,
                n_total=n_total,
                n_with_ses=n_ses,
                mean_price_eur=float(acc.sum_price[station_id] / n_ses) if n_ses else None,
                mean_age_months=float(acc.sum_age[station_id] / n_ses) if n_ses else None,
                n_devices=int(age_table[station_id].sum()),
                age_histogram=dict(zip(labels, age_table[station_id].tolist())),
                gender_counts=dict(zip(GENDER_ORDER, gender_table[station_id].tolist())),
            )
        )
    logger.info(
        f"📊 Aggregated {len(samples):,} samples over {len(aggregates)} stations "
        f"({sum(a.has_ses for a in aggregates)} with SES data)"
    )
    return aggregates


AGGREGATE_COLUMNS = ["station_id", "n_total", "n_with_ses", "mean_price_eur", "mean_age_months", "n_devices"]


def aggregates_to_frame(aggregates: List[StationAggregate]) -> pd.DataFrame:
    rows = []
    for agg in aggregates:
        row = {
            "station_id": agg.station_id,
            "n_total": agg.n_total,
            "n_with_ses": agg.n_with_ses,
            "mean_price_eur": agg.mean_price_eur,
            "mean_age_months": agg.mean_age_months,
            "n_devices": agg.n_devices,
        }
        row.update({f"age_{label}": count for label, count in agg.age_histogram.items()})
        row.update({f"gender_{label}": count for label, count in agg.gender_counts.items()})
        rows.append(row)
    frame = pd.DataFrame(rows, columns=AGGREGATE_COLUMNS if not rows else None)
    return frame.astype({"mean_price_eur": "float64", "mean_age_months": "float64"})


def write_aggregates_csv(aggregates: List[StationAggregate], path: Union[str, Path]) -> Path:
    """aggregates.csv; missing means are empty cells."""
    path = Path(path)
    aggregates_to_frame(aggregates).to_csv(path, index=False, lineterminator="\n")
    return path


def read_aggregates_csv(path: Union[str, Path]) -> List[StationAggregate]:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in AGGREGATE_COLUMNS if c not in frame.columns]
    if missing:
        raise ArgumentError(f"{path}: missing aggregate columns {missing}")
    age_columns = [c for c in frame.columns if c.startswith("age_")]
    gender_columns = [c for c in frame.columns if c.startswith("gender_")]
    aggregates = []
    for values in frame.to_dict(orient="records"):
        price = values["mean_price_eur"]
        age = values["mean_age_months"]
        aggregates.append(
            StationAggregate(
                station_id=int(values["station_id"]),
                n_total=int(values["n_total"]),
                n_with_ses=int(values["n_with_ses"]),
                mean_price_eur=None if pd.isna(price) else float(price),
                mean_age_months=None if pd.isna(age) else float(age),
                n_devices=int(values["n_devices"]),
                age_histogram={c[len("age_"):]: int(values[c]) for c in age_columns},
                gender_counts={c[len("gender_"):]: int(values[c]) for c in gender_columns},
            )
        )
    return aggregates
