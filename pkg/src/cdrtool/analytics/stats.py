"""
统计: Pearson 相关系数、价格-年龄相关报告与分区汇总
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from cdrtool.analytics.aggregate import StationAggregate
from cdrtool.utils.exceptions import ArgumentError, DataQualityError, UndefinedCorrelationError

logger = logging.getLogger(__name__)

UNLABELED = "unlabeled"


def pearson(points: Sequence[Tuple[float, float]]) -> float:
    """
    Sample Pearson correlation of (x, y) pairs, computed in two passes
    (center, then sum products). The n vs n-1 normalization cancels.

    Raises:
        ArgumentError: fewer than two points
        UndefinedCorrelationError: either axis has zero variance
    """
    data = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(data) < 2:
        raise ArgumentError(f"pearson needs at least 2 points, got {len(data)}")
    x, y = data[:, 0], data[:, 1]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("zero variance on one axis; correlation undefined")
    dx = x - x.mean()
    dy = y - y.mean()
    denominator = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if not denominator > 0:
        # spread below float resolution
        raise UndefinedCorrelationError("variance underflows; correlation undefined")
    r = float(np.dot(dx, dy) / denominator)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CorrelationPoint:
    """散点图上的一个基站"""

    station_id: int
    mean_price_eur: float
    mean_age_months: float
    area: Optional[str] = None


@dataclass
class AreaSummary:
    """一个城区的加权平均指标"""

    area: str
    n_stations: int
    n_samples: int
    mean_price_eur: Optional[float]
    mean_age_months: Optional[float]

    def to_dict(self) -> dict:
        return {
            "area": self.area,
            "n_stations": self.n_stations,
            "n_samples": self.n_samples,
            "mean_price_eur": self.mean_price_eur,
            "mean_age_months": self.mean_age_months,
        }


@dataclass
class CorrelationReport:
    """价格-年龄相关报告"""

    r: float
    n: int
    points: List[CorrelationPoint]
    excluded_stations: List[int] = field(default_factory=list)
    areas: Dict[str, AreaSummary] = field(default_factory=dict)
    demographics: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ArgumentError("a correlation report needs at least 2 stations")
        if not -1.0 <= self.r <= 1.0:
            raise ArgumentError(f"r={self.r} outside [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "n": self.n,
            "excluded_stations": self.excluded_stations,
            "n_excluded": len(self.excluded_stations),
            "points": [
                {
                    "station_id": p.station_id,
                    "mean_price_eur": p.mean_price_eur,
                    "mean_age_months": p.mean_age_months,
                    "area": p.area,
                }
                for p in self.points
            ],
            "areas": {name: summary.to_dict() for name, summary in sorted(self.areas.items())},
            "demographics": self.demographics,
        }

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read_json(cls, path: Union[str, Path]) -> "CorrelationReport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            r=data["r"],
            n=data["n"],
            points=[
                CorrelationPoint(p["station_id"], p["mean_price_eur"], p["mean_age_months"], p.get("area"))
                for p in data["points"]
            ],
            excluded_stations=list(data.get("excluded_stations", [])),
            areas={
                name: AreaSummary(**summary) for name, summary in data.get("areas", {}).items()
            },
            demographics=data.get("demographics", {}),
        )


def area_summary(aggregates: Iterable[StationAggregate], area_labels: Mapping[int, str]) -> Dict[str, AreaSummary]:
    """
    Sample-weighted mean price and age per area label; stations without a
    label fall under ``unlabeled``.
    """
    groups: Dict[str, List[StationAggregate]] = {}
    for agg in aggregates:
        groups.setdefault(area_labels.get(agg.station_id) or UNLABELED, []).append(agg)

    summaries = {}
    for area, members in sorted(groups.items()):
        with_ses = [a for a in members if a.has_ses]
        weight = np.array([a.n_with_ses for a in with_ses], dtype=np.float64)
        if weight.sum() > 0:
            price = float(np.dot(weight, [a.mean_price_eur for a in with_ses]) / weight.sum())
            age = float(np.dot(weight, [a.mean_age_months for a in with_ses]) / weight.sum())
        else:
            price = age = None
        summaries[area] = AreaSummary(
            area=area,
            n_stations=len(members),
            n_samples=int(sum(a.n_total for a in members)),
            mean_price_eur=price,
            mean_age_months=age,
        )
    return summaries


def pooled_demographics(aggregates: Iterable[StationAggregate]) -> Dict[str, Dict[str, int]]:
    """Station histograms summed; a device seen at two stations counts twice."""
    age: Dict[str, int] = {}
    gender: Dict[str, int] = {}
    for agg in aggregates:
        for label, count in agg.age_histogram.items():
            age[label] = age.get(label, 0) + count
        for label, count in agg.gender_counts.items():
            gender[label] = gender.get(label, 0) + count
    return {"age_histogram": age, "gender_counts": gender}


def correlation_report(
    aggregates: Sequence[StationAggregate],
    area_labels: Optional[Mapping[int, str]] = None,
) -> CorrelationReport:
    """
    Pearson r between station mean price and mean phone age.

    Stations without SES data are excluded and listed.

    Raises:
        DataQualityError: fewer than two usable stations
        UndefinedCorrelationError: all usable stations share a mean on one axis
    """
    area_labels = area_labels or {}
    usable = [a for a in aggregates if a.has_ses]
    excluded = sorted(a.station_id for a in aggregates if not a.has_ses)
    if len(usable) < 2:
        raise DataQualityError(f"only {len(usable)} stations carry SES data; need at least 2")

    points = [
        CorrelationPoint(
            station_id=a.station_id,
            mean_price_eur=a.mean_price_eur,
            mean_age_months=a.mean_age_months,
            area=area_labels.get(a.station_id) or None,
        )
        for a in sorted(usable, key=lambda a: a.station_id)
    ]
    r = pearson([(p.mean_price_eur, p.mean_age_months) for p in points])
    if excluded:
        logger.warning(f"⚠️ {len(excluded)} stations without SES data excluded from the correlation")
    logger.info(f"📈 Price-age correlation over {len(points)} stations: r = {r:.4f}")
    return CorrelationReport(
        r=r,
        n=len(points),
        points=points,
        excluded_stations=excluded,
        areas=area_summary(aggregates, area_labels),
        demographics=pooled_demographics(aggregates),
    )
