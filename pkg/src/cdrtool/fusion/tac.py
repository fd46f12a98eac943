"""
TAC 融合

把 CDR 与以 TAC 为键的手机属性表连接, 派生两个社会经济地位指标:
发布价格(EUR)与相对事件月份的手机年龄(月)。
未匹配的 TAC 保留为无指标样本, 活动计数仍然包含它们。
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np

from cdrtool.ingest.readers import RowErrorReport, _iter_rows
from cdrtool.ingest.records import CdrTable
from cdrtool.utils.exceptions import ArgumentError, MalformedRowError

logger = logging.getLogger(__name__)

TACDB_HEADER = "tac,brand,model,release_year,release_month,price_eur"
UINT32_MAX = 2**32 - 1

YearMonth = Tuple[int, int]


@dataclass(frozen=True)
class PhoneProperty:
    """手机型号属性"""

    tac: int
    brand: str
    model: str
    release: YearMonth
    price_eur: float

    def __post_init__(self):
        if not 0 <= self.tac <= UINT32_MAX:
            raise MalformedRowError(f"tac {self.tac} is not a 32-bit unsigned value")
        if not 1 <= self.release[1] <= 12:
            raise MalformedRowError(f"release month {self.release[1]} outside 1..12")
        if not self.price_eur >= 0:
            raise MalformedRowError(f"negative price {self.price_eur}")


@dataclass
class PhonePropertyTable:
    """按 TAC 升序排列的列式属性表"""

    tac: np.ndarray
    release_year: np.ndarray
    release_month: np.ndarray
    price_eur: np.ndarray
    brand: List[str] = field(default_factory=list)
    model: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.tac = np.asarray(self.tac, dtype=np.uint32)
        self.release_year = np.asarray(self.release_year, dtype=np.int64)
        self.release_month = np.asarray(self.release_month, dtype=np.int64)
        self.price_eur = np.asarray(self.price_eur, dtype=np.float64)
        if not self.brand:
            self.brand = [""] * len(self.tac)
        if not self.model:
            self.model = [""] * len(self.tac)
        if len(self.tac) and np.any(np.diff(self.tac.astype(np.int64)) <= 0):
            order = np.argsort(self.tac, kind="stable")
            self.tac = self.tac[order]
            if np.any(np.diff(self.tac.astype(np.int64)) == 0):
                raise ArgumentError("duplicate TAC in property table")
            self.release_year = self.release_year[order]
            self.release_month = self.release_month[order]
            self.price_eur = self.price_eur[order]
            self.brand = [self.brand[i] for i in order]
            self.model = [self.model[i] for i in order]

    @classmethod
    def from_properties(cls, properties: Iterable[PhoneProperty]) -> "PhonePropertyTable":
        properties = list(properties)
        return cls(
            tac=[p.tac for p in properties],
            release_year=[p.release[0] for p in properties],
            release_month=[p.release[1] for p in properties],
            price_eur=[p.price_eur for p in properties],
            brand=[p.brand for p in properties],
            model=[p.model for p in properties],
        )

    def __len__(self) -> int:
        return len(self.tac)

    def properties(self) -> Iterator[PhoneProperty]:
        for i in range(len(self)):
            yield PhoneProperty(
                tac=int(self.tac[i]),
                brand=self.brand[i],
                model=self.model[i],
                release=(int(self.release_year[i]), int(self.release_month[i])),
                price_eur=float(self.price_eur[i]),
            )

    def lookup(self, tacs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(matched mask, row index) for each TAC; index is meaningless where unmatched."""
        tacs = np.asarray(tacs, dtype=np.uint32)
        if len(self.tac) == 0:
            return np.zeros(len(tacs), dtype=bool), np.zeros(len(tacs), dtype=np.int64)
        index = np.searchsorted(self.tac, tacs)
        index = np.minimum(index, len(self.tac) - 1)
        return self.tac[index] == tacs, index


def load_tacdb(path: Union[str, Path], max_error_samples: int = 20) -> Tuple[PhonePropertyTable, RowErrorReport]:
    """
    Parse tacdb.csv. Rows with invalid TACs, release dates or prices are
    reported and left out, so those TACs fuse as unmatched.
    """
    report = RowErrorReport(source=str(path), max_samples=max_error_samples)
    properties: List[PhoneProperty] = []
    seen = set()
    for line_no, line in _iter_rows(path, TACDB_HEADER):
        report.rows_in += 1
        try:
            fields = line.split(",")
            if len(fields) != 6:
                raise MalformedRowError("expected 6 fields")
            tac_text = fields[0].strip()
            if len(tac_text) != 8 or not tac_text.isdigit():
                raise MalformedRowError("tac must be 8 digits")
            tac = int(tac_text)
            if tac in seen:
                raise MalformedRowError("duplicate tac")
            try:
                release = (int(fields[3]), int(fields[4]))
                price = float(fields[5])
            except ValueError:
                raise MalformedRowError("invalid release date or price")
            prop = PhoneProperty(tac, fields[1].strip(), fields[2].strip(), release, price)
        except MalformedRowError as e:
            report.add(line_no, e.reason)
            continue
        seen.add(tac)
        properties.append(prop)
        report.records_out += 1
    report.log()
    logger.info(f"📱 Loaded {len(properties):,} phone properties from {path}")
    return PhonePropertyTable.from_properties(properties), report


def months_between(release: YearMonth, reference: YearMonth) -> int:
    """
    Whole months from ``release`` to ``reference``; negative when the
    release is after the reference month.
    """
    for year, month in (release, reference):
        if not 1 <= month <= 12:
            raise ArgumentError(f"invalid month {month} in {year}-{month}")
    return (reference[0] - release[0]) * 12 + (reference[1] - release[1])


@dataclass(frozen=True)
class SesSample:
    """一条带社会经济指标的通信记录"""

    device_id: int
    station_id: int
    ts: int
    price_eur: Optional[float] = None
    age_months: Optional[int] = None


@dataclass
class SesSampleTable:
    """
    列式样本表

    has_ses 为 False 时 price_eur 为 NaN 且 age_months 无意义。
    """

    device_id: np.ndarray
    station_id: np.ndarray
    ts: np.ndarray
    price_eur: np.ndarray
    age_months: np.ndarray
    has_ses: np.ndarray

    def __post_init__(self):
        self.device_id = np.asarray(self.device_id, dtype=np.int64)
        self.station_id = np.asarray(self.station_id, dtype=np.int64)
        self.ts = np.asarray(self.ts, dtype=np.int64)
        self.price_eur = np.asarray(self.price_eur, dtype=np.float64)
        self.age_months = np.asarray(self.age_months, dtype=np.int64)
        self.has_ses = np.asarray(self.has_ses, dtype=bool)

    @classmethod
    def from_samples(cls, samples: Iterable[SesSample]) -> "SesSampleTable":
        samples = list(samples)
        return cls(
            device_id=[s.device_id for s in samples],
            station_id=[s.station_id for s in samples],
            ts=[s.ts for s in samples],
            price_eur=[np.nan if s.price_eur is None else s.price_eur for s in samples],
            age_months=[0 if s.age_months is None else s.age_months for s in samples],
            has_ses=[s.price_eur is not None for s in samples],
        )

    def __len__(self) -> int:
        return len(self.ts)

    def take(self, index) -> "SesSampleTable":
        return SesSampleTable(
            device_id=self.device_id[index],
            station_id=self.station_id[index],
            ts=self.ts[index],
            price_eur=self.price_eur[index],
            age_months=self.age_months[index],
            has_ses=self.has_ses[index],
        )

    def samples(self) -> Iterator[SesSample]:
        for i in range(len(self)):
            matched = bool(self.has_ses[i])
            yield SesSample(
                device_id=int(self.device_id[i]),
                station_id=int(self.station_id[i]),
                ts=int(self.ts[i]),
                price_eur=float(self.price_eur[i]) if matched else None,
                age_months=int(self.age_months[i]) if matched else None,
            )


@dataclass
class CoverageReport:
    """TAC 匹配覆盖率"""

    total: int
    matched: int
    unmatched: int
    unmatched_tacs: List[int]

    @property
    def matched_fraction(self) -> float:
        return self.matched / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "matched": self.matched,
            "unmatched": self.unmatched,
            "matched_fraction": self.matched_fraction,
            "distinct_unmatched_tacs": len(self.unmatched_tacs),
            "unmatched_tacs_sample": self.unmatched_tacs[:50],
        }


def fuse(
    cdrs: CdrTable,
    properties: PhonePropertyTable,
    reference: YearMonth = (2014, 8),
) -> Tuple[SesSampleTable, CoverageReport]:
    """
    One SES sample per CDR, in input order.

    Raises:
        ArgumentError: records not remapped to stations, or invalid reference
    """
    if cdrs.station_id is None:
        raise ArgumentError("fuse needs records remapped to stations")
    months_between(reference, reference)
    matched, index = properties.lookup(cdrs.tac)
    price = np.where(matched, properties.price_eur[index] if len(properties) else 0.0, np.nan)
    age = np.zeros(len(cdrs), dtype=np.int64)
    if len(properties):
        age = (reference[0] - properties.release_year[index]) * 12 + (
            reference[1] - properties.release_month[index]
        )
        age = np.where(matched, age, 0)

    samples = SesSampleTable(
        device_id=cdrs.device_id,
        station_id=cdrs.station_id,
        ts=cdrs.ts,
        price_eur=price,
        age_months=age,
        has_ses=matched,
    )
    n_matched = int(matched.sum())
    report = CoverageReport(
        total=len(cdrs),
        matched=n_matched,
        unmatched=len(cdrs) - n_matched,
        unmatched_tacs=np.unique(cdrs.tac[~matched]).astype(np.int64).tolist(),
    )
    logger.info(
        f"🔗 Fused {report.total:,} CDRs: {report.matched_fraction:.1%} matched, "
        f"{len(report.unmatched_tacs)} distinct unmatched TACs"
    )
    return samples, report


def flag_anomalies(samples: SesSampleTable) -> Tuple[SesSampleTable, SesSampleTable]:
    """Split into (valid, anomalous); anomalous = phone released after the reference month."""
    anomalous = samples.has_ses & (samples.age_months < 0)
    if anomalous.any():
        logger.warning(f"⚠️ {int(anomalous.sum())} samples have a release date after the reference month")
    return samples.take(~anomalous), samples.take(anomalous)


def demote_anomalies(samples: SesSampleTable) -> Tuple[SesSampleTable, int]:
    """
    Keep anomalous samples as indicator-less ones.

    Activity totals still count every record while the SES means skip the
    anomalies, the same way unmatched TACs are treated.

    Returns:
        (samples in input order, number of demoted samples)
    """
    anomalous = samples.has_ses & (samples.age_months < 0)
    n_anomalous = int(anomalous.sum())
    if not n_anomalous:
        return samples, 0
    logger.warning(f"⚠️ {n_anomalous} samples have a release date after the reference month; indicators dropped")
    return (
        SesSampleTable(
            device_id=samples.device_id,
            station_id=samples.station_id,
            ts=samples.ts,
            price_eur=np.where(anomalous, np.nan, samples.price_eur),
            age_months=np.where(anomalous, 0, samples.age_months),
            has_ses=samples.has_ses & ~anomalous,
        ),
        n_anomalous,
    )


def per_device_samples(samples: SesSampleTable) -> SesSampleTable:
    """
    One sample per distinct (station, device): the earliest sample with SES
    indicators, or the earliest sample when the device never matched.
    """
    if len(samples) == 0:
        return samples
    # priority: matched first, then time, then input position
    order = np.lexsort((np.arange(len(samples)), samples.ts, ~samples.has_ses, samples.device_id, samples.station_id))
    ordered = samples.take(order)
    pair_start = np.ones(len(ordered), dtype=bool)
    pair_start[1:] = (np.diff(ordered.station_id) != 0) | (np.diff(ordered.device_id) != 0)
    return ordered.take(pair_start)
