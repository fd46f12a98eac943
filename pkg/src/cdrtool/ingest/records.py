"""
领域类型

CDR、设备与小区三张表的行类型,以及供下游模块使用的列式表。
列式表以 numpy 数组保存,数据量达到亿级时仍可按块处理。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional

import numpy as np

from cdrtool.utils.exceptions import ArgumentError, MalformedRowError

CDR_HEADER = "timestamp,device_hash,cell_hash,tac"
CELL_HEADER = "cell_hash,lat,lon"
DEVICE_HEADER = "device_hash,age,gender,customer_type,subscription"


class Gender(Enum):
    """性别(缺失时为 None)"""

    MALE = "male"
    FEMALE = "female"


class CustomerType(Enum):
    """客户类型"""

    INDIVIDUAL = "individual"
    BUSINESS = "business"


class Subscription(Enum):
    """订阅类型"""

    PREPAID = "prepaid"
    POSTPAID = "postpaid"


# 设备表中的整数编码, 0 保留给"未知"
GENDER_CODES = {None: 0, Gender.MALE: 1, Gender.FEMALE: 2}
CUSTOMER_TYPE_CODES = {CustomerType.INDIVIDUAL: 0, CustomerType.BUSINESS: 1}
SUBSCRIPTION_CODES = {Subscription.PREPAID: 0, Subscription.POSTPAID: 1}
UNKNOWN_AGE = -1


@dataclass(frozen=True)
class RawCdrRow:
    """cdr.csv 中的一行(清洗之前)"""

    timestamp: str
    device_hash: str
    cell_hash: str
    tac: str


@dataclass(frozen=True)
class CdrRecord:
    """一次通信事件"""

    ts: int
    device_id: int
    cell_id: int
    tac: int
    station_id: Optional[int] = None


@dataclass(frozen=True)
class Device:
    """设备(用户)信息"""

    device_id: int
    customer_type: CustomerType
    subscription: Subscription
    age: Optional[int] = None
    gender: Optional[Gender] = None

    def __post_init__(self):
        if self.age is not None and not 0 <= self.age <= 120:
            raise MalformedRowError(f"age {self.age} outside [0, 120]")


@dataclass(frozen=True)
class Cell:
    """单个小区及其位置"""

    cell_id: int
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise MalformedRowError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise MalformedRowError(f"longitude {self.lon} outside [-180, 180]")


class IdDictionary:
    """
    哈希字符串到稠密整数的双射映射

    按首次出现的顺序分配 0..N-1,没有空洞。
    """

    def __init__(self, hashes: Iterable[str] = ()):
        self._ids: Dict[str, int] = {}
        self._hashes: List[str] = []
        for h in hashes:
            self.intern(h)

    def intern(self, hash_value: str) -> int:
        if not hash_value:
            raise MalformedRowError("empty hash")
        dense = self._ids.get(hash_value)
        if dense is None:
            dense = len(self._hashes)
            self._ids[hash_value] = dense
            self._hashes.append(hash_value)
        return dense

    def intern_many(self, hashes: Iterable[str]) -> np.ndarray:
        """Intern in iteration order; used with pandas.factorize uniques."""
        return np.fromiter((self.intern(h) for h in hashes), dtype=np.int64)

    def lookup_many(self, hashes: Iterable[str]) -> np.ndarray:
        """Resolve without inserting; unknown hashes map to -1."""
        get = self._ids.get
        return np.fromiter((get(h, -1) for h in hashes), dtype=np.int64)

    def get(self, hash_value: str) -> Optional[int]:
        return self._ids.get(hash_value)

    def hash_of(self, dense: int) -> str:
        return self._hashes[dense]

    @property
    def hashes(self) -> List[str]:
        return list(self._hashes)

    def __len__(self) -> int:
        return len(self._hashes)

    def __contains__(self, hash_value: object) -> bool:
        return hash_value in self._ids

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IdDictionary):
            return NotImplemented
        return self._hashes == other._hashes


@dataclass
class Dictionaries:
    """摄取期间共享的 ID 字典"""

    devices: IdDictionary = field(default_factory=IdDictionary)
    cells: IdDictionary = field(default_factory=IdDictionary)


def _int_array(values, dtype=np.int64) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values, dtype=dtype))


@dataclass
class CdrTable:
    """
    列式 CDR 表

    station_id 在合并基站之前为 None。
    """

    ts: np.ndarray
    device_id: np.ndarray
    cell_id: np.ndarray
    tac: np.ndarray
    station_id: Optional[np.ndarray] = None

    def __post_init__(self):
        self.ts = _int_array(self.ts)
        self.device_id = _int_array(self.device_id)
        self.cell_id = _int_array(self.cell_id)
        self.tac = _int_array(self.tac, np.uint32)
        if self.station_id is not None:
            self.station_id = _int_array(self.station_id)
        n = len(self.ts)
        columns = [self.device_id, self.cell_id, self.tac]
        if self.station_id is not None:
            columns.append(self.station_id)
        if any(len(c) != n for c in columns):
            raise ArgumentError("CdrTable columns must have equal length")

    @classmethod
    def empty(cls, with_stations: bool = False) -> "CdrTable":
        return cls(
            ts=[], device_id=[], cell_id=[], tac=[],
            station_id=[] if with_stations else None,
        )

    @classmethod
    def from_records(cls, records: Iterable[CdrRecord]) -> "CdrTable":
        records = list(records)
        with_stations = bool(records) and all(
            r.station_id is not None for r in records
        )
        return cls(
            ts=[r.ts for r in records],
            device_id=[r.device_id for r in records],
            cell_id=[r.cell_id for r in records],
            tac=[r.tac for r in records],
            station_id=[r.station_id for r in records] if with_stations else None,
        )

    @classmethod
    def concat(cls, tables: List["CdrTable"]) -> "CdrTable":
        if not tables:
            return cls.empty()
        with_stations = all(t.station_id is not None for t in tables)
        return cls(
            ts=np.concatenate([t.ts for t in tables]),
            device_id=np.concatenate([t.device_id for t in tables]),
            cell_id=np.concatenate([t.cell_id for t in tables]),
            tac=np.concatenate([t.tac for t in tables]),
            station_id=np.concatenate([t.station_id for t in tables])
            if with_stations
            else None,
        )

    def __len__(self) -> int:
        return len(self.ts)

    def take(self, index: np.ndarray) -> "CdrTable":
        """Row subset by boolean mask or integer index, order preserved."""
        return CdrTable(
            ts=self.ts[index],
            device_id=self.device_id[index],
            cell_id=self.cell_id[index],
            tac=self.tac[index],
            station_id=None if self.station_id is None else self.station_id[index],
        )

    def sorted_by_time(self) -> "CdrTable":
        return self.take(np.argsort(self.ts, kind="stable"))

    def records(self) -> Iterator[CdrRecord]:
        stations = self.station_id
        for i in range(len(self)):
            yield CdrRecord(
                ts=int(self.ts[i]),
                device_id=int(self.device_id[i]),
                cell_id=int(self.cell_id[i]),
                tac=int(self.tac[i]),
                station_id=None if stations is None else int(stations[i]),
            )

    def equals(self, other: "CdrTable") -> bool:
        same = (
            np.array_equal(self.ts, other.ts)
            and np.array_equal(self.device_id, other.device_id)
            and np.array_equal(self.cell_id, other.cell_id)
            and np.array_equal(self.tac, other.tac)
        )
        if (self.station_id is None) != (other.station_id is None):
            return False
        if self.station_id is not None:
            same = same and np.array_equal(self.station_id, other.station_id)
        return same


@dataclass
class CellTable:
    """列式小区表, cell_id 即行号"""

    cell_id: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        self.cell_id = _int_array(self.cell_id)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)

    @classmethod
    def from_cells(cls, cells: Iterable[Cell]) -> "CellTable":
        cells = list(cells)
        return cls(
            cell_id=[c.cell_id for c in cells],
            lat=[c.lat for c in cells],
            lon=[c.lon for c in cells],
        )

    def __len__(self) -> int:
        return len(self.cell_id)

    def cells(self) -> Iterator[Cell]:
        for i in range(len(self)):
            yield Cell(int(self.cell_id[i]), float(self.lat[i]), float(self.lon[i]))


@dataclass
class DeviceTable:
    """
    列式设备表

    age 为 UNKNOWN_AGE 时表示缺失; gender 使用 GENDER_CODES 编码。
    """

    device_id: np.ndarray
    age: np.ndarray
    gender: np.ndarray
    customer_type: np.ndarray
    subscription: np.ndarray

    def __post_init__(self):
        self.device_id = _int_array(self.device_id)
        self.age = _int_array(self.age, np.int16)
        self.gender = _int_array(self.gender, np.int8)
        self.customer_type = _int_array(self.customer_type, np.int8)
        self.subscription = _int_array(self.subscription, np.int8)

    @classmethod
    def from_devices(cls, devices: Iterable[Device]) -> "DeviceTable":
        devices = list(devices)
        return cls(
            device_id=[d.device_id for d in devices],
            age=[UNKNOWN_AGE if d.age is None else d.age for d in devices],
            gender=[GENDER_CODES[d.gender] for d in devices],
            customer_type=[CUSTOMER_TYPE_CODES[d.customer_type] for d in devices],
            subscription=[SUBSCRIPTION_CODES[d.subscription] for d in devices],
        )

    def __len__(self) -> int:
        return len(self.device_id)

    def devices(self) -> Iterator[Device]:
        genders = {v: k for k, v in GENDER_CODES.items()}
        customers = {v: k for k, v in CUSTOMER_TYPE_CODES.items()}
        subscriptions = {v: k for k, v in SUBSCRIPTION_CODES.items()}
        for i in range(len(self)):
            age = int(self.age[i])
            yield Device(
                device_id=int(self.device_id[i]),
                customer_type=customers[int(self.customer_type[i])],
                subscription=subscriptions[int(self.subscription[i])],
                age=None if age == UNKNOWN_AGE else age,
                gender=genders[int(self.gender[i])],
            )
