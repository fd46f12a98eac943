"""
基站合并

同一坐标(截断到六位小数后)的小区合并为一个基站, CDR 的小区 ID 随之更新。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Tuple

import numpy as np

from cdrtool.ingest.records import CdrTable, CellTable
from cdrtool.utils.exceptions import ArgumentError, InvariantViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaseStation:
    """共址小区合并后的基站"""

    station_id: int
    lat: float
    lon: float
    member_cell_ids: FrozenSet[int]

    def __post_init__(self):
        if not self.member_cell_ids:
            raise ArgumentError(f"station {self.station_id} has no member cells")


@dataclass
class StationTable:
    """列式基站表, station_id 即行号"""

    station_id: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    members: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        self.station_id = np.asarray(self.station_id, dtype=np.int64)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        if not self.members:
            self.members = [[] for _ in range(len(self.station_id))]

    def __len__(self) -> int:
        return len(self.station_id)

    def stations(self) -> Iterator[BaseStation]:
        for i in range(len(self)):
            yield BaseStation(
                station_id=int(self.station_id[i]),
                lat=float(self.lat[i]),
                lon=float(self.lon[i]),
                member_cell_ids=frozenset(self.members[i]),
            )

    def coordinates(self, station_ids) -> Tuple[np.ndarray, np.ndarray]:
        index = self.index_of(station_ids)
        return self.lat[index], self.lon[index]

    def index_of(self, station_ids) -> np.ndarray:
        ids = np.asarray(list(station_ids), dtype=np.int64)
        position = {int(s): i for i, s in enumerate(self.station_id)}
        missing = [int(s) for s in ids if int(s) not in position]
        if missing:
            raise ArgumentError(f"unknown station ids: {missing[:10]}")
        return np.fromiter((position[int(s)] for s in ids), dtype=np.int64, count=len(ids))

    def subset(self, station_ids) -> "StationTable":
        index = self.index_of(sorted(station_ids))
        return StationTable(
            station_id=self.station_id[index],
            lat=self.lat[index],
            lon=self.lon[index],
            members=[self.members[i] for i in index],
        )


def merge_cells(cells: CellTable) -> Tuple[StationTable, np.ndarray]:
    """
    Group cells by identical (lat, lon) into base stations.

    Station ids are assigned in order of the first member cell id, so the
    result is deterministic for a given cell table.

    Returns:
        (stations, cell_to_station) where ``cell_to_station[cell_id]`` is the
        station of that cell.
    """
    order = np.argsort(cells.cell_id, kind="stable")
    site_ids: Dict[Tuple[float, float], int] = {}
    lat: List[float] = []
    lon: List[float] = []
    members: List[List[int]] = []
    size = int(cells.cell_id.max()) + 1 if len(cells) else 0
    cell_to_station = np.full(size, -1, dtype=np.int64)

    for i in order:
        key = (float(cells.lat[i]), float(cells.lon[i]))
        station = site_ids.get(key)
        if station is None:
            station = len(lat)
            site_ids[key] = station
            lat.append(key[0])
            lon.append(key[1])
            members.append([])
        cell_id = int(cells.cell_id[i])
        members[station].append(cell_id)
        cell_to_station[cell_id] = station

    stations = StationTable(
        station_id=np.arange(len(lat), dtype=np.int64), lat=lat, lon=lon, members=members
    )
    logger.info(f"📡 Merged {len(cells):,} cells into {len(stations):,} base stations")
    return stations, cell_to_station


def remap_cdr_cells(cdrs: CdrTable, cell_to_station: np.ndarray) -> CdrTable:
    """
    Attach station ids to every record; counts are unchanged.

    Raises:
        InvariantViolation: a record references a cell missing from the map
    """
    cell_to_station = np.asarray(cell_to_station, dtype=np.int64)
    cell_id = cdrs.cell_id
    in_range = (cell_id >= 0) & (cell_id < len(cell_to_station))
    station_id = np.full(len(cdrs), -1, dtype=np.int64)
    station_id[in_range] = cell_to_station[cell_id[in_range]]
    unmapped = station_id < 0
    if unmapped.any():
        bad = np.unique(cell_id[unmapped])[:10].tolist()
        raise InvariantViolation(f"{int(unmapped.sum())} records reference unmapped cells {bad}")
    return CdrTable(
        ts=cdrs.ts,
        device_id=cdrs.device_id,
        cell_id=cdrs.cell_id,
        tac=cdrs.tac,
        station_id=station_id,
    )


def station_record_counts(cdrs: CdrTable, n_stations: int) -> np.ndarray:
    """Records per station id (dense array of length n_stations)."""
    if cdrs.station_id is None:
        raise ArgumentError("records have no station ids; run remap_cdr_cells first")
    return np.bincount(cdrs.station_id, minlength=n_stations)
