"""
SQLite 存储

单文件嵌入式数据库, 保存 cdr / cell / device / base_station / phone_property
五张表以及 meta 键值表。cdr 表在 ts、device_id、cell_id、tac 上建索引
(合并基站后另加 station_id 索引)。

文件格式: 标准 SQLite 3 数据库, ``PRAGMA user_version`` 为格式版本号。
写入先落到 ``<path>.partial``, 完成后原子改名; 读者永远看不到半成品。
"""

import heapq
import logging
import os
import sqlite3
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from cdrtool.fusion.tac import PhonePropertyTable
from cdrtool.geo.stations import StationTable
from cdrtool.ingest.records import (
    CUSTOMER_TYPE_CODES,
    GENDER_CODES,
    SUBSCRIPTION_CODES,
    UNKNOWN_AGE,
    CdrRecord,
    CdrTable,
    CellTable,
    DeviceTable,
    Dictionaries,
    IdDictionary,
)
from cdrtool.utils.exceptions import (
    ArgumentError,
    ConfigurationError,
    InvariantViolation,
    StoreError,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ID_CHUNK = 500  # 每条 IN (...) 查询最多绑定的 id 数

SCHEMA = """
CREATE TABLE meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE base_station (
    station_id INTEGER PRIMARY KEY,
    lat REAL NOT NULL,
    lon REAL NOT NULL
);
CREATE TABLE cell (
    cell_id INTEGER PRIMARY KEY,
    cell_hash TEXT NOT NULL UNIQUE,
    lat REAL NOT NULL,
    lon REAL NOT NULL,
    station_id INTEGER REFERENCES base_station(station_id)
);
CREATE TABLE device (
    device_id INTEGER PRIMARY KEY,
    device_hash TEXT NOT NULL UNIQUE,
    age INTEGER,
    gender TEXT,
    customer_type TEXT NOT NULL,
    subscription TEXT NOT NULL
);
CREATE TABLE phone_property (
    tac INTEGER PRIMARY KEY,
    brand TEXT NOT NULL,
    model TEXT NOT NULL,
    release_year INTEGER NOT NULL,
    release_month INTEGER NOT NULL,
    price_eur REAL NOT NULL
);
CREATE TABLE cdr (
    ts INTEGER NOT NULL,
    device_id INTEGER NOT NULL REFERENCES device(device_id),
    cell_id INTEGER NOT NULL REFERENCES cell(cell_id),
    tac INTEGER NOT NULL,
    station_id INTEGER REFERENCES base_station(station_id)
);
"""

INDICES = {
    "idx_cdr_ts": "cdr(ts)",
    "idx_cdr_device": "cdr(device_id)",
    "idx_cdr_cell": "cdr(cell_id)",
    "idx_cdr_tac": "cdr(tac)",
}
STATION_INDEX = ("idx_cdr_station", "cdr(station_id)")

_CDR_COLUMNS = "ts, device_id, cell_id, tac, station_id"
_WINDOW_KEYS = ("cell_id", "station_id")

_GENDER_TEXT = {code: (g.value if g else None) for g, code in GENDER_CODES.items()}
_GENDER_CODE = {text: code for code, text in _GENDER_TEXT.items()}
_CUSTOMER_TEXT = {code: c.value for c, code in CUSTOMER_TYPE_CODES.items()}
_CUSTOMER_CODE = {text: code for code, text in _CUSTOMER_TEXT.items()}
_SUBSCRIPTION_TEXT = {code: s.value for s, code in SUBSCRIPTION_CODES.items()}
_SUBSCRIPTION_CODE = {text: code for code, text in _SUBSCRIPTION_TEXT.items()}

PathLike = Union[str, Path]


@dataclass
class StoreTables:
    """写入存储的一组表"""

    cdrs: CdrTable
    cells: CellTable
    devices: DeviceTable
    dicts: Dictionaries
    stations: Optional[StationTable] = None
    cell_to_station: Optional[np.ndarray] = None
    properties: Optional[PhonePropertyTable] = None


def partial_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".partial")


def _insert_meta(conn: sqlite3.Connection, meta: Dict[str, str]) -> None:
    conn.executemany(
        "INSERT OR REPLACE INTO meta (key, value) VALUES (?, ?)",
        sorted((str(k), str(v)) for k, v in meta.items()),
    )


def _insert_stations(conn: sqlite3.Connection, stations: StationTable) -> None:
    conn.executemany(
        "INSERT INTO base_station (station_id, lat, lon) VALUES (?, ?, ?)",
        zip(stations.station_id.tolist(), stations.lat.tolist(), stations.lon.tolist()),
    )


def _insert_cells(conn: sqlite3.Connection, cells: CellTable, dicts: Dictionaries,
                  cell_to_station: Optional[np.ndarray]) -> None:
    ids = cells.cell_id.tolist()
    hashes = [dicts.cells.hash_of(i) for i in ids]
    if cell_to_station is None:
        station = [None] * len(ids)
    else:
        station = [int(cell_to_station[i]) for i in ids]
    conn.executemany(
        "INSERT INTO cell (cell_id, cell_hash, lat, lon, station_id) VALUES (?, ?, ?, ?, ?)",
        zip(ids, hashes, cells.lat.tolist(), cells.lon.tolist(), station),
    )


def _insert_devices(conn: sqlite3.Connection, devices: DeviceTable, dicts: Dictionaries) -> None:
    ids = devices.device_id.tolist()
    rows = zip(
        ids,
        (dicts.devices.hash_of(i) for i in ids),
        (None if a == UNKNOWN_AGE else a for a in devices.age.tolist()),
        (_GENDER_TEXT[g] for g in devices.gender.tolist()),
        (_CUSTOMER_TEXT[c] for c in devices.customer_type.tolist()),
        (_SUBSCRIPTION_TEXT[s] for s in devices.subscription.tolist()),
    )
    conn.executemany(
        "INSERT INTO device (device_id, device_hash, age, gender, customer_type, subscription) "
        "VALUES (?, ?, ?, ?, ?, ?)",
        rows,
    )


def _insert_properties(conn: sqlite3.Connection, properties: PhonePropertyTable) -> None:
    conn.executemany(
        "INSERT INTO phone_property (tac, brand, model, release_year, release_month, price_eur) "
        "VALUES (?, ?, ?, ?, ?, ?)",
        zip(
            properties.tac.astype(np.int64).tolist(),
            properties.brand,
            properties.model,
            properties.release_year.tolist(),
            properties.release_month.tolist(),
            properties.price_eur.tolist(),
        ),
    )


def _insert_cdrs(conn: sqlite3.Connection, cdrs: CdrTable) -> None:
    station = cdrs.station_id.tolist() if cdrs.station_id is not None else [None] * len(cdrs)
    conn.executemany(
        f"INSERT INTO cdr ({_CDR_COLUMNS}) VALUES (?, ?, ?, ?, ?)",
        zip(
            cdrs.ts.tolist(),
            cdrs.device_id.tolist(),
            cdrs.cell_id.tolist(),
            cdrs.tac.astype(np.int64).tolist(),
            station,
        ),
    )


def _create_indices(conn: sqlite3.Connection, with_stations: bool) -> None:
    for name, target in INDICES.items():
        conn.execute(f"CREATE INDEX IF NOT EXISTS {name} ON {target}")
    if with_stations:
        conn.execute(f"CREATE INDEX IF NOT EXISTS {STATION_INDEX[0]} ON {STATION_INDEX[1]}")


def persist(path: PathLike, tables: StoreTables, meta: Optional[Dict[str, str]] = None) -> Path:
    """
    Write a complete store file.

    Args:
        path: destination; replaced atomically if it exists
        tables: tables to write
        meta: extra key/value pairs for the meta table

    Returns:
        The store path

    Raises:
        StoreError: any I/O or SQLite failure; the partial file is removed
    """
    path = Path(path)
    partial = partial_path(path)
    if tables.stations is not None and tables.cdrs.station_id is None:
        raise ArgumentError("stations given but records are not remapped")

    conn = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if partial.exists():
            partial.unlink()
        conn = sqlite3.connect(str(partial))
        # discarded on failure; no journal needed
        conn.execute("PRAGMA journal_mode = OFF")
        conn.execute("PRAGMA synchronous = OFF")
        conn.executescript(SCHEMA)
        conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
        with conn:
            merged = tables.stations is not None
            _insert_meta(
                conn,
                {"schema_version": SCHEMA_VERSION, "stations_merged": "1" if merged else "0", **(meta or {})},
            )
            if tables.stations is not None:
                _insert_stations(conn, tables.stations)
            _insert_cells(conn, tables.cells, tables.dicts, tables.cell_to_station)
            _insert_devices(conn, tables.devices, tables.dicts)
            if tables.properties is not None:
                _insert_properties(conn, tables.properties)
            _insert_cdrs(conn, tables.cdrs)
            _create_indices(conn, merged)
        conn.close()
        conn = None
        os.replace(partial, path)
    except (sqlite3.Error, OSError) as e:
        if conn is not None:
            conn.close()
        try:
            partial.unlink()
        except FileNotFoundError:
            pass
        raise StoreError(f"failed to persist store {path}: {e}") from e

    logger.info(f"💾 Persisted {len(tables.cdrs):,} CDRs to {path}")
    return path


class ScanCounter:
    """Counts SQLite virtual-machine steps executed while active."""

    def __init__(self):
        self.steps = 0

    def _tick(self) -> int:
        self.steps += 1
        return 0


class CdrStore:
    """
    存储读取器(可选写入)

    每个线程应当各自打开一个 CdrStore。
    """

    def __init__(self, path: PathLike, writable: bool = False):
        self.path = Path(path)
        if not self.path.exists():
            raise ConfigurationError(f"store not found: {self.path}")
        mode = "rw" if writable else "ro"
        try:
            self.conn = sqlite3.connect(f"{self.path.resolve().as_uri()}?mode={mode}", uri=True)
            version = self.conn.execute("PRAGMA user_version").fetchone()[0]
        except sqlite3.Error as e:
            raise StoreError(f"cannot open store {self.path}: {e}") from e
        if version != SCHEMA_VERSION:
            self.conn.close()
            raise StoreError(f"{self.path}: unsupported store version {version} (expected {SCHEMA_VERSION})")
        self.writable = writable

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "CdrStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # ---- metadata ----

    def meta(self) -> Dict[str, str]:
        return dict(self.conn.execute("SELECT key, value FROM meta ORDER BY key"))

    def counts(self) -> Dict[str, int]:
        tables = ("cdr", "cell", "device", "base_station", "phone_property")
        return {t: self.conn.execute(f"SELECT COUNT(*) FROM {t}").fetchone()[0] for t in tables}

    @property
    def has_stations(self) -> bool:
        row = self.conn.execute("SELECT value FROM meta WHERE key = 'stations_merged'").fetchone()
        return row is not None and row[0] == "1"

    def index_names(self) -> List[str]:
        rows = self.conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'index' AND tbl_name = 'cdr' ORDER BY name"
        )
        return [r[0] for r in rows]

    # ---- full-table loads ----

    def load_cdrs(self) -> CdrTable:
        frame = pd.read_sql_query(f"SELECT {_CDR_COLUMNS} FROM cdr ORDER BY rowid", self.conn)
        return _frame_to_cdrs(frame, self.has_stations)

    def load_dictionaries(self) -> Dictionaries:
        cells = [r[0] for r in self.conn.execute("SELECT cell_hash FROM cell ORDER BY cell_id")]
        devices = [r[0] for r in self.conn.execute("SELECT device_hash FROM device ORDER BY device_id")]
        return Dictionaries(devices=IdDictionary(devices), cells=IdDictionary(cells))

    def load_cells(self) -> CellTable:
        frame = pd.read_sql_query("SELECT cell_id, lat, lon FROM cell ORDER BY cell_id", self.conn)
        return CellTable(cell_id=frame["cell_id"].to_numpy(), lat=frame["lat"].to_numpy(), lon=frame["lon"].to_numpy())

    def load_cell_to_station(self) -> Optional[np.ndarray]:
        if not self.has_stations:
            return None
        frame = pd.read_sql_query("SELECT cell_id, station_id FROM cell ORDER BY cell_id", self.conn)
        mapping = np.full(int(frame["cell_id"].max()) + 1 if len(frame) else 0, -1, dtype=np.int64)
        mapping[frame["cell_id"].to_numpy()] = frame["station_id"].to_numpy()
        return mapping

    def load_devices(self) -> DeviceTable:
        frame = pd.read_sql_query(
            "SELECT device_id, age, gender, customer_type, subscription FROM device ORDER BY device_id",
            self.conn,
        )
        return DeviceTable(
            device_id=frame["device_id"].to_numpy(),
            age=frame["age"].fillna(UNKNOWN_AGE).to_numpy(dtype=np.int64),
            gender=[_GENDER_CODE[None if pd.isna(g) else g] for g in frame["gender"]],
            customer_type=frame["customer_type"].map(_CUSTOMER_CODE).to_numpy(),
            subscription=frame["subscription"].map(_SUBSCRIPTION_CODE).to_numpy(),
        )

    def load_stations(self) -> StationTable:
        if not self.has_stations:
            raise ArgumentError(f"{self.path}: base stations not merged yet; run merge-cells")
        stations = pd.read_sql_query("SELECT station_id, lat, lon FROM base_station ORDER BY station_id", self.conn)
        members: List[List[int]] = [[] for _ in range(len(stations))]
        position = {int(s): i for i, s in enumerate(stations["station_id"])}
        for cell_id, station_id in self.conn.execute("SELECT cell_id, station_id FROM cell ORDER BY cell_id"):
            members[position[station_id]].append(cell_id)
        return StationTable(
            station_id=stations["station_id"].to_numpy(),
            lat=stations["lat"].to_numpy(),
            lon=stations["lon"].to_numpy(),
            members=members,
        )

    def load_phone_properties(self) -> Optional[PhonePropertyTable]:
        frame = pd.read_sql_query(
            "SELECT tac, brand, model, release_year, release_month, price_eur FROM phone_property ORDER BY tac",
            self.conn,
        )
        if frame.empty:
            return None
        return PhonePropertyTable(
            tac=frame["tac"].to_numpy(),
            release_year=frame["release_year"].to_numpy(),
            release_month=frame["release_month"].to_numpy(),
            price_eur=frame["price_eur"].to_numpy(),
            brand=frame["brand"].tolist(),
            model=frame["model"].tolist(),
        )

    def load_tables(self) -> StoreTables:
        return StoreTables(
            cdrs=self.load_cdrs(),
            cells=self.load_cells(),
            devices=self.load_devices(),
            dicts=self.load_dictionaries(),
            stations=self.load_stations() if self.has_stations else None,
            cell_to_station=self.load_cell_to_station(),
            properties=self.load_phone_properties(),
        )

    def station_counts(self) -> pd.DataFrame:
        """Stations with coordinates and record counts, zero-count stations included."""
        if not self.has_stations:
            raise ArgumentError(f"{self.path}: base stations not merged yet; run merge-cells")
        return pd.read_sql_query(
            "SELECT b.station_id, b.lat, b.lon, COUNT(c.station_id) AS n_records "
            "FROM base_station b LEFT JOIN cdr c ON c.station_id = b.station_id "
            "GROUP BY b.station_id ORDER BY b.station_id",
            self.conn,
        )

    # ---- in-place updates ----

    def _require_writable(self) -> None:
        if not self.writable:
            raise ArgumentError(f"{self.path} was opened read-only")

    def write_stations(self, stations: StationTable, cell_to_station: np.ndarray) -> None:
        """
        Store merged base stations and remap every record, in one transaction.

        Raises:
            InvariantViolation: a record's cell has no station
        """
        self._require_writable()
        try:
            with self.conn:
                self.conn.execute("UPDATE cdr SET station_id = NULL")
                self.conn.execute("UPDATE cell SET station_id = NULL")
                self.conn.execute("DELETE FROM base_station")
                _insert_stations(self.conn, stations)
                self.conn.executemany(
                    "UPDATE cell SET station_id = ? WHERE cell_id = ?",
                    [(int(s), int(c)) for c, s in enumerate(cell_to_station) if s >= 0],
                )
                self.conn.execute(
                    "UPDATE cdr SET station_id = (SELECT station_id FROM cell WHERE cell.cell_id = cdr.cell_id)"
                )
                unmapped = self.conn.execute("SELECT COUNT(*) FROM cdr WHERE station_id IS NULL").fetchone()[0]
                if unmapped:
                    raise InvariantViolation(f"{unmapped} records reference cells without a station")
                _create_indices(self.conn, with_stations=True)
                _insert_meta(self.conn, {"stations_merged": "1"})
        except sqlite3.Error as e:
            raise StoreError(f"failed to write stations to {self.path}: {e}") from e
        logger.info(f"📡 Stored {len(stations):,} base stations in {self.path}")

    def write_phone_properties(self, properties: PhonePropertyTable) -> None:
        self._require_writable()
        try:
            with self.conn:
                self.conn.execute("DELETE FROM phone_property")
                _insert_properties(self.conn, properties)
        except sqlite3.Error as e:
            raise StoreError(f"failed to write phone properties to {self.path}: {e}") from e

    def set_meta(self, **values) -> None:
        self._require_writable()
        with self.conn:
            _insert_meta(self.conn, values)

    # ---- diagnostics ----

    @contextmanager
    def scan_counter(self, granularity: int = 100) -> Iterator[ScanCounter]:
        counter = ScanCounter()
        self.conn.set_progress_handler(counter._tick, granularity)
        try:
            yield counter
        finally:
            self.conn.set_progress_handler(None, granularity)

    def explain(self, sql: str, params: Sequence = ()) -> List[str]:
        """EXPLAIN QUERY PLAN detail lines."""
        return [row[-1] for row in self.conn.execute(f"EXPLAIN QUERY PLAN {sql}", tuple(params))]


def _frame_to_cdrs(frame: pd.DataFrame, with_stations: bool) -> CdrTable:
    station = frame["station_id"]
    has_station = with_stations and station.notna().all()
    return CdrTable(
        ts=frame["ts"].to_numpy(dtype=np.int64),
        device_id=frame["device_id"].to_numpy(dtype=np.int64),
        cell_id=frame["cell_id"].to_numpy(dtype=np.int64),
        tac=frame["tac"].to_numpy(dtype=np.int64),
        station_id=station.to_numpy(dtype=np.int64) if has_station else None,
    )


def window_sql(key: str, n_ids: int) -> str:
    placeholders = ", ".join("?" * n_ids)
    return (
        f"SELECT rowid, {_CDR_COLUMNS} FROM cdr "
        f"WHERE ts >= ? AND ts < ? AND {key} IN ({placeholders}) ORDER BY ts, rowid"
    )


def _check_window(store: CdrStore, t0: int, t1: int, key: str) -> None:
    if t0 >= t1:
        raise ArgumentError(f"empty or inverted window [{t0}, {t1})")
    if key not in _WINDOW_KEYS:
        raise ArgumentError(f"window key must be one of {_WINDOW_KEYS}")
    if key == "station_id" and not store.has_stations:
        raise ArgumentError("station window query needs merged base stations")


def _id_chunks(ids: Iterable[int]) -> List[List[int]]:
    ordered = sorted({int(i) for i in ids})
    return [ordered[i:i + ID_CHUNK] for i in range(0, len(ordered), ID_CHUNK)]


def query_window(
    store: CdrStore,
    t0: int,
    t1: int,
    ids: Iterable[int],
    key: str = "cell_id",
) -> Iterator[CdrRecord]:
    """
    Records with ``t0 <= ts < t1`` whose ``key`` is in ``ids``, in
    nondecreasing ts order (ties in insertion order).

    Raises:
        ArgumentError: t0 >= t1, unknown key, or station query on an unmerged store
    """
    _check_window(store, t0, t1, key)
    chunks = _id_chunks(ids)
    if not chunks:
        return
    cursors = [
        store.conn.execute(window_sql(key, len(chunk)), (int(t0), int(t1), *chunk))
        for chunk in chunks
    ]
    rows = cursors[0] if len(cursors) == 1 else heapq.merge(*cursors, key=lambda r: (r[1], r[0]))
    for _, ts, device_id, cell_id, tac, station_id in rows:
        yield CdrRecord(ts=ts, device_id=device_id, cell_id=cell_id, tac=tac, station_id=station_id)


def query_window_table(
    store: CdrStore,
    t0: int,
    t1: int,
    ids: Iterable[int],
    key: str = "cell_id",
) -> CdrTable:
    """Columnar form of :func:`query_window`."""
    _check_window(store, t0, t1, key)
    frames = [
        pd.read_sql_query(window_sql(key, len(chunk)), store.conn, params=(int(t0), int(t1), *chunk))
        for chunk in _id_chunks(ids)
    ]
    if not frames:
        return CdrTable.empty(with_stations=store.has_stations)
    frame = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]
    frame = frame.sort_values(["ts", "rowid"], kind="stable")
    return _frame_to_cdrs(frame, store.has_stations)


def persist_subset(path: PathLike, store: CdrStore, cdrs: CdrTable, meta: Optional[Dict[str, str]] = None) -> Path:
    """New store with ``store``'s lookup tables and only ``cdrs``."""
    tables = store.load_tables()
    tables.cdrs = cdrs
    merged_meta = {k: v for k, v in store.meta().items() if k != "schema_version"}
    merged_meta.update(meta or {})
    return persist(path, tables, merged_meta)

