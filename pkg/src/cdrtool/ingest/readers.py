"""
原始 CSV 摄取

cdr.csv 按块读取并用 pandas 向量化校验; 块的解析可以并行,
但 ID 稠密化始终按文件顺序在主线程完成, 因此编号与串行处理一致。
每一个坏行都会被计数并记录, 从不静默丢弃。
"""

import itertools
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from cdrtool.core.config import IngestConfig
from cdrtool.ingest.cleaning import (
    INVALID_TS,
    TRAILING_WHITESPACE,
    clean_line,
    parse_timestamp,
    parse_timestamps,
    truncate_coord,
)
from cdrtool.ingest.records import (
    CDR_HEADER,
    CELL_HEADER,
    DEVICE_HEADER,
    Cell,
    CdrTable,
    CellTable,
    CustomerType,
    Device,
    DeviceTable,
    Dictionaries,
    Gender,
    Subscription,
)
from cdrtool.utils.exceptions import (
    ConfigurationError,
    DataQualityError,
    MalformedRowError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class RowError:
    """单个坏行"""

    line_no: int
    reason: str


@dataclass
class RowErrorReport:
    """
    一个输入文件的行级错误报告

    不变量: rows_in = records_out + errors
    """

    source: str
    rows_in: int = 0
    records_out: int = 0
    errors: int = 0
    out_of_range: int = 0  # 保留但超出数据集声明范围的行
    reasons: Dict[str, int] = field(default_factory=dict)
    samples: List[RowError] = field(default_factory=list)
    max_samples: int = 20

    def add(self, line_no: int, reason: str) -> None:
        self.errors += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1
        if len(self.samples) < self.max_samples:
            self.samples.append(RowError(line_no, reason))

    def add_many(self, line_nos: np.ndarray, reason: str) -> None:
        count = int(len(line_nos))
        if count == 0:
            return
        self.errors += count
        self.reasons[reason] = self.reasons.get(reason, 0) + count
        room = self.max_samples - len(self.samples)
        for line_no in line_nos[: max(room, 0)]:
            self.samples.append(RowError(int(line_no), reason))

    @property
    def error_rate(self) -> float:
        return self.errors / self.rows_in if self.rows_in else 0.0

    @property
    def conserved(self) -> bool:
        return self.rows_in == self.records_out + self.errors

    def check_threshold(self, max_error_rate: float) -> None:
        if self.error_rate > max_error_rate:
            raise DataQualityError(
                f"{self.source}: {self.errors}/{self.rows_in} malformed rows "
                f"({self.error_rate:.2%}) exceeds {max_error_rate:.2%}"
            )

    def log(self) -> None:
        if self.errors:
            logger.warning(
                f"⚠️ {self.source}: {self.errors} malformed rows of {self.rows_in}",
                extra={"source": self.source, "errors": self.errors, "reasons": self.reasons},
            )
            for sample in self.samples:
                logger.debug(f"   line {sample.line_no}: {sample.reason}")
        if self.out_of_range:
            logger.warning(
                f"⚠️ {self.source}: {self.out_of_range} rows outside the dataset date range (kept)"
            )

    def to_dict(self) -> Dict[str, object]:
        return {
            "source": self.source,
            "rows_in": self.rows_in,
            "records_out": self.records_out,
            "errors": self.errors,
            "out_of_range": self.out_of_range,
            "reasons": dict(sorted(self.reasons.items())),
            "samples": [{"line": s.line_no, "reason": s.reason} for s in self.samples],
        }


def _open_text(path: PathLike):
    try:
        # newline="\n": only LF ends a line, a stray CR stays for clean_line
        return open(path, "r", encoding="utf-8", newline="\n")
    except FileNotFoundError:
        raise ConfigurationError(f"input file not found: {path}")
    except OSError as e:
        raise DataQualityError(f"cannot read {path}: {e}")


def _check_header(handle, path: PathLike, expected: str) -> None:
    header = clean_line(handle.readline())
    if header.lstrip("\ufeff") != expected:
        raise DataQualityError(f"{path}: expected header '{expected}', got '{header}'")


def _iter_rows(path: PathLike, expected_header: str) -> Iterator[Tuple[int, str]]:
    """Yield (line_no, cleaned line) for every data line after the header."""
    with _open_text(path) as handle:
        _check_header(handle, path, expected_header)
        for line_no, raw in enumerate(handle, start=2):
            yield line_no, clean_line(raw)


@dataclass
class _ParsedChunk:
    """一个数据块的解析结果(尚未分配稠密 ID)"""

    first_line: int
    n_rows: int
    bad_lines: Dict[str, np.ndarray]
    ts: np.ndarray
    device_hash: np.ndarray
    cell_hash: np.ndarray
    tac: np.ndarray
    line_no: np.ndarray


def _parse_cdr_chunk(first_line: int, lines: List[str], zone: str) -> _ParsedChunk:
    """Validate one chunk of raw lines; pure function, safe to run in a pool."""
    n = len(lines)
    line_no = np.arange(first_line, first_line + n, dtype=np.int64)
    cleaned = pd.Series(lines, dtype=object).str.rstrip(TRAILING_WHITESPACE)
    bad: Dict[str, np.ndarray] = {}

    good = (cleaned.str.count(",") == 3).to_numpy()
    bad["expected 4 fields"] = line_no[~good]

    parts = cleaned[good].str.split(",", n=3, expand=True)
    if parts.empty:
        parts = pd.DataFrame({0: [], 1: [], 2: [], 3: []}, dtype=object)
    line_no = line_no[good]
    ts_text = parts[0]
    device_hash = parts[1].str.strip()
    cell_hash = parts[2].str.strip()
    tac_text = parts[3].str.strip()

    checks = [
        ("empty device hash", (device_hash != "").to_numpy()),
        ("empty cell hash", (cell_hash != "").to_numpy()),
        ("tac must be 8 digits", tac_text.str.fullmatch(r"[0-9]{8}").fillna(False).to_numpy(dtype=bool)),
    ]
    ts = parse_timestamps(ts_text, zone)
    checks.append(("unparseable timestamp", ts != INVALID_TS))

    keep = np.ones(len(line_no), dtype=bool)
    for reason, ok in checks:
        # one reason per row: the first failing check wins
        bad[reason] = line_no[keep & ~ok]
        keep &= ok

    tac = tac_text[keep].astype(np.int64).to_numpy(dtype=np.uint32)
    return _ParsedChunk(
        first_line=first_line,
        n_rows=n,
        bad_lines=bad,
        ts=ts[keep],
        device_hash=device_hash[keep].to_numpy(dtype=object),
        cell_hash=cell_hash[keep].to_numpy(dtype=object),
        tac=tac,
        line_no=line_no[keep],
    )


def _iter_chunks(handle, chunk_rows: int) -> Iterator[Tuple[int, List[str]]]:
    line_no = 2
    while True:
        lines = list(itertools.islice(handle, chunk_rows))
        if not lines:
            return
        yield line_no, lines
        line_no += len(lines)


def _ordered_map(pool: ThreadPoolExecutor, fn, items, window: int):
    """Like pool.map, but keeps at most ``window`` chunks in flight."""
    pending = deque()
    for item in items:
        pending.append(pool.submit(fn, item))
        if len(pending) >= window:
            yield pending.popleft().result()
    while pending:
        yield pending.popleft().result()


def ingest_cdrs(
    path: PathLike,
    dicts: Dictionaries,
    config: Optional[IngestConfig] = None,
    threads: int = 1,
) -> Tuple[CdrTable, RowErrorReport]:
    """
    Parse cdr.csv into a CdrTable.

    Cells (and devices, in eager mode) must already be interned in ``dicts``:
    unknown cell hashes are row errors; unknown device hashes are row errors
    in eager mode and interned as new devices in lazy mode.

    Raises:
        ConfigurationError: the file does not exist
        DataQualityError: bad header, unreadable file, or the malformed-row
            rate exceeds ``config.max_error_rate``
    """
    config = config or IngestConfig()
    report = RowErrorReport(source=str(path), max_samples=config.max_error_samples)
    range_start = parse_timestamp(config.dataset_start, config.tz)
    range_end = parse_timestamp(config.dataset_end, config.tz)
    eager_devices = config.check_foreign_keys == "eager"
    tables: List[CdrTable] = []
    new_devices = 0

    with _open_text(path) as handle:
        _check_header(handle, path, CDR_HEADER)
        chunks = _iter_chunks(handle, config.chunk_rows)
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
            parsed_chunks = _ordered_map(
                pool, lambda c: _parse_cdr_chunk(c[0], c[1], config.tz), chunks, window=2 * max(threads, 1)
            )
            # interning is the serialization point: chunks arrive in file order
            for chunk in parsed_chunks:
                report.rows_in += chunk.n_rows
                for reason, lines in chunk.bad_lines.items():
                    report.add_many(lines, reason)

                cell_codes, cell_uniques = pd.factorize(chunk.cell_hash)
                cell_map = dicts.cells.lookup_many(cell_uniques)
                cell_id = cell_map[cell_codes] if len(cell_codes) else cell_codes.astype(np.int64)

                ok = cell_id >= 0
                report.add_many(chunk.line_no[~ok], "unknown cell hash")

                # devices are looked up (or interned) only for rows that passed every other check
                device_id = np.full(len(cell_id), -1, dtype=np.int64)
                device_codes, device_uniques = pd.factorize(chunk.device_hash[ok])
                if eager_devices:
                    device_map = dicts.devices.lookup_many(device_uniques)
                else:
                    before = len(dicts.devices)
                    device_map = dicts.devices.intern_many(device_uniques)
                    new_devices += len(dicts.devices) - before
                if len(device_codes):
                    device_id[ok] = device_map[device_codes]
                dev_ok = device_id >= 0
                report.add_many(chunk.line_no[ok & ~dev_ok], "unknown device hash")
                ok &= dev_ok

                table = CdrTable(
                    ts=chunk.ts[ok],
                    device_id=device_id[ok],
                    cell_id=cell_id[ok],
                    tac=chunk.tac[ok],
                )
                report.out_of_range += int(
                    np.count_nonzero((table.ts < range_start) | (table.ts >= range_end))
                )
                report.records_out += len(table)
                tables.append(table)

    if new_devices:
        logger.warning(f"⚠️ {new_devices} device hashes not in device table; added as unknown")
    result = CdrTable.concat(tables)
    report.log()
    report.check_threshold(config.max_error_rate)
    logger.info(f"📥 Ingested {report.records_out:,} CDRs from {path} ({report.errors} errors)")
    return result, report


def ingest_cells(
    path: PathLike, dicts: Dictionaries, config: Optional[IngestConfig] = None
) -> Tuple[CellTable, RowErrorReport]:
    """Parse cell.csv; coordinates truncated to six decimals."""
    config = config or IngestConfig()
    report = RowErrorReport(source=str(path), max_samples=config.max_error_samples)
    cells: List[Cell] = []

    for line_no, line in _iter_rows(path, CELL_HEADER):
        report.rows_in += 1
        try:
            fields = line.split(",")
            if len(fields) != 3:
                raise MalformedRowError("expected 3 fields")
            cell_hash = fields[0].strip()
            if cell_hash in dicts.cells:
                raise MalformedRowError("duplicate cell hash")
            lat = truncate_coord(fields[1])
            lon = truncate_coord(fields[2])
            cell = Cell(cell_id=len(dicts.cells), lat=lat, lon=lon)
            dicts.cells.intern(cell_hash)
        except MalformedRowError as e:
            report.add(line_no, e.reason)
            continue
        cells.append(cell)
        report.records_out += 1

    report.log()
    report.check_threshold(config.max_error_rate)
    logger.info(f"📥 Ingested {len(cells):,} cells from {path}")
    return CellTable.from_cells(cells), report


def _parse_enum(enum_cls, text: str, label: str, optional: bool = False):
    value = text.strip().lower()
    if not value and optional:
        return None
    try:
        return enum_cls(value)
    except ValueError:
        raise MalformedRowError(f"invalid {label}: {text!r}")


def ingest_devices(
    path: PathLike, dicts: Dictionaries, config: Optional[IngestConfig] = None
) -> Tuple[DeviceTable, RowErrorReport]:
    """Parse device.csv; empty age/gender fields mean unknown."""
    config = config or IngestConfig()
    report = RowErrorReport(source=str(path), max_samples=config.max_error_samples)
    devices: List[Device] = []

    for line_no, line in _iter_rows(path, DEVICE_HEADER):
        report.rows_in += 1
        try:
            fields = line.split(",")
            if len(fields) != 5:
                raise MalformedRowError("expected 5 fields")
            device_hash = fields[0].strip()
            if not device_hash:
                raise MalformedRowError("empty hash")
            if device_hash in dicts.devices:
                raise MalformedRowError("duplicate device hash")
            age_text = fields[1].strip()
            try:
                age = int(age_text) if age_text else None
            except ValueError:
                raise MalformedRowError(f"invalid age: {age_text!r}")
            device = Device(
                device_id=len(dicts.devices),
                age=age,
                gender=_parse_enum(Gender, fields[2], "gender", optional=True),
                customer_type=_parse_enum(CustomerType, fields[3], "customer_type"),
                subscription=_parse_enum(Subscription, fields[4], "subscription"),
            )
            dicts.devices.intern(device_hash)
        except MalformedRowError as e:
            report.add(line_no, e.reason)
            continue
        devices.append(device)
        report.records_out += 1

    report.log()
    report.check_threshold(config.max_error_rate)
    logger.info(f"📥 Ingested {len(devices):,} devices from {path}")
    return DeviceTable.from_devices(devices), report


def pad_devices(devices: DeviceTable, dicts: Dictionaries) -> DeviceTable:
    """Append unknown-demographics rows for devices interned from cdr.csv (lazy mode)."""
    missing = len(dicts.devices) - len(devices)
    if missing <= 0:
        return devices
    start = len(devices)
    return DeviceTable(
        device_id=np.concatenate([devices.device_id, np.arange(start, start + missing)]),
        age=np.concatenate([devices.age, np.full(missing, -1)]),
        gender=np.concatenate([devices.gender, np.zeros(missing)]),
        customer_type=np.concatenate([devices.customer_type, np.zeros(missing)]),
        subscription=np.concatenate([devices.subscription, np.zeros(missing)]),
    )


@dataclass
class IngestResult:
    """三张原始表的摄取结果"""

    cdrs: CdrTable
    cells: CellTable
    devices: DeviceTable
    dicts: Dictionaries
    reports: List[RowErrorReport]


def ingest_all(
    cdr_path: PathLike,
    cell_path: PathLike,
    device_path: PathLike,
    config: Optional[IngestConfig] = None,
    threads: int = 1,
) -> IngestResult:
    """Cells and devices first so that CDR foreign keys resolve."""
    dicts = Dictionaries()
    cells, cell_report = ingest_cells(cell_path, dicts, config)
    devices, device_report = ingest_devices(device_path, dicts, config)
    cdrs, cdr_report = ingest_cdrs(cdr_path, dicts, config, threads=threads)
    devices = pad_devices(devices, dicts)
    return IngestResult(cdrs, cells, devices, dicts, [cell_report, device_report, cdr_report])
