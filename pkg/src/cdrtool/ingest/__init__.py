"""
CDR、小区与设备三张原始表的解析、清洗与稠密化。
"""

from .cleaning import clean_line, intern_id, parse_timestamp, parse_timestamps, truncate_coord
from .readers import (
    IngestResult,
    RowErrorReport,
    ingest_all,
    ingest_cdrs,
    ingest_cells,
    ingest_devices,
)
from .records import (
    Cell,
    CdrRecord,
    CdrTable,
    CellTable,
    Device,
    DeviceTable,
    Dictionaries,
    IdDictionary,
    RawCdrRow,
)

__all__ = [
    "clean_line",
    "truncate_coord",
    "intern_id",
    "parse_timestamp",
    "parse_timestamps",
    "ingest_cdrs",
    "ingest_cells",
    "ingest_devices",
    "ingest_all",
    "IngestResult",
    "RowErrorReport",
    "RawCdrRow",
    "CdrRecord",
    "CdrTable",
    "Cell",
    "CellTable",
    "Device",
    "DeviceTable",
    "IdDictionary",
    "Dictionaries",
]
