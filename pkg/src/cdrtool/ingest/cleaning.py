"""
清洗原语

去除行尾空白、截断坐标精度、哈希 ID 稠密化与本地时间到 UTC 纪元秒的转换。
"""

from datetime import datetime, timezone
from decimal import ROUND_DOWN, Decimal, InvalidOperation
from functools import lru_cache
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np
import pandas as pd

from cdrtool.ingest.records import IdDictionary
from cdrtool.utils.exceptions import (
    ArgumentError,
    ConfigurationError,
    MalformedRowError,
)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
TRAILING_WHITESPACE = " \t\r\n"
MAX_ABS_DEGREES = 180

_EPOCH = pd.Timestamp(0, tz="UTC")
INVALID_TS = np.iinfo(np.int64).min


def clean_line(raw: str) -> str:
    """Strip trailing spaces, tabs and carriage returns; keep everything else."""
    return raw.rstrip(TRAILING_WHITESPACE)


def truncate_coord(value: str | float, places: int = 6) -> float:
    """
    Drop decimal digits past ``places`` without rounding (toward zero).

    Decimal arithmetic keeps string inputs exact, so 13-digit source
    coordinates never pick up binary rounding before the cut.
    """
    if places < 0:
        raise ArgumentError("places must be >= 0")
    try:
        number = Decimal(str(value).strip())
    except InvalidOperation:
        raise MalformedRowError(f"not a number: {value!r}")
    if not number.is_finite():
        raise MalformedRowError(f"not a finite number: {value!r}")
    if abs(number) > MAX_ABS_DEGREES:
        raise MalformedRowError(f"coordinate out of range: {value!r}")
    try:
        truncated = number.quantize(Decimal(1).scaleb(-places), rounding=ROUND_DOWN)
    except InvalidOperation:
        raise MalformedRowError(f"coordinate out of range: {value!r}")
    # -0.0 -> 0.0
    return float(truncated) + 0.0


def intern_id(dictionary: IdDictionary, hash_value: str) -> int:
    """Return the dense id of ``hash_value``, assigning the next one if new."""
    return dictionary.intern(hash_value)


@lru_cache(maxsize=32)
def resolve_zone(zone: str) -> ZoneInfo:
    try:
        return ZoneInfo(zone)
    except (ZoneInfoNotFoundError, ValueError):
        raise ConfigurationError(f"unknown time zone: {zone}")


def parse_timestamp(text: str, zone: str = "Europe/Budapest") -> int:
    """
    Parse a local ``YYYY-MM-DD HH:MM:SS`` wall-clock time to epoch seconds.

    Ambiguous wall-clock times resolve to the first occurrence (fold=0);
    times inside a spring-forward gap never happened and are rejected.
    """
    tz = resolve_zone(zone)
    try:
        naive = datetime.strptime(text.strip(), TIMESTAMP_FORMAT)
    except (ValueError, AttributeError):
        raise MalformedRowError(f"unparseable timestamp: {text!r}")
    aware = naive.replace(tzinfo=tz)
    if aware.astimezone(timezone.utc).astimezone(tz).replace(tzinfo=None) != naive:
        raise MalformedRowError(f"nonexistent local time: {text!r}")
    return int(aware.timestamp())


def parse_timestamps(texts: pd.Series, zone: str = "Europe/Budapest") -> np.ndarray:
    """
    Vectorized ``parse_timestamp``.

    Returns int64 epoch seconds; unparseable entries and times inside a
    DST gap come back as ``INVALID_TS`` so callers can mask them as row errors.
    """
    resolve_zone(zone)
    parsed = pd.to_datetime(texts.str.strip(), format=TIMESTAMP_FORMAT, errors="coerce")
    # fold=0: DST side for repeated hours
    localized = parsed.dt.tz_localize(zone, ambiguous=np.ones(len(parsed), dtype=bool), nonexistent="NaT")
    out = np.full(len(texts), INVALID_TS, dtype=np.int64)
    valid = localized.notna().to_numpy()
    if valid.any():
        delta = localized[valid] - _EPOCH
        out[valid] = (delta // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)
    return out
