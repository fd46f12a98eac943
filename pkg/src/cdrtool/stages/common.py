"""阶段之间共用的小工具"""

import json
import shutil
from pathlib import Path
from typing import Dict, Optional

from cdrtool.core.config import BoundingBoxConfig
from cdrtool.core.store import CdrStore
from cdrtool.event.window import EventSpec
from cdrtool.geo.stations import StationTable
from cdrtool.geo.voronoi import BoundingBox
from cdrtool.utils.exceptions import ConfigurationError


def copy_store(source: Path, target: Path) -> Path:
    """Start an in-place update from a private copy; the original stays readable."""
    target.parent.mkdir(parents=True, exist_ok=True)
    if Path(source).resolve() != Path(target).resolve():
        shutil.copyfile(source, target)
    return target


def station_bbox(stations: StationTable, config: Optional[BoundingBoxConfig] = None) -> BoundingBox:
    if config is not None:
        return BoundingBox(config.min_lat, config.max_lat, config.min_lon, config.max_lon)
    return BoundingBox.around(stations.lat, stations.lon)


def event_meta(spec: EventSpec, tz: str) -> Dict[str, str]:
    """Store meta entries that let later stages rebuild the event spec."""
    return {
        "tz": tz,
        "event_stations": json.dumps(sorted(spec.stations)),
        "event_t_start": str(spec.t_start),
        "event_t_end": str(spec.t_end),
        "event_margin_s": str(spec.margin_s),
        "event_min_activity": str(spec.min_activity),
    }


def spec_from_meta(store: CdrStore) -> EventSpec:
    meta = store.meta()
    if "event_stations" not in meta:
        raise ConfigurationError(f"{store.path} is not an event subset; run filter-event first")
    return EventSpec(
        stations=frozenset(json.loads(meta["event_stations"])),
        t_start=int(meta["event_t_start"]),
        t_end=int(meta["event_t_end"]),
        margin_s=int(meta["event_margin_s"]),
        min_activity=int(meta["event_min_activity"]),
    )


def store_tz(store: CdrStore, fallback: str = "Europe/Budapest") -> str:
    return store.meta().get("tz", fallback)


def write_json(data, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
