"""
合成城市生成器

按场景配置生成 cdr.csv / cell.csv / device.csv / tacdb.csv 与 ground_truth.json,
并附带可直接用于流水线的 seeds.json / event.json / areas.json。

随机流: 根SeedSequence 派生 city / devices / traffic 三条全局流和每个基站一条子流,
因此每个基站的记录与其它基站的生成顺序无关。
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from cdrtool.analytics.stats import pearson
from cdrtool.core.config import parse_year_month
from cdrtool.geo.distance import haversine_array, select_buffer_stations
from cdrtool.geo.stations import StationTable
from cdrtool.ingest.cleaning import parse_timestamp
from cdrtool.ingest.records import CDR_HEADER, CELL_HEADER, DEVICE_HEADER
from cdrtool.fusion.tac import TACDB_HEADER
from cdrtool.synth.scenario import ScenarioConfig
from cdrtool.utils.exceptions import ConfigurationError, UndefinedCorrelationError

logger = logging.getLogger(__name__)

GROUND_TRUTH_VERSION = 1
TAC_BASE = 35_000_000
MAX_EXTRA_CELLS = 3
SITE_MARGIN = 0.05  # 基站离边界框边缘至少保留的比例


@dataclass
class GenerationResult:
    """生成的文件与真值"""

    out_dir: Path
    files: Dict[str, Path] = field(default_factory=dict)
    ground_truth: Dict[str, Any] = field(default_factory=dict)


def _hash(seed: int, kind: str, index: int) -> str:
    return hashlib.blake2b(f"{seed}:{kind}:{index}".encode(), digest_size=10).hexdigest()


def _planted_means(rng: np.random.Generator, config: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Station mean price and age whose sample correlation is exactly ``rho``
    (before clipping): orthonormal directions z1, z2 and y = rho*z1 + sqrt(1-rho^2)*z2.
    """
    ses = config.ses
    n = config.n_stations
    z = rng.standard_normal((n, 2))
    z1 = z[:, 0] - z[:, 0].mean()
    z1 /= np.linalg.norm(z1)
    z2 = z[:, 1] - z[:, 1].mean()
    z2 -= np.dot(z2, z1) * z1
    z2 /= np.linalg.norm(z2)
    w = ses.rho * z1 + np.sqrt(1.0 - ses.rho**2) * z2
    # unit-norm centered vectors scaled to unit sample sd
    scale = np.sqrt(n - 1)
    price = ses.price_mean + ses.price_sd * scale * z1
    age = ses.age_mean + ses.age_sd * scale * w
    return np.maximum(price, 2 * ses.min_price), np.maximum(age, ses.min_age + 1.0)


def _six_decimals(values: np.ndarray) -> np.ndarray:
    """Round-trip through the printed form so coordinates equal what ingest reads."""
    return np.array([float(f"{v:.6f}") for v in values])


def _sites(rng: np.random.Generator, config: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct station sites at six-decimal precision, away from the bbox edges."""
    box = config.bbox
    lat_pad = (box.max_lat - box.min_lat) * SITE_MARGIN
    lon_pad = (box.max_lon - box.min_lon) * SITE_MARGIN
    while True:
        lat = _six_decimals(rng.uniform(box.min_lat + lat_pad, box.max_lat - lat_pad, config.n_stations))
        lon = _six_decimals(rng.uniform(box.min_lon + lon_pad, box.max_lon - lon_pad, config.n_stations))
        if len(np.unique(np.column_stack([lat, lon]), axis=0)) == config.n_stations:
            return lat, lon


def _area_labels(lat: np.ndarray, lon: np.ndarray, config: ScenarioConfig) -> List[str]:
    areas = config.areas
    castle = haversine_array(lat, lon, areas.castle_lat, areas.castle_lon) <= areas.castle_radius_m
    return [
        areas.castle if in_castle else (areas.west if x < config.river else areas.east)
        for in_castle, x in zip(castle, lon)
    ]


def _release_months(ages: np.ndarray, reference: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    total = reference[0] * 12 + (reference[1] - 1) - ages
    return total // 12, total % 12 + 1


def _write_csv(frame: pd.DataFrame, path: Path, header: str) -> Path:
    frame[header.split(",")].to_csv(path, index=False, lineterminator="\n")
    return path


def _write_json(data: Any, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def generate(config: ScenarioConfig, out_dir: Union[str, Path]) -> GenerationResult:
    """
    Generate a synthetic city into ``out_dir``.

    Deterministic for a fixed config: the same seed gives byte-identical files.

    Raises:
        ConfigurationError: invalid or infeasible scenario
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_stations = config.n_stations
    reference = parse_year_month(config.reference)

    root = np.random.SeedSequence(config.seed)
    city_ss, device_ss, traffic_ss, *station_ss = root.spawn(3 + n_stations)
    city = np.random.default_rng(city_ss)
    device_rng = np.random.default_rng(device_ss)
    traffic = np.random.default_rng(traffic_ss)

    # ---- stations and cells ----
    lat, lon = _sites(city, config)
    price_means, age_means = _planted_means(city, config)
    n_cells = 1 + city.binomial(MAX_EXTRA_CELLS, config.duplicate_cell_rate, n_stations)
    cell_station = np.repeat(np.arange(n_stations), n_cells)
    cell_hashes = np.array([_hash(config.seed, "cell", i) for i in range(len(cell_station))], dtype=object)
    areas = _area_labels(lat, lon, config)

    # ---- event area ----
    stations = StationTable(station_id=np.arange(n_stations), lat=lat, lon=lon)
    polyline = [[config.bbox.min_lat, config.river], [config.bbox.max_lat, config.river]]
    event_stations = sorted(select_buffer_stations(stations, (), polyline, config.event.radius_m))
    quiet = sorted(city.permutation(event_stations)[: config.event.n_quiet].tolist()) if event_stations else []
    w0 = parse_timestamp(config.event.show_start, config.tz) - int(round(config.event.margin_min * 60))
    w1 = parse_timestamp(config.event.show_end, config.tz) + int(round(config.event.margin_min * 60))

    # ---- devices and phones ----
    n_devices = config.n_devices
    home = device_rng.permutation(
        np.concatenate([np.arange(n_stations), device_rng.integers(0, n_stations, n_devices - n_stations)])
    )
    ses = config.ses
    price = np.round(np.maximum(device_rng.normal(price_means[home], ses.device_price_sd), ses.min_price), 2)
    phone_age = np.maximum(np.rint(device_rng.normal(age_means[home], ses.device_age_sd)), ses.min_age).astype(np.int64)
    anomalous = device_rng.random(n_devices) < config.anomaly_rate
    phone_age[anomalous] = -device_rng.integers(1, 7, int(anomalous.sum()))
    in_tacdb = device_rng.random(n_devices) < config.tac_coverage
    activity = device_rng.lognormal(0.0, config.activity_sigma, n_devices)

    person_age = device_rng.integers(16, 81, n_devices)
    gender = np.where(device_rng.random(n_devices) < 0.5, "male", "female").astype(object)
    missing = device_rng.random(n_devices) < config.missing_demographics_rate
    business = device_rng.random(n_devices) < 0.1
    postpaid = device_rng.random(n_devices) < 0.6
    device_hashes = np.array([_hash(config.seed, "device", i) for i in range(n_devices)], dtype=object)
    tacs = TAC_BASE + np.arange(n_devices)

    # ---- traffic ----
    t_start = parse_timestamp(config.dataset_start, config.tz)
    t_end = parse_timestamp(config.dataset_end, config.tz)
    minutes = t_start + 60 * np.arange((t_end - t_start) // 60, dtype=np.int64)
    local = pd.to_datetime(minutes, unit="s", utc=True).tz_convert(config.tz)
    hour_weight = np.asarray(config.diurnal, dtype=np.float64)[local.hour.to_numpy()]
    in_window = (minutes >= w0) & (minutes < w1)
    base = city.gamma(4.0, 0.25, n_stations)
    base[quiet] *= config.event.quiet_factor

    is_event = np.zeros(n_stations, dtype=bool)
    is_event[event_stations] = True
    weights = np.outer(base, hour_weight)
    weights[np.ix_(is_event, in_window)] *= config.event.rate_multiplier
    station_totals = traffic.multinomial(config.n_cdrs, weights.sum(axis=1) / weights.sum())

    ts_parts, device_parts, cell_parts = [], [], []
    station_devices = [np.flatnonzero(home == s) for s in range(n_stations)]
    station_cells = [np.flatnonzero(cell_station == s) for s in range(n_stations)]
    for s in range(n_stations):
        rng = np.random.default_rng(station_ss[s])
        total = int(station_totals[s])
        per_minute = rng.multinomial(total, weights[s] / weights[s].sum())
        ts_parts.append(np.repeat(minutes, per_minute) + rng.integers(0, 60, total))
        members = station_devices[s]
        p = activity[members] / activity[members].sum()
        device_parts.append(rng.choice(members, size=total, p=p))
        cell_parts.append(rng.choice(station_cells[s], size=total))

    ts = np.concatenate(ts_parts) if ts_parts else np.empty(0, dtype=np.int64)
    device = np.concatenate(device_parts) if device_parts else np.empty(0, dtype=np.int64)
    cell = np.concatenate(cell_parts) if cell_parts else np.empty(0, dtype=np.int64)
    record_station = np.repeat(np.arange(n_stations), station_totals)
    order = np.argsort(ts, kind="stable")
    ts, device, cell, record_station = ts[order], device[order], cell[order], record_station[order]

    # ---- files ----
    files: Dict[str, Path] = {}
    minute_prefix = local.strftime("%Y-%m-%d %H:%M:").to_numpy(dtype=str)
    seconds = np.array([f"{i:02d}" for i in range(60)])
    minute_index = (ts - t_start) // 60
    timestamps = np.char.add(minute_prefix[minute_index], seconds[(ts - t_start) % 60])
    tac_text = np.array([f"{t:08d}" for t in tacs], dtype=object)
    files["cdr"] = _write_csv(
        pd.DataFrame(
            {
                "timestamp": timestamps,
                "device_hash": device_hashes[device],
                "cell_hash": cell_hashes[cell],
                "tac": tac_text[device],
            }
        ),
        out_dir / "cdr.csv",
        CDR_HEADER,
    )
    files["cells"] = _write_csv(
        pd.DataFrame(
            {
                "cell_hash": cell_hashes,
                "lat": [f"{lat[s]:.6f}" for s in cell_station],
                "lon": [f"{lon[s]:.6f}" for s in cell_station],
            }
        ),
        out_dir / "cell.csv",
        CELL_HEADER,
    )
    files["devices"] = _write_csv(
        pd.DataFrame(
            {
                "device_hash": device_hashes,
                "age": np.where(missing, "", person_age.astype(str)),
                "gender": np.where(missing, "", gender),
                "customer_type": np.where(business, "business", "individual"),
                "subscription": np.where(postpaid, "postpaid", "prepaid"),
            }
        ),
        out_dir / "device.csv",
        DEVICE_HEADER,
    )
    release_year, release_month = _release_months(phone_age, reference)
    covered = np.flatnonzero(in_tacdb)
    files["tacdb"] = _write_csv(
        pd.DataFrame(
            {
                "tac": tac_text[covered],
                "brand": [f"Brand{i % 17}" for i in covered],
                "model": [f"Model-{i}" for i in covered],
                "release_year": release_year[covered],
                "release_month": release_month[covered],
                "price_eur": [f"{price[i]:.2f}" for i in covered],
            }
        ),
        out_dir / "tacdb.csv",
        TACDB_HEADER,
    )

    # ---- ground truth ----
    window_mask = (ts >= w0) & (ts < w1)
    window_counts = np.bincount(record_station[window_mask], minlength=n_stations)
    expected_kept = [s for s in event_stations if window_counts[s] >= config.event.min_activity]
    expected_removed = [s for s in event_stations if window_counts[s] < config.event.min_activity]
    valid_phone = in_tacdb & ~anomalous

    def planted_r(ids: List[int]):
        try:
            return pearson(list(zip(price_means[ids], age_means[ids]))) if len(ids) >= 2 else None
        except UndefinedCorrelationError:
            return None

    station_records = []
    for s in range(n_stations):
        members = station_devices[s]
        ok = members[valid_phone[members]]
        station_records.append(
            {
                "station_id": s,
                "lat": float(lat[s]),
                "lon": float(lon[s]),
                "area": areas[s],
                "cells": cell_hashes[station_cells[s]].tolist(),
                "n_home_devices": int(len(members)),
                "planted_mean_price_eur": float(price_means[s]),
                "planted_mean_age_months": float(age_means[s]),
                "device_mean_price_eur": float(price[ok].mean()) if len(ok) else None,
                "device_mean_age_months": float(phone_age[ok].mean()) if len(ok) else None,
                "n_records": int(station_totals[s]),
                "event": bool(is_event[s]),
            }
        )

    ground_truth = {
        "version": GROUND_TRUTH_VERSION,
        "seed": config.seed,
        "scenario": config.to_dict(),
        "stations": station_records,
        "cell_to_station": {h: int(s) for h, s in zip(cell_hashes, cell_station)},
        "planted_correlation": planted_r(list(range(n_stations))),
        "planted_correlation_event": planted_r(expected_kept),
        "event": {
            "window": [int(w0), int(w1)],
            "polyline": polyline,
            "radius_m": config.event.radius_m,
            "stations": event_stations,
            "quiet_stations": quiet,
            "window_counts": {str(s): int(window_counts[s]) for s in event_stations},
            "expected_kept": expected_kept,
            "expected_removed": expected_removed,
            "n_window_records": int(window_counts[event_stations].sum()) if event_stations else 0,
        },
        "counts": {
            "cdr": int(len(ts)),
            "cells": int(len(cell_hashes)),
            "stations": n_stations,
            "devices": n_devices,
            "tacdb": int(len(covered)),
            "anomalous_devices": int(anomalous.sum()),
            "missing_demographics": int(missing.sum()),
        },
        "tac_coverage": float(in_tacdb.mean()),
    }
    files["ground_truth"] = _write_json(ground_truth, out_dir / "ground_truth.json")
    files["seeds"] = _write_json({"seed_polyline": polyline, "radius_m": config.event.radius_m}, out_dir / "seeds.json")
    files["event"] = _write_json(
        {
            "show_start": config.event.show_start,
            "show_end": config.event.show_end,
            "margin_min": config.event.margin_min,
            "min_activity": config.event.min_activity,
        },
        out_dir / "event.json",
    )
    files["labels"] = _write_json({str(s): areas[s] for s in range(n_stations)}, out_dir / "areas.json")

    logger.info(
        f"🏙️ Generated {len(ts):,} CDRs, {len(cell_hashes)} cells on {n_stations} stations, "
        f"{n_devices:,} devices into {out_dir}"
    )
    return GenerationResult(out_dir=out_dir, files=files, ground_truth=ground_truth)


def load_ground_truth(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"ground truth not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))
