"""
分析阶段: 按基站聚合、活动时间序列与价格-年龄相关报告
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from cdrtool.analytics.aggregate import aggregate_station, read_aggregates_csv, write_aggregates_csv
from cdrtool.analytics.series import activity_series, daily_profiles, write_series_csv
from cdrtool.analytics.stats import correlation_report
from cdrtool.core.config import AnalyticsConfig, FusionConfig, load_area_labels, parse_year_month
from cdrtool.core.store import CdrStore
from cdrtool.fusion.tac import PhonePropertyTable, demote_anomalies, fuse, per_device_samples
from cdrtool.ingest.cleaning import parse_timestamp
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.stages.common import store_tz
from cdrtool.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def _event_stations(store: CdrStore) -> Optional[List[int]]:
    stations = store.meta().get("event_stations")
    return json.loads(stations) if stations else None


class AggregateStage(Stage):
    """
    config keys: store (event subset), out (aggregates.csv), per_device,
    fusion (FusionConfig), analytics (AnalyticsConfig)
    """

    stage_type = "aggregate"

    def __init__(self, config: Dict[str, Any], name: str = "aggregate"):
        super().__init__(name, config)
        self.fusion_config: FusionConfig = config.get("fusion") or FusionConfig()
        self.analytics_config: AnalyticsConfig = config.get("analytics") or AnalyticsConfig()
        per_device = config.get("per_device")
        self.per_device = self.fusion_config.per_device if per_device is None else bool(per_device)

    def inputs(self) -> List[Path]:
        return [self.path("store")]

    def outputs(self) -> List[Path]:
        return [self.path("out")]

    def run(self, context: StageContext) -> StageResult:
        with CdrStore(self.path("store")) as store:
            meta = store.meta()
            if "reference" not in meta:
                raise ConfigurationError(f"{store.path} has no phone properties; run fuse first")
            properties = store.load_phone_properties() or PhonePropertyTable.from_properties([])
            cdrs = store.load_cdrs()
            devices = store.load_devices()
            stations = _event_stations(store)

        samples, _ = fuse(cdrs, properties, parse_year_month(meta["reference"]))
        samples, n_anomalous = demote_anomalies(samples)
        if self.per_device:
            samples = per_device_samples(samples)

        aggregates = aggregate_station(
            samples, devices, self.analytics_config, stations=stations, threads=context.threads
        )
        write_aggregates_csv(aggregates, context.staged(self.path("out")))
        return StageResult(
            row_counts={
                "records": len(cdrs),
                "samples": len(samples),
                "anomalous": n_anomalous,
                "stations": len(aggregates),
                "n_total_sum": sum(a.n_total for a in aggregates),
                "n_with_ses_sum": sum(a.n_with_ses for a in aggregates),
            },
            artifacts=[str(self.path("out"))],
            metadata={"per_device": self.per_device, "reference": meta["reference"]},
        )


class SeriesStage(Stage):
    """
    config keys: store, out (series.csv), daily (optional CSV of per-day
    profiles), bin_width_s, stations_from (optional event subset whose
    stations restrict the series)
    """

    stage_type = "series"

    def __init__(self, config: Dict[str, Any], name: str = "series"):
        super().__init__(name, config)
        self.bin_width_s = int(config.get("bin_width_s") or AnalyticsConfig().bin_width_s)

    def inputs(self) -> List[Path]:
        inputs = [self.path("store")]
        if self.optional_path("stations_from"):
            inputs.append(self.path("stations_from"))
        return inputs

    def outputs(self) -> List[Path]:
        outputs = [self.path("out")]
        if self.optional_path("daily"):
            outputs.append(self.path("daily"))
        return outputs

    def run(self, context: StageContext) -> StageResult:
        stations = None
        if self.optional_path("stations_from"):
            with CdrStore(self.path("stations_from")) as subset:
                stations = _event_stations(subset)

        with CdrStore(self.path("store")) as store:
            meta = store.meta()
            tz = store_tz(store)
            cdrs = store.load_cdrs()
        if stations is not None:
            if cdrs.station_id is None:
                raise ConfigurationError(f"{self.path('store')} has no base stations; run merge-cells first")
            cdrs = cdrs.take(np.isin(cdrs.station_id, np.asarray(stations, dtype=np.int64)))

        start = end = None
        if "dataset_start" in meta and "dataset_end" in meta:
            start = parse_timestamp(meta["dataset_start"], tz)
            end = parse_timestamp(meta["dataset_end"], tz)
        series = activity_series(cdrs, self.bin_width_s, start=start, end=end)
        write_series_csv(series.all(), context.staged(self.path("out")))

        artifacts = [str(self.path("out"))]
        row_counts = {"records": len(cdrs), "binned": series.pooled.total, "per_station": len(series.per_station)}
        if self.optional_path("daily"):
            profiles = daily_profiles(cdrs, tz, self.bin_width_s)
            write_series_csv(list(profiles.values()), context.staged(self.path("daily")))
            artifacts.append(str(self.path("daily")))
            row_counts["days"] = len(profiles)
        return StageResult(
            row_counts=row_counts,
            artifacts=artifacts,
            metadata={"bin_width_s": self.bin_width_s, "tz": tz, "peak_bin": series.pooled.peak_bin()},
        )


class CorrelateStage(Stage):
    """
    config keys: aggregates, labels (optional areas.json), out (report.json)
    """

    stage_type = "correlate"

    def __init__(self, config: Dict[str, Any], name: str = "correlate"):
        super().__init__(name, config)

    def inputs(self) -> List[Path]:
        inputs = [self.path("aggregates")]
        if self.optional_path("labels"):
            inputs.append(self.path("labels"))
        return inputs

    def outputs(self) -> List[Path]:
        return [self.path("out")]

    def run(self, context: StageContext) -> StageResult:
        aggregates = read_aggregates_csv(self.path("aggregates"))
        labels = load_area_labels(self.optional_path("labels"))
        report = correlation_report(aggregates, labels)
        report.write_json(context.staged(self.path("out")))
        return StageResult(
            row_counts={"stations": len(aggregates), "points": report.n, "excluded": len(report.excluded_stations)},
            artifacts=[str(self.path("out"))],
            metadata={"r": report.r},
        )
