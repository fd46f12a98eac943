"""
事件阶段

filter-event: 种子几何 + 缓冲区选出基站, 取出席窗口内的记录写成子集存储;
threshold: 剔除窗口内活动不足的基站。事件定义保存在子集存储的 meta 表中。
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.core.config import load_event_config, load_seed_config
from cdrtool.core.store import CdrStore, persist_subset
from cdrtool.event.window import EventSpec, apply_activity_threshold, attendance_window, filter_event
from cdrtool.geo.distance import select_buffer_stations
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.stages.common import event_meta, spec_from_meta, store_tz, write_json

logger = logging.getLogger(__name__)


class FilterEventStage(Stage):
    """
    config keys: store, seeds, event, out, min_activity (optional override)
    """

    stage_type = "filter-event"

    def __init__(self, config: Dict[str, Any], name: str = "filter-event"):
        super().__init__(name, config)

    def inputs(self) -> List[Path]:
        return [self.path("store"), self.path("seeds"), self.path("event")]

    def outputs(self) -> List[Path]:
        return [self.path("out")]

    def run(self, context: StageContext) -> StageResult:
        seeds = load_seed_config(self.path("seeds"))
        event_config = load_event_config(self.path("event"))
        if self.config.get("min_activity") is not None:
            event_config.min_activity = int(self.config["min_activity"])

        with CdrStore(self.path("store")) as store:
            tz = store_tz(store)
            selected = select_buffer_stations(
                store.load_stations(), seeds.seed_station_ids, seeds.seed_polyline, seeds.radius_m
            )
            spec = EventSpec.from_config(event_config, selected, tz)
            event_cdrs = filter_event(store, spec)
            persist_subset(context.staged(self.path("out")), store, event_cdrs, event_meta(spec, tz))

        w0, w1 = attendance_window(spec)
        return StageResult(
            row_counts={"stations": len(spec.stations), "event_records": len(event_cdrs)},
            artifacts=[str(self.path("out"))],
            metadata={"stations": sorted(spec.stations), "window": [w0, w1], "radius_m": seeds.radius_m},
        )


class ThresholdStage(Stage):
    """
    config keys: store (event subset), out, report (optional JSON)
    """

    stage_type = "threshold"

    def __init__(self, config: Dict[str, Any], name: str = "threshold"):
        super().__init__(name, config)

    def inputs(self) -> List[Path]:
        return [self.path("store")]

    def outputs(self) -> List[Path]:
        outputs = [self.path("out")]
        if self.optional_path("report"):
            outputs.append(self.path("report"))
        return outputs

    def run(self, context: StageContext) -> StageResult:
        with CdrStore(self.path("store")) as store:
            spec = spec_from_meta(store)
            tz = store_tz(store)
            event_cdrs = store.load_cdrs()
            result = apply_activity_threshold(event_cdrs, spec)
            kept_spec = spec.with_stations(result.kept_stations)
            persist_subset(context.staged(self.path("out")), store, result.cdrs, event_meta(kept_spec, tz))

        w0, w1 = attendance_window(spec)
        summary = {
            **result.to_dict(),
            "window": [w0, w1],
            "min_activity": spec.min_activity,
            "counts": {str(k): v for k, v in sorted(result.counts.items())},
            "records_in": len(event_cdrs),
        }
        artifacts = [str(self.path("out"))]
        if self.optional_path("report"):
            write_json(summary, context.staged(self.path("report")))
            artifacts.append(str(self.path("report")))

        return StageResult(
            row_counts={
                "records_in": len(event_cdrs),
                "records_out": len(result.cdrs),
                "kept_stations": len(result.kept_stations),
                "removed_stations": len(result.removed_stations),
                "kept_station_total": sum(result.counts[s] for s in result.kept_stations),
                "removed_station_total": sum(result.removed_stations.values()),
            },
            artifacts=artifacts,
            metadata={"removed_stations": summary["removed_stations"]},
        )
