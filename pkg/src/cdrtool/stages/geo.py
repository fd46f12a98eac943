"""
基站合并阶段

把同一位置的小区合并成基站并回写存储(原子替换), 可选输出 Voronoi GeoJSON。
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.core.store import CdrStore
from cdrtool.geo.geojson import polygons_to_geojson
from cdrtool.geo.stations import merge_cells
from cdrtool.geo.voronoi import voronoi
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.stages.common import copy_store, station_bbox

logger = logging.getLogger(__name__)


class MergeCellsStage(Stage):
    """
    config keys: store, out (defaults to store), voronoi (optional GeoJSON), bbox
    """

    stage_type = "merge-cells"

    def __init__(self, config: Dict[str, Any], name: str = "merge-cells"):
        super().__init__(name, config)

    def _out(self) -> Path:
        return self.optional_path("out") or self.path("store")

    def inputs(self) -> List[Path]:
        return [self.path("store")]

    def outputs(self) -> List[Path]:
        outputs = [self._out()]
        if self.optional_path("voronoi"):
            outputs.append(self.path("voronoi"))
        return outputs

    def run(self, context: StageContext) -> StageResult:
        target = copy_store(self.path("store"), context.staged(self._out()))
        with CdrStore(target, writable=True) as store:
            cells = store.load_cells()
            stations, cell_to_station = merge_cells(cells)
            store.write_stations(stations, cell_to_station)
            counts = store.station_counts()
            n_records = store.counts()["cdr"]

        artifacts = [str(self._out())]
        if self.optional_path("voronoi"):
            polygons = voronoi(stations, station_bbox(stations, self.config.get("bbox")))
            polygons_to_geojson(polygons).write(context.staged(self.path("voronoi")))
            artifacts.append(str(self.path("voronoi")))

        return StageResult(
            row_counts={
                "cells": len(cells),
                "stations": len(stations),
                "records": int(n_records),
                "station_total": int(counts["n_records"].sum()),
            },
            artifacts=artifacts,
        )
