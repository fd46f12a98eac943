"""
绘图阶段: choropleth | scatter | series
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.analytics.aggregate import read_aggregates_csv
from cdrtool.analytics.series import POOLED, read_series_csv
from cdrtool.analytics.stats import CorrelationReport
from cdrtool.core.config import VizConfig
from cdrtool.core.store import CdrStore
from cdrtool.event.window import attendance_window
from cdrtool.geo.voronoi import voronoi
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.stages.common import spec_from_meta, station_bbox, store_tz
from cdrtool.utils.exceptions import ConfigurationError
from cdrtool.viz.choropleth import Indicator, render_choropleth
from cdrtool.viz.scatter import render_scatter
from cdrtool.viz.series import render_series

logger = logging.getLogger(__name__)

RENDER_KINDS = ("choropleth", "scatter", "series")


class RenderStage(Stage):
    """
    config keys by kind:
      choropleth: store (merged, for the Voronoi sites), aggregates, indicator
        (price | age), out (SVG), geojson (optional), bbox
      scatter: report, out
      series: series (CSV), out, window_from (optional event subset),
        labels (series to draw, default the pooled one), time_of_day
    all kinds: viz (VizConfig)
    """

    stage_type = "render"

    def __init__(self, config: Dict[str, Any], name: str = "render"):
        super().__init__(name, config)
        self.kind = config.get("kind")
        if self.kind not in RENDER_KINDS:
            raise ConfigurationError(f"render kind must be one of {', '.join(RENDER_KINDS)}, got {self.kind!r}")
        self.viz_config: VizConfig = config.get("viz") or VizConfig()

    def inputs(self) -> List[Path]:
        if self.kind == "choropleth":
            return [self.path("store"), self.path("aggregates")]
        if self.kind == "scatter":
            return [self.path("report")]
        inputs = [self.path("series")]
        if self.optional_path("window_from"):
            inputs.append(self.path("window_from"))
        return inputs

    def outputs(self) -> List[Path]:
        outputs = [self.path("out")]
        if self.kind == "choropleth" and self.optional_path("geojson"):
            outputs.append(self.path("geojson"))
        return outputs

    def run(self, context: StageContext) -> StageResult:
        if self.kind == "choropleth":
            return self._choropleth(context)
        if self.kind == "scatter":
            return self._scatter(context)
        return self._series(context)

    def _choropleth(self, context: StageContext) -> StageResult:
        with CdrStore(self.path("store")) as store:
            stations = store.load_stations()
        polygons = voronoi(stations, station_bbox(stations, self.config.get("bbox")))
        aggregates = read_aggregates_csv(self.path("aggregates"))
        geojson = self.optional_path("geojson")
        result = render_choropleth(
            polygons,
            aggregates,
            Indicator(self.config.get("indicator", "price")),
            svg_path=context.staged(self.path("out")),
            geojson_path=context.staged(geojson) if geojson else None,
            config=self.viz_config,
        )
        with_data = sum(v is not None for v in result.values.values())
        return StageResult(
            row_counts={"polygons": len(polygons), "with_data": with_data, "no_data": len(polygons) - with_data},
            artifacts=[str(p) for p in self.outputs()],
            metadata={"vmin": result.vmin, "vmax": result.vmax},
        )

    def _scatter(self, context: StageContext) -> StageResult:
        report = CorrelationReport.read_json(self.path("report"))
        result = render_scatter(report, svg_path=context.staged(self.path("out")), config=self.viz_config)
        return StageResult(row_counts={"markers": result.n_markers}, artifacts=[str(self.path("out"))])

    def _series(self, context: StageContext) -> StageResult:
        series = read_series_csv(self.path("series"))
        time_of_day = bool(self.config.get("time_of_day", False))
        wanted = self.config.get("labels")
        if wanted is None and not time_of_day:
            wanted = [POOLED]
        if wanted is not None:
            series = [s for s in series if s.label in set(wanted)]

        window = None
        tz = self.config.get("tz", "Europe/Budapest")
        if self.optional_path("window_from"):
            with CdrStore(self.path("window_from")) as subset:
                window = attendance_window(spec_from_meta(subset))
                tz = store_tz(subset, tz)
        render_series(
            series,
            svg_path=context.staged(self.path("out")),
            window=window,
            tz=tz,
            time_of_day=time_of_day,
            config=self.viz_config,
        )
        return StageResult(row_counts={"series": len(series)}, artifacts=[str(self.path("out"))])
