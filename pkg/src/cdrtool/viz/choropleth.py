"""
Voronoi 分级设色图

每个基站多边形按平均价格或平均手机年龄着色, 值越高颜色越深;
没有指标的基站用白底斜线标记。同时输出带数值的 GeoJSON。
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from matplotlib import colors as mcolors
from matplotlib.cm import ScalarMappable
from matplotlib.collections import PolyCollection
from matplotlib.figure import Figure
from matplotlib.patches import Patch

from cdrtool.analytics.aggregate import StationAggregate
from cdrtool.core.config import VizConfig
from cdrtool.geo.geojson import polygons_to_geojson
from cdrtool.geo.voronoi import VoronoiCellPolygon
from cdrtool.utils.exceptions import ArgumentError, DataQualityError
from cdrtool.viz.common import color_ramp, new_figure, save_svg

logger = logging.getLogger(__name__)


class Indicator(Enum):
    """可视化的社会经济指标"""

    PRICE = "price"
    AGE = "age"

    @property
    def attribute(self) -> str:
        return "mean_price_eur" if self is Indicator.PRICE else "mean_age_months"

    @property
    def label(self) -> str:
        return "Mean phone price (EUR)" if self is Indicator.PRICE else "Mean phone age (months)"


@dataclass
class ChoroplethResult:
    """渲染结果, 便于检查颜色与数值"""

    figure: Figure
    values: Dict[int, Optional[float]]
    colors: Dict[int, Tuple[float, float, float, float]] = field(default_factory=dict)
    vmin: float = 0.0
    vmax: float = 0.0
    svg_path: Optional[Path] = None
    geojson_path: Optional[Path] = None


def _lonlat_ring(polygon: VoronoiCellPolygon) -> List[Tuple[float, float]]:
    return [(lon, lat) for lat, lon in polygon.ring]


def render_choropleth(
    polygons: Sequence[VoronoiCellPolygon],
    aggregates: Sequence[StationAggregate],
    indicator: Union[Indicator, str],
    svg_path: Optional[Union[str, Path]] = None,
    geojson_path: Optional[Union[str, Path]] = None,
    config: Optional[VizConfig] = None,
) -> ChoroplethResult:
    """
    Colour each station polygon by its indicator value.

    Raises:
        ArgumentError: an aggregate's station has no polygon
        DataQualityError: no station carries the indicator
    """
    config = config or VizConfig()
    indicator = Indicator(indicator)
    polygon_ids = {p.station_id for p in polygons}
    missing = sorted(a.station_id for a in aggregates if a.station_id not in polygon_ids)
    if missing:
        raise ArgumentError(f"stations without a Voronoi polygon: {missing[:10]}")

    by_station = {a.station_id: a for a in aggregates}
    values: Dict[int, Optional[float]] = {}
    for polygon in polygons:
        agg = by_station.get(polygon.station_id)
        values[polygon.station_id] = getattr(agg, indicator.attribute) if agg is not None else None
    present = [v for v in values.values() if v is not None]
    if not present:
        raise DataQualityError(f"no station has a {indicator.value} value to map")

    vmin, vmax = float(min(present)), float(max(present))
    norm = mcolors.Normalize(vmin=vmin, vmax=vmax if vmax > vmin else vmin + 1.0)
    cmap = color_ramp(config.colormap)

    figure = new_figure(config)
    ax = figure.add_subplot(1, 1, 1)
    with_data = [p for p in polygons if values[p.station_id] is not None]
    no_data = [p for p in polygons if values[p.station_id] is None]

    colors = {p.station_id: tuple(cmap(norm(values[p.station_id]))) for p in with_data}
    ax.add_collection(
        PolyCollection(
            [_lonlat_ring(p) for p in with_data],
            facecolors=[colors[p.station_id] for p in with_data],
            edgecolors="#404040",
            linewidths=0.4,
        )
    )
    if no_data:
        ax.add_collection(
            PolyCollection(
                [_lonlat_ring(p) for p in no_data],
                facecolors=config.no_data_color,
                edgecolors="#404040",
                linewidths=0.4,
                hatch=config.no_data_hatch,
            )
        )
        ax.legend(
            handles=[Patch(facecolor=config.no_data_color, edgecolor="#404040", hatch=config.no_data_hatch, label="no data")],
            loc="lower right",
        )

    lons = np.array([lon for p in polygons for lat, lon in p.ring])
    lats = np.array([lat for p in polygons for lat, lon in p.ring])
    ax.set_xlim(lons.min(), lons.max())
    ax.set_ylim(lats.min(), lats.max())
    ax.set_aspect(1.0 / np.cos(np.radians(lats.mean())))
    ax.set_xlabel("Longitude")
    ax.set_ylabel("Latitude")
    ax.set_title(f"{indicator.label} by base station")
    figure.colorbar(ScalarMappable(norm=norm, cmap=cmap), ax=ax, label=indicator.label)

    result = ChoroplethResult(figure=figure, values=values, colors=colors, vmin=vmin, vmax=vmax)
    if svg_path is not None:
        result.svg_path = save_svg(figure, svg_path)
    if geojson_path is not None:
        properties = {}
        for p in polygons:
            agg = by_station.get(p.station_id)
            color = colors.get(p.station_id)
            properties[p.station_id] = {
                "indicator": indicator.value,
                "value": values[p.station_id],
                "n_total": agg.n_total if agg else 0,
                "n_with_ses": agg.n_with_ses if agg else 0,
                "fill": mcolors.to_hex(color) if color else None,
            }
        collection = polygons_to_geojson(polygons, properties)
        collection.write(geojson_path)
        result.geojson_path = Path(geojson_path)
    logger.info(
        f"🗺️ Rendered {indicator.value} choropleth: {len(with_data)} stations with data, {len(no_data)} without"
    )
    return result
