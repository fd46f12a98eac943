"""Price vs. age scatter of station means, coloured by city area."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from matplotlib.axes import Axes
from matplotlib.collections import PathCollection
from matplotlib.figure import Figure

from cdrtool.analytics.stats import UNLABELED, CorrelationPoint, CorrelationReport
from cdrtool.core.config import VizConfig
from cdrtool.viz.common import new_figure, save_svg

logger = logging.getLogger(__name__)

PRICE_LABEL = "Mean phone price (EUR)"
AGE_LABEL = "Mean phone age (months)"


@dataclass
class ScatterResult:
    figure: Figure
    axes: Axes
    collections: Dict[str, PathCollection] = field(default_factory=dict)
    svg_path: Optional[Path] = None

    @property
    def n_markers(self) -> int:
        return sum(len(c.get_offsets()) for c in self.collections.values())


def area_color(area: Optional[str], config: VizConfig) -> str:
    if not area:
        return config.default_color
    return config.area_colors.get(area, config.default_color)


def render_scatter(
    report: CorrelationReport,
    svg_path: Optional[Union[str, Path]] = None,
    config: Optional[VizConfig] = None,
) -> ScatterResult:
    """One marker per station: x = mean price, y = mean age, with r annotated."""
    config = config or VizConfig()
    figure = new_figure(config)
    ax = figure.add_subplot(1, 1, 1)

    groups: Dict[str, List[CorrelationPoint]] = {}
    for point in report.points:
        groups.setdefault(point.area or UNLABELED, []).append(point)

    collections = {}
    for area in sorted(groups):
        points = groups[area]
        collections[area] = ax.scatter(
            [p.mean_price_eur for p in points],
            [p.mean_age_months for p in points],
            color=area_color(None if area == UNLABELED else area, config),
            label=area,
            s=36,
            edgecolors="none",
        )
    ax.set_xlabel(PRICE_LABEL)
    ax.set_ylabel(AGE_LABEL)
    ax.text(
        0.98, 0.98, f"Pearson's r = {report.r:.4f} (n = {report.n})",
        transform=ax.transAxes, ha="right", va="top",
    )
    if collections:
        ax.legend(loc="lower left")
    ax.grid(True, alpha=0.3)

    result = ScatterResult(figure=figure, axes=ax, collections=collections)
    if svg_path is not None:
        result.svg_path = save_svg(figure, svg_path)
    logger.info(f"🎯 Rendered scatter of {result.n_markers} stations")
    return result
