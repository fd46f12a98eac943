"""Activity time-series plot with the attendance window marked."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from matplotlib.axes import Axes
from matplotlib.figure import Figure
from matplotlib.lines import Line2D

from cdrtool.analytics.series import TimeSeries
from cdrtool.core.config import VizConfig
from cdrtool.utils.exceptions import ArgumentError
from cdrtool.viz.common import new_figure, save_svg

logger = logging.getLogger(__name__)


@dataclass
class SeriesPlotResult:
    figure: Figure
    axes: Axes
    lines: List[Line2D] = field(default_factory=list)
    rules: List[Line2D] = field(default_factory=list)
    svg_path: Optional[Path] = None


def _local_times(epochs: Sequence[int], tz: str):
    """Naive local datetimes for plotting."""
    stamps = pd.to_datetime(np.asarray(epochs, dtype=np.int64), unit="s", utc=True)
    return stamps.tz_convert(tz).tz_localize(None).to_pydatetime()


def _hours_of_day(epochs: Sequence[int], tz: str) -> np.ndarray:
    stamps = pd.to_datetime(np.asarray(epochs, dtype=np.int64), unit="s", utc=True).tz_convert(tz)
    midnight = stamps.normalize()
    return np.asarray((stamps - midnight) / pd.Timedelta(hours=1), dtype=np.float64)


def render_series(
    series: Sequence[TimeSeries],
    svg_path: Optional[Union[str, Path]] = None,
    window: Optional[Tuple[int, int]] = None,
    tz: str = "Europe/Budapest",
    time_of_day: bool = False,
    config: Optional[VizConfig] = None,
) -> SeriesPlotResult:
    """
    Step plot of each series, with vertical rules at the window bounds.

    Args:
        series: one or more series; a legend is drawn when there are several
        window: (w0, w1) epoch seconds of the attendance window
        time_of_day: x axis in local hours since midnight, for overlaying daily profiles
    """
    if not series:
        raise ArgumentError("render_series needs at least one series")
    config = config or VizConfig()
    figure = new_figure(config)
    ax = figure.add_subplot(1, 1, 1)

    lines = []
    for s in series:
        starts = s.bin_starts
        if time_of_day:
            x = (starts - s.bin_start) / 3600.0
        else:
            x = _local_times(starts, tz)
        (line,) = ax.plot(x, s.counts, drawstyle="steps-post", label=s.label, linewidth=1.2)
        lines.append(line)

    rules = []
    if window is not None:
        w0, w1 = window
        if time_of_day:
            bounds = _hours_of_day([w0, w1], tz)
        else:
            bounds = _local_times([w0, w1], tz)
        for bound in bounds:
            rules.append(ax.axvline(bound, color="#d62728", linestyle="--", linewidth=1.0))

    ax.set_xlabel("Hour of day (local)" if time_of_day else f"Time ({tz})")
    ax.set_ylabel("Records per bin")
    ax.set_ylim(bottom=0)
    if len(series) > 1:
        ax.legend(loc="upper left")
    if not time_of_day:
        figure.autofmt_xdate()
    ax.grid(True, alpha=0.3)

    result = SeriesPlotResult(figure=figure, axes=ax, lines=lines, rules=rules)
    if svg_path is not None:
        result.svg_path = save_svg(figure, svg_path)
    logger.info(f"📉 Rendered {len(series)} activity series")
    return result
