"""
图形输出: 分级设色图、相关散点图与活动时间序列 (SVG + GeoJSON)。
"""

from .choropleth import ChoroplethResult, Indicator, render_choropleth
from .common import color_ramp, relative_luminance, save_svg
from .scatter import ScatterResult, area_color, render_scatter
from .series import SeriesPlotResult, render_series

__all__ = [
    "Indicator",
    "ChoroplethResult",
    "render_choropleth",
    "ScatterResult",
    "area_color",
    "render_scatter",
    "SeriesPlotResult",
    "render_series",
    "color_ramp",
    "relative_luminance",
    "save_svg",
]
