"""Shared figure plumbing: Agg figures, reproducible SVG output, colour helpers."""

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import colors as mcolors  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from cdrtool.core.config import VizConfig  # noqa: E402

SVG_HASH_SALT = "cdrtool"
RAMP_RESOLUTION = 65536
RAMP_LIGHTEST = 0.15  # 色带起点, 避免与白色"无数据"混淆


def new_figure(config: VizConfig) -> Figure:
    return Figure(figsize=(config.figure_width_in, config.figure_height_in), dpi=config.dpi)


def save_svg(figure: Figure, path: Union[str, Path]) -> Path:
    """Write SVG with a fixed id salt and no timestamp, so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    return path


def color_ramp(name: str) -> mcolors.Colormap:
    """
    Sequential ramp from the named colormap, light to dark, resampled finely
    so nearby values get distinct colours.
    """
    base = matplotlib.colormaps[name]
    stops = base(np.linspace(RAMP_LIGHTEST, 1.0, 256))
    return mcolors.LinearSegmentedColormap.from_list(f"{name}_ramp", stops, N=RAMP_RESOLUTION)


def relative_luminance(color: Union[str, Sequence[float]]) -> float:
    """WCAG relative luminance of an sRGB colour."""
    rgb = np.asarray(mcolors.to_rgb(color))
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    return float(np.dot([0.2126, 0.7152, 0.0722], linear))
