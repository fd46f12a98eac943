"""
流水线阶段

每个阶段实现 Stage 接口, 从文件读、向文件写。

可用阶段:
- ingest: 原始 CSV -> 存储
- merge-cells: 小区合并为基站
- fuse: TAC 属性表与覆盖率
- filter-event / threshold: 事件出席子集
- aggregate / series / correlate: 分析
- render: 图形输出
- synth: 合成城市
"""

from typing import Any, Dict, Optional

from cdrtool.utils.exceptions import ConfigurationError

from .analytics import AggregateStage, CorrelateStage, SeriesStage
from .event import FilterEventStage, ThresholdStage
from .fusion import FuseStage
from .geo import MergeCellsStage
from .ingest import IngestStage
from .render import RenderStage
from .synth import SynthStage

# 阶段注册表
STAGE_REGISTRY = {
    "ingest": IngestStage,
    "merge-cells": MergeCellsStage,
    "fuse": FuseStage,
    "filter-event": FilterEventStage,
    "threshold": ThresholdStage,
    "aggregate": AggregateStage,
    "series": SeriesStage,
    "correlate": CorrelateStage,
    "render": RenderStage,
    "synth": SynthStage,
}


def create_stage(stage_type: str, config: Dict[str, Any], name: Optional[str] = None):
    """
    创建阶段的工厂函数。

    添加新阶段:
    1. 实现 Stage 接口
    2. 添加到 STAGE_REGISTRY
    """
    if stage_type not in STAGE_REGISTRY:
        available = ", ".join(STAGE_REGISTRY.keys())
        raise ConfigurationError(f"Unknown stage type: {stage_type}. Available: {available}")

    stage_class = STAGE_REGISTRY[stage_type]
    return stage_class(config, name=name or stage_type)


__all__ = [
    "IngestStage",
    "MergeCellsStage",
    "FuseStage",
    "FilterEventStage",
    "ThresholdStage",
    "AggregateStage",
    "SeriesStage",
    "CorrelateStage",
    "RenderStage",
    "SynthStage",
    "STAGE_REGISTRY",
    "create_stage",
]
