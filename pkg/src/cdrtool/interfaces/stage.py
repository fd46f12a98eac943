"""
阶段接口

流水线中每一步(摄取、合并基站、融合、事件筛选……)都实现这个接口。
阶段之间只通过文件交换数据: 每个中间产物都可以检查和比对。
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from cdrtool.utils.events import EventBus
from cdrtool.utils.exceptions import ConfigurationError

PARTIAL_SUFFIX = ".partial"


def partial_of(path: Path) -> Path:
    return path.with_name(path.name + PARTIAL_SUFFIX)


@dataclass
class StageResult:
    """阶段运行结果: 行数、产物与附加信息"""

    row_counts: Dict[str, int] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StageContext:
    """引擎提供给阶段的运行时信息"""

    threads: int = 1
    bus: EventBus = field(default_factory=EventBus)
    staging: bool = True  # True: 输出先写到 <path>.partial, 由引擎在成功后改名

    def staged(self, path: Path) -> Path:
        """Where a stage writes ``path`` during the run."""
        path = Path(path)
        return partial_of(path) if self.staging else path


class Stage(ABC):
    """
    所有流水线阶段的基础接口。

    示例实现:

    class CountStage(Stage):
        stage_type = "count"

        def inputs(self):
            return [self.path("store")]

        def outputs(self):
            return [self.path("out")]

        def run(self, context):
            ...
            return StageResult(row_counts={"records": n})
    """

    stage_type: str = ""

    def __init__(self, name: str, config: Dict[str, Any]):
        self.name = name
        self.config = config
        self.is_active = True

    @abstractmethod
    def inputs(self) -> List[Path]:
        """Files that must exist before the stage runs."""
        pass

    @abstractmethod
    def outputs(self) -> List[Path]:
        """Files the stage produces (written through ``context.staged``)."""
        pass

    @abstractmethod
    def run(self, context: StageContext) -> StageResult:
        """
        Execute the stage.

        Args:
            context: threads, event bus and output staging

        Returns:
            Row counts, artifact paths and metadata for the run manifest
        """
        pass

    def path(self, key: str) -> Path:
        """Required path option."""
        value = self.config.get(key)
        if not value:
            raise ConfigurationError(f"stage '{self.name}' needs '{key}'")
        return Path(value)

    def optional_path(self, key: str) -> Optional[Path]:
        value = self.config.get(key)
        return Path(value) if value else None

    def on_error(self, error: Exception, context: StageContext) -> None:
        """
        Called when ``run`` raises.
        Override to add stage-specific diagnostics.
        """
        pass

    def get_status(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "type": self.stage_type,
            "active": self.is_active,
            "inputs": [str(p) for p in self.inputs()],
            "outputs": [str(p) for p in self.outputs()],
        }
