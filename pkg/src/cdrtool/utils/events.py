import logging
import time
from typing import Any, Callable, Dict, List, Optional
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)


class EventType(Enum):
    """流水线的事件类型"""

    STAGE_START = "stage_start"
    STAGE_DONE = "stage_done"
    STAGE_FAILED = "stage_failed"
    ROW_ERRORS = "row_errors"
    PIPELINE_DONE = "pipeline_done"


@dataclass
class Event:
    """基础事件类"""

    type: EventType
    data: Dict[str, Any]
    source: Optional[str] = None
    timestamp: float = field(default_factory=time.time)


class EventBus:
    """用于阶段之间通信的简单事件总线"""

    def __init__(self):
        self._listeners: Dict[EventType, List[Callable[[Event], None]]] = {}

    def subscribe(
        self, event_type: EventType, callback: Callable[[Event], None]
    ) -> None:
        """订阅事件类型"""
        self._listeners.setdefault(event_type, []).append(callback)

    def emit(self, event: Event) -> None:
        """向所有订阅者发出事件"""
        for callback in self._listeners.get(event.type, []):
            try:
                callback(event)
            except Exception as e:
                # 记录错误但不停止其他监听器
                logger.error(f"❌ Error in event listener: {e}")
