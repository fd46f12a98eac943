"""
守恒检查

每条规则检查流水线中一段的行数守恒(例如 摄取行数 = 记录数 + 坏行数)。
引擎在每个阶段完成后对已有结果逐条评估, 任一违规即终止运行(退出码 3)。
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

from cdrtool.interfaces.stage import StageResult
from cdrtool.utils.exceptions import InvariantViolation

logger = logging.getLogger(__name__)


@dataclass
class InvariantEvent:
    """一次守恒违规"""

    rule_name: str
    stage: str
    reason: str
    metadata: Dict[str, Any] = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def to_dict(self) -> Dict[str, Any]:
        return {"rule": self.rule_name, "stage": self.stage, "reason": self.reason, "metadata": self.metadata}


class InvariantRule(ABC):
    """
    守恒规则的基础接口

    results 以阶段类型为键, 值为该类型最近一次的结果; 规则所需的阶段
    不在其中时不做判断。
    """

    def __init__(self, name: str, enabled: bool = True):
        self.name = name
        self.enabled = enabled

    @abstractmethod
    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        pass

    def _equal(self, stage: str, left: str, a: Optional[int], right: str, b: Optional[int]) -> List[InvariantEvent]:
        if a is None or b is None or a == b:
            return []
        return [InvariantEvent(self.name, stage, f"{left} ({a}) != {right} ({b})", {left: a, right: b})]


class IngestConservationRule(InvariantRule):
    """每个输入文件: 读入行数 = 记录数 + 坏行数"""

    def __init__(self):
        super().__init__("ingest_conservation")

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        result = results.get("ingest")
        if result is None:
            return []
        c = result.row_counts
        events = []
        for prefix, records in (("cdr", "cdr_records"), ("cell", "cells"), ("device", "device_records")):
            errors = c.get(f"{prefix}_errors")
            total = c[records] + errors if errors is not None and records in c else None
            events += self._equal("ingest", f"{prefix}_rows_in", c.get(f"{prefix}_rows_in"), f"{records} + errors", total)
        return events


class StationRemapRule(InvariantRule):
    """合并基站后各基站记录数之和 = 记录总数"""

    def __init__(self):
        super().__init__("station_remap_conservation")

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        result = results.get("merge-cells")
        if result is None:
            return []
        c = result.row_counts
        return self._equal("merge-cells", "station_total", c.get("station_total"), "records", c.get("records"))


class FusionCoverageRule(InvariantRule):
    """融合: 匹配数 + 未匹配数 = 样本数, 且每条记录一个样本"""

    def __init__(self):
        super().__init__("fusion_coverage")

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        result = results.get("fuse")
        if result is None:
            return []
        c = result.row_counts
        events = self._equal("fuse", "matched + unmatched", c["matched"] + c["unmatched"], "samples", c["samples"])
        merge = results.get("merge-cells")
        if merge is not None:
            events += self._equal("fuse", "samples", c["samples"], "merged records", merge.row_counts.get("records"))
        return events


class EventPartitionRule(InvariantRule):
    """事件子集 = 保留基站计数 + 剔除基站计数; 输出 = 保留基站计数"""

    def __init__(self):
        super().__init__("event_partition")

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        result = results.get("threshold")
        if result is None:
            return []
        c = result.row_counts
        events = self._equal(
            "threshold",
            "records_in",
            c["records_in"],
            "kept + removed station totals",
            c["kept_station_total"] + c["removed_station_total"],
        )
        events += self._equal("threshold", "records_out", c["records_out"], "kept station total", c["kept_station_total"])
        event = results.get("filter-event")
        if event is not None:
            events += self._equal(
                "threshold", "records_in", c["records_in"], "event records", event.row_counts.get("event_records")
            )
        return events


class AggregateConservationRule(InvariantRule):
    """各基站 n_total 之和 = 阈值过滤后的事件记录数(按设备去重时不适用)"""

    def __init__(self):
        super().__init__("aggregate_conservation")

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        result = results.get("aggregate")
        if result is None or result.metadata.get("per_device"):
            return []
        c = result.row_counts
        events = self._equal("aggregate", "n_total_sum", c["n_total_sum"], "records", c["records"])
        threshold = results.get("threshold")
        if threshold is not None:
            events += self._equal(
                "aggregate", "records", c["records"], "thresholded records", threshold.row_counts.get("records_out")
            )
        return events


def default_rules() -> List[InvariantRule]:
    return [
        IngestConservationRule(),
        StationRemapRule(),
        FusionCoverageRule(),
        EventPartitionRule(),
        AggregateConservationRule(),
    ]


class InvariantChecker:
    """
    守恒规则编排器

    可以通过 add_rule 添加自定义规则。
    """

    def __init__(self, rules: Optional[List[InvariantRule]] = None):
        self.rules: List[InvariantRule] = default_rules() if rules is None else list(rules)
        self.history: List[InvariantEvent] = []

    def evaluate(self, results: Mapping[str, StageResult]) -> List[InvariantEvent]:
        """Every violation across the enabled rules."""
        events: List[InvariantEvent] = []
        for rule in self.rules:
            if not rule.enabled:
                continue
            try:
                found = rule.evaluate(results)
            except Exception as e:
                found = [InvariantEvent(rule.name, "?", f"rule evaluation failed: {e!r}")]
            events.extend(found)
        self.history.extend(events)
        return events

    def enforce(self, results: Mapping[str, StageResult]) -> None:
        """
        Raises:
            InvariantViolation: at least one rule is violated
        """
        events = self.evaluate(results)
        for event in events:
            logger.critical(f"🚨 Invariant {event.rule_name} violated at {event.stage}: {event.reason}")
        if events:
            raise InvariantViolation("; ".join(f"{e.rule_name}: {e.reason}" for e in events))

    def add_rule(self, rule: InvariantRule) -> None:
        self.rules.append(rule)

    def remove_rule(self, rule_name: str) -> None:
        self.rules = [rule for rule in self.rules if rule.name != rule_name]

    def get_status(self) -> Dict[str, Any]:
        return {
            "enabled_rules": [rule.name for rule in self.rules if rule.enabled],
            "disabled_rules": [rule.name for rule in self.rules if not rule.enabled],
            "violations": [e.to_dict() for e in self.history],
        }
