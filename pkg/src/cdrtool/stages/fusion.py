"""
融合阶段: 把 TAC 属性表写入存储并报告覆盖率
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.core.config import FusionConfig
from cdrtool.core.store import CdrStore
from cdrtool.fusion.tac import flag_anomalies, fuse, load_tacdb
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.stages.common import copy_store, write_json
from cdrtool.utils.events import Event, EventType

logger = logging.getLogger(__name__)


class FuseStage(Stage):
    """
    config keys: store, tacdb, out (defaults to store), coverage (optional JSON),
    fusion (FusionConfig)
    """

    stage_type = "fuse"

    def __init__(self, config: Dict[str, Any], name: str = "fuse"):
        super().__init__(name, config)
        self.fusion_config: FusionConfig = config.get("fusion") or FusionConfig()

    def _out(self) -> Path:
        return self.optional_path("out") or self.path("store")

    def inputs(self) -> List[Path]:
        return [self.path("store"), self.path("tacdb")]

    def outputs(self) -> List[Path]:
        outputs = [self._out()]
        if self.optional_path("coverage"):
            outputs.append(self.path("coverage"))
        return outputs

    def run(self, context: StageContext) -> StageResult:
        properties, tac_report = load_tacdb(self.path("tacdb"))
        if tac_report.errors:
            context.bus.emit(Event(EventType.ROW_ERRORS, tac_report.to_dict(), source=self.name))

        target = copy_store(self.path("store"), context.staged(self._out()))
        with CdrStore(target, writable=True) as store:
            store.write_phone_properties(properties)
            store.set_meta(reference=self.fusion_config.reference)
            samples, coverage = fuse(store.load_cdrs(), properties, self.fusion_config.reference_month)
        _, anomalous = flag_anomalies(samples)

        artifacts = [str(self._out())]
        summary = {**coverage.to_dict(), "anomalous": len(anomalous), "reference": self.fusion_config.reference}
        if self.optional_path("coverage"):
            write_json(summary, context.staged(self.path("coverage")))
            artifacts.append(str(self.path("coverage")))

        return StageResult(
            row_counts={
                "tacdb_rows_in": tac_report.rows_in,
                "properties": len(properties),
                "tacdb_errors": tac_report.errors,
                "samples": len(samples),
                "matched": coverage.matched,
                "unmatched": coverage.unmatched,
                "anomalous": len(anomalous),
            },
            artifacts=artifacts,
            metadata={"coverage": summary},
        )
