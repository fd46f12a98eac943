"""
摄取阶段: 三个原始 CSV -> 存储文件
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.core.config import IngestConfig
from cdrtool.core.store import StoreTables, persist
from cdrtool.ingest.readers import ingest_all
from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.utils.events import Event, EventType

logger = logging.getLogger(__name__)


class IngestStage(Stage):
    """
    config keys: cdr, cells, devices, store (output), ingest (IngestConfig)
    """

    stage_type = "ingest"

    def __init__(self, config: Dict[str, Any], name: str = "ingest"):
        super().__init__(name, config)
        self.ingest_config: IngestConfig = config.get("ingest") or IngestConfig()

    def inputs(self) -> List[Path]:
        return [self.path("cdr"), self.path("cells"), self.path("devices")]

    def outputs(self) -> List[Path]:
        return [self.path("store")]

    def run(self, context: StageContext) -> StageResult:
        result = ingest_all(
            self.path("cdr"),
            self.path("cells"),
            self.path("devices"),
            self.ingest_config,
            threads=context.threads,
        )
        cell_report, device_report, cdr_report = result.reports
        for report in result.reports:
            if report.errors:
                context.bus.emit(Event(EventType.ROW_ERRORS, report.to_dict(), source=self.name))

        persist(
            context.staged(self.path("store")),
            StoreTables(cdrs=result.cdrs, cells=result.cells, devices=result.devices, dicts=result.dicts),
            meta={
                "tz": self.ingest_config.tz,
                "dataset_start": self.ingest_config.dataset_start,
                "dataset_end": self.ingest_config.dataset_end,
            },
        )
        return StageResult(
            row_counts={
                "cdr_rows_in": cdr_report.rows_in,
                "cdr_records": cdr_report.records_out,
                "cdr_errors": cdr_report.errors,
                "cdr_out_of_range": cdr_report.out_of_range,
                "cell_rows_in": cell_report.rows_in,
                "cells": cell_report.records_out,
                "cell_errors": cell_report.errors,
                "device_rows_in": device_report.rows_in,
                "device_records": device_report.records_out,
                "devices": len(result.devices),
                "device_errors": device_report.errors,
            },
            artifacts=[str(self.path("store"))],
            metadata={"row_errors": [r.to_dict() for r in result.reports]},
        )
