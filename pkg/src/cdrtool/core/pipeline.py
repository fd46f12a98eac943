"""
流水线引擎

按顺序运行阶段, 把每一步的行数、耗时和产物记入运行清单 (manifest.json)。
职责:
- 运行前检查阶段声明的输入是否存在
- 输出先写到 .partial, 成功后改名; 失败时保留 .partial 供排查
- 每个阶段之后检查守恒规则
- 无论成功与否都写出清单
"""

import json
import logging
import os
import platform
import shutil
import sqlite3
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import matplotlib
import numpy as np
import pandas as pd
import psutil
import scipy

from cdrtool import __version__
from cdrtool.core.invariants import InvariantChecker
from cdrtool.interfaces.stage import Stage, StageContext, StageResult, partial_of
from cdrtool.utils.events import Event, EventBus, EventType
from cdrtool.utils.exceptions import CdrToolError, ConfigurationError, InvariantViolation

INTERNAL_ERROR_EXIT = InvariantViolation.exit_code


def library_versions() -> Dict[str, str]:
    return {
        "cdrtool": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "sqlite": sqlite3.sqlite_version,
    }


def _remove(path: Path) -> None:
    if path.is_dir():
        shutil.rmtree(path)
    elif path.exists():
        path.unlink()


class PipelineEngine:
    """
    编排所有阶段的流水线引擎

    阶段严格串行; 阶段内部的并行度由 threads 控制。
    """

    def __init__(
        self,
        stages: List[Stage],
        manifest_path: Optional[Path] = None,
        threads: int = 1,
        bus: Optional[EventBus] = None,
        checker: Optional[InvariantChecker] = None,
        run_info: Optional[Dict[str, Any]] = None,
    ):
        self.stages = stages
        self.manifest_path = Path(manifest_path) if manifest_path else None
        self.bus = bus or EventBus()
        self.context = StageContext(threads=threads, bus=self.bus)
        self.checker = checker or InvariantChecker()
        self.run_info = run_info or {}

        # 状态跟踪
        self.results: Dict[str, StageResult] = {}
        self.records: List[Dict[str, Any]] = []
        self.failing_stage: Optional[str] = None
        self.error: Optional[str] = None
        self.exit_code: Optional[int] = None
        self._process = psutil.Process()
        self.peak_rss = self._process.memory_info().rss

        self.logger = logging.getLogger(__name__)

    def run(self) -> int:
        """
        Run every stage in order.

        Returns:
            Process exit code: 0 ok, 1 data quality, 2 configuration, 3 invariant violation
        """
        started = time.time()
        self.logger.info(f"🚀 Running pipeline: {' → '.join(s.name for s in self.stages)}")
        try:
            for stage in self.stages:
                self._run_stage(stage)
            self.exit_code = 0
            self.logger.info("✅ Pipeline finished successfully")
        except CdrToolError as e:
            self.exit_code = e.exit_code
            self.error = f"{type(e).__name__}: {e}"
            self.logger.error(f"❌ Pipeline failed at {self.failing_stage}: {e}")
        except Exception as e:
            self.exit_code = INTERNAL_ERROR_EXIT
            self.error = f"{type(e).__name__}: {e}"
            self.logger.exception(f"❌ Internal error at {self.failing_stage}: {e}")
        finally:
            self.bus.emit(
                Event(EventType.PIPELINE_DONE, {"exit_code": self.exit_code, "failing_stage": self.failing_stage})
            )
            if self.manifest_path is not None:
                self.write_manifest(started)
        return self.exit_code

    def _run_stage(self, stage: Stage) -> None:
        record: Dict[str, Any] = {"name": stage.name, "type": stage.stage_type, "status": "pending"}
        self.records.append(record)
        start = time.perf_counter()
        try:
            record["inputs"] = [str(p) for p in stage.inputs()]
            record["outputs"] = [str(p) for p in stage.outputs()]
            missing = [p for p in stage.inputs() if not p.exists()]
            if missing:
                raise ConfigurationError(
                    f"stage '{stage.name}' is missing inputs: {', '.join(str(p) for p in missing)}"
                )
            for output in stage.outputs():
                output.parent.mkdir(parents=True, exist_ok=True)
                _remove(partial_of(output))

            self.logger.info(f"▶️ Stage {stage.name}")
            self.bus.emit(Event(EventType.STAGE_START, {"stage": stage.name}, source=stage.name))
            result = stage.run(self.context)
            self._promote(stage)

            self.results[stage.stage_type] = result
            record.update(
                status="ok",
                row_counts=dict(result.row_counts),
                artifacts=list(result.artifacts),
                metadata=result.metadata,
            )
            self.checker.enforce(self.results)
        except Exception as e:
            record.update(status="failed", error=f"{type(e).__name__}: {e}")
            self.failing_stage = stage.name
            stage.on_error(e, self.context)
            self.bus.emit(Event(EventType.STAGE_FAILED, {"stage": stage.name, "error": str(e)}, source=stage.name))
            raise
        finally:
            record["duration_s"] = round(time.perf_counter() - start, 3)
            self._sample_rss()

        self.bus.emit(Event(EventType.STAGE_DONE, {"stage": stage.name, **result.row_counts}, source=stage.name))
        self.logger.info(f"✅ Stage {stage.name} done in {record['duration_s']:.2f}s {result.row_counts}")

    def _promote(self, stage: Stage) -> None:
        """Rename every staged output to its final name."""
        if not self.context.staging:
            return
        for output in stage.outputs():
            staged = partial_of(output)
            if not staged.exists():
                raise InvariantViolation(f"stage '{stage.name}' did not produce {output}")
            if output.is_dir():
                shutil.rmtree(output)
            os.replace(staged, output)

    def _sample_rss(self) -> None:
        self.peak_rss = max(self.peak_rss, self._process.memory_info().rss)

    def manifest(self, started: float) -> Dict[str, Any]:
        seeds = dict(self.run_info.get("seeds", {}))
        for record in self.records:
            seed = record.get("metadata", {}).get("seed")
            if seed is not None:
                seeds[record["name"]] = seed
        return {
            "tool": "cdrtool",
            "versions": library_versions(),
            "command": self.run_info.get("command"),
            "configs": self.run_info.get("configs", []),
            "seeds": seeds,
            "threads": self.context.threads,
            "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
            "duration_s": round(time.time() - started, 3),
            "stages": self.records,
            "peak_rss_mb": round(self.peak_rss / 2**20, 1),
            "invariants": self.checker.get_status(),
            "exit_code": self.exit_code,
            "failing_stage": self.failing_stage,
            "error": self.error,
        }

    def write_manifest(self, started: float) -> Path:
        path = self.manifest_path
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            staged = partial_of(path)
            staged.write_text(json.dumps(self.manifest(started), indent=2, default=str) + "\n", encoding="utf-8")
            os.replace(staged, path)
            self.logger.info(f"🧾 Manifest written to {path}")
        except OSError as e:
            self.logger.error(f"❌ Failed to write manifest {path}: {e}")
        return path

    def get_status(self) -> Dict[str, Any]:
        return {
            "stages": [s.get_status() for s in self.stages],
            "completed": [r["name"] for r in self.records if r["status"] == "ok"],
            "failing_stage": self.failing_stage,
            "exit_code": self.exit_code,
        }
