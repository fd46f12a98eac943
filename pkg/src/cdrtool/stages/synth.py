"""
合成数据阶段: 场景文件 -> 合成城市目录(CSV 输入 + ground_truth.json)
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from cdrtool.interfaces.stage import Stage, StageContext, StageResult
from cdrtool.synth.generator import generate
from cdrtool.synth.scenario import ScenarioConfig

logger = logging.getLogger(__name__)


class SynthStage(Stage):
    """
    config keys: scenario (YAML/JSON file, optional), scenario_config
    (ScenarioConfig, used when no file is given), out_dir
    """

    stage_type = "synth"

    def __init__(self, config: Dict[str, Any], name: str = "synth"):
        super().__init__(name, config)

    def inputs(self) -> List[Path]:
        scenario = self.optional_path("scenario")
        return [scenario] if scenario else []

    def outputs(self) -> List[Path]:
        return [self.path("out_dir")]

    def _scenario(self) -> ScenarioConfig:
        scenario = self.optional_path("scenario")
        if scenario:
            return ScenarioConfig.from_file(scenario)
        return self.config.get("scenario_config") or ScenarioConfig()

    def run(self, context: StageContext) -> StageResult:
        scenario = self._scenario()
        result = generate(scenario, context.staged(self.path("out_dir")))
        counts = result.ground_truth["counts"]
        return StageResult(
            row_counts={k: int(v) for k, v in counts.items()},
            artifacts=[str(self.path("out_dir") / name.name) for name in result.files.values()],
            metadata={
                "seed": scenario.seed,
                "planted_correlation": result.ground_truth["planted_correlation"],
                "planted_correlation_event": result.ground_truth["planted_correlation_event"],
            },
        )
