"""
带已知真值的合成城市生成。
"""

from .generator import GROUND_TRUTH_VERSION, GenerationResult, generate, load_ground_truth
from .scenario import AreaSpec, ScenarioConfig, SesSpec, SyntheticEventConfig

__all__ = [
    "ScenarioConfig",
    "SesSpec",
    "SyntheticEventConfig",
    "AreaSpec",
    "GenerationResult",
    "GROUND_TRUTH_VERSION",
    "generate",
    "load_ground_truth",
]
