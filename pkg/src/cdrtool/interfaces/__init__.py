"""
阶段接口
"""

from .stage import PARTIAL_SUFFIX, Stage, StageContext, StageResult, partial_of

__all__ = ["Stage", "StageContext", "StageResult", "PARTIAL_SUFFIX", "partial_of"]
