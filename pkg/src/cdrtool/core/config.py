#!/usr/bin/env python3
"""
透明配置系统

所有假设都是明确的且用户可配置的。
没有对用户隐藏的魔法数字: 250 米缓冲半径、±30 分钟窗口、500 条活动阈值
以及参考月份 2014-08 都在这里声明默认值。
"""

from dataclasses import dataclass, field, fields, is_dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union
import os

import yaml

from cdrtool.utils.exceptions import ConfigurationError

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


def _check_local_time(value: str, name: str) -> None:
    try:
        datetime.strptime(value, "%Y-%m-%d %H:%M:%S")
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must look like 'YYYY-MM-DD HH:MM:SS'")


def parse_year_month(text: str) -> Tuple[int, int]:
    """'2014-08' -> (2014, 8)"""
    try:
        year, month = (int(part) for part in str(text).split("-"))
    except ValueError:
        raise ConfigurationError(f"expected YYYY-MM, got {text!r}")
    _check(1 <= month <= 12, f"month out of range in {text!r}")
    return year, month


@dataclass
class IngestConfig:
    """原始 CSV 摄取设置"""

    tz: str = "Europe/Budapest"
    dataset_start: str = "2014-08-18 00:00:00"  # 数据集声明范围(本地时间, 半开区间)
    dataset_end: str = "2014-08-23 00:00:00"
    max_error_rate: float = 0.01  # 坏行比例超过此值即失败
    chunk_rows: int = 250_000
    check_foreign_keys: Literal["eager", "lazy"] = "eager"
    max_error_samples: int = 20  # 报告中保留的坏行样本数

    def validate(self) -> None:
        """验证摄取配置"""
        _check(bool(self.tz), "tz cannot be empty")
        _check_local_time(self.dataset_start, "dataset_start")
        _check_local_time(self.dataset_end, "dataset_end")
        _check(self.dataset_start < self.dataset_end, "dataset_start must precede dataset_end")
        _check(0.0 <= self.max_error_rate <= 1.0, "max_error_rate must be between 0 and 1")
        _check(self.chunk_rows >= 1, "chunk_rows must be at least 1")
        _check(
            self.check_foreign_keys in ("eager", "lazy"),
            "check_foreign_keys must be 'eager' or 'lazy'",
        )


@dataclass
class SeedConfig:
    """事件区域: 人工选定的基站与沿河折线"""

    seed_station_ids: List[int] = field(default_factory=list)
    seed_polyline: List[List[float]] = field(default_factory=list)  # [[lat, lon], ...]
    radius_m: float = 250.0

    def validate(self) -> None:
        """验证种子配置"""
        _check(
            bool(self.seed_station_ids) or bool(self.seed_polyline),
            "seed geometry is empty: give seed_station_ids or seed_polyline",
        )
        _check(self.radius_m > 0, "radius_m must be positive")
        for point in self.seed_polyline:
            _check(len(point) == 2, "seed_polyline entries must be [lat, lon]")
            _check(-90 <= point[0] <= 90 and -180 <= point[1] <= 180, "seed point out of range")


@dataclass
class EventConfig:
    """事件时间定义"""

    show_start: str = "2014-08-20 20:30:00"
    show_end: str = "2014-08-20 21:00:00"
    margin_min: float = 30.0  # 演出前后各多少分钟计入出席窗口
    min_activity: int = 500  # 窗口内记录少于此值的基站被剔除

    def validate(self) -> None:
        """验证事件配置"""
        _check_local_time(self.show_start, "show_start")
        _check_local_time(self.show_end, "show_end")
        _check(self.show_start < self.show_end, "show_start must precede show_end")
        _check(self.margin_min >= 0, "margin_min must be >= 0")
        _check(self.min_activity >= 0, "min_activity must be >= 0")


@dataclass
class FusionConfig:
    """TAC 融合设置"""

    reference: str = "2014-08"  # 计算相对手机年龄的参考月份
    per_device: bool = False  # True: 每个基站每台设备只计一个样本

    def validate(self) -> None:
        parse_year_month(self.reference)

    @property
    def reference_month(self) -> Tuple[int, int]:
        return parse_year_month(self.reference)


@dataclass
class AnalyticsConfig:
    """聚合与时间序列设置"""

    bin_width_s: int = 3600
    age_bucket_width: int = 10  # 年龄直方图: 0-9 ... 110-119 加 "unknown"
    age_bucket_max: int = 120

    def validate(self) -> None:
        _check(self.bin_width_s > 0, "bin_width_s must be positive")
        _check(self.age_bucket_width > 0, "age_bucket_width must be positive")
        _check(
            self.age_bucket_max % self.age_bucket_width == 0,
            "age_bucket_max must be a multiple of age_bucket_width",
        )


@dataclass
class VizConfig:
    """图形输出设置"""

    colormap: str = "Blues"  # 单色顺序色带, 值越高颜色越深
    no_data_color: str = "#ffffff"
    no_data_hatch: str = "///"
    figure_width_in: float = 8.0
    figure_height_in: float = 6.0
    dpi: int = 100
    area_colors: Dict[str, str] = field(
        default_factory=lambda: {
            "Buda": "#1f77b4",
            "Pest": "#d62728",
            "Castle District": "#2ca02c",
        }
    )
    default_color: str = "#7f7f7f"

    def validate(self) -> None:
        import matplotlib

        _check(self.colormap in matplotlib.colormaps, f"unknown colormap: {self.colormap}")
        _check(self.figure_width_in > 0 and self.figure_height_in > 0, "figure size must be positive")
        _check(self.dpi > 0, "dpi must be positive")


@dataclass
class MonitoringConfig:
    """日志设置"""

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_json: bool = False

    def validate(self) -> None:
        _check(self.log_level in LOG_LEVELS, "log_level must be DEBUG, INFO, WARNING, or ERROR")


@dataclass
class BoundingBoxConfig:
    """Voronoi 裁剪范围; 未给出时取基站范围外扩 5%"""

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def validate(self) -> None:
        _check(self.min_lat < self.max_lat, "bbox min_lat must be < max_lat")
        _check(self.min_lon < self.max_lon, "bbox min_lon must be < max_lon")


@dataclass
class InputsConfig:
    """流水线输入文件"""

    cdr: str = "data/cdr.csv"
    cells: str = "data/cell.csv"
    devices: str = "data/device.csv"
    tacdb: str = "data/tacdb.csv"
    seeds: str = "configs/seeds.json"
    event: str = "configs/event.json"
    labels: Optional[str] = "configs/areas.json"

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name != "labels":
                _check(bool(value), f"inputs.{f.name} cannot be empty")


@dataclass
class PipelineConfig:
    """完整的流水线配置, 所有假设都明确"""

    name: str
    active: bool = True
    out_dir: str = "out"
    threads: Optional[int] = None  # 未设置时使用 CDRTOOL_THREADS, 否则为 1
    inputs: InputsConfig = field(default_factory=InputsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    viz: VizConfig = field(default_factory=VizConfig)
    monitoring: MonitoringConfig = field(default_factory=MonitoringConfig)
    bbox: Optional[BoundingBoxConfig] = None

    def validate(self) -> None:
        """验证整个配置"""
        _check(bool(self.name), "pipeline name cannot be empty")
        _check(self.threads is None or self.threads >= 1, "threads must be at least 1")
        self.inputs.validate()
        self.ingest.validate()
        self.fusion.validate()
        self.analytics.validate()
        self.viz.validate()
        self.monitoring.validate()
        if self.bbox is not None:
            self.bbox.validate()

    def resolve_paths(self, base_dir: Path) -> None:
        """Make relative input/output paths relative to the config file."""
        for f in fields(self.inputs):
            value = getattr(self.inputs, f.name)
            if value and not Path(value).is_absolute():
                setattr(self.inputs, f.name, str(base_dir / value))
        if not Path(self.out_dir).is_absolute():
            self.out_dir = str(base_dir / self.out_dir)

    @classmethod
    def from_yaml(cls, file_path: Union[str, Path]) -> "PipelineConfig":
        """从YAML文件加载配置"""
        path = Path(file_path)
        data = load_mapping(path)
        config = cls._dict_to_dataclass(data)
        config.resolve_paths(path.parent)
        config.validate()
        return config

    @classmethod
    def _dict_to_dataclass(cls, data: Dict[str, Any]) -> "PipelineConfig":
        """递归地将字典转换为数据类"""
        sections = {
            "inputs": InputsConfig,
            "ingest": IngestConfig,
            "fusion": FusionConfig,
            "analytics": AnalyticsConfig,
            "viz": VizConfig,
            "monitoring": MonitoringConfig,
            "bbox": BoundingBoxConfig,
        }
        data = dict(data)
        for key, section_cls in sections.items():
            if data.get(key) is not None:
                data[key] = build_section(section_cls, data[key], key)
        return build_section(cls, data, "pipeline")

    def to_yaml(self, file_path: Union[str, Path]) -> None:
        """将配置保存到YAML文件"""
        with open(file_path, "w") as f:
            yaml.safe_dump(to_plain(self), f, default_flow_style=False, indent=2, sort_keys=False)


def load_mapping(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML or JSON mapping (JSON is a YAML subset)."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigurationError(f"cannot parse {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping")
    return data


def build_section(section_cls, data: Dict[str, Any], where: str):
    """Instantiate a config dataclass, turning unknown keys into ConfigurationError."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{where}' must be a mapping")
    known = {f.name for f in fields(section_cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in '{where}': {', '.join(unknown)}")
    try:
        return section_cls(**data)
    except TypeError as e:
        raise ConfigurationError(f"invalid section '{where}': {e}")


def load_seed_config(path: Union[str, Path]) -> SeedConfig:
    config = build_section(SeedConfig, load_mapping(path), str(path))
    config.validate()
    return config


def load_event_config(path: Union[str, Path]) -> EventConfig:
    config = build_section(EventConfig, load_mapping(path), str(path))
    config.validate()
    return config


def load_area_labels(path: Optional[Union[str, Path]]) -> Dict[int, str]:
    """areas.json: {"<station_id>": "Buda", ...}"""
    if path is None:
        return {}
    data = load_mapping(path)
    try:
        return {int(k): str(v) for k, v in data.items()}
    except ValueError:
        raise ConfigurationError(f"{path}: area label keys must be station ids")


def to_plain(value: Any) -> Any:
    """递归地将数据类转换为普通字典"""
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if is_dataclass(value):
        return {f.name: to_plain(getattr(value, f.name)) for f in fields(value)}
    return str(value)


def env_default(name: str, fallback: str) -> str:
    """CDRTOOL_* 环境变量(可来自 .env)提供默认值, 命令行参数优先"""
    return os.getenv(f"CDRTOOL_{name}", fallback)
