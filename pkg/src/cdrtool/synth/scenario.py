"""
合成场景配置

一个场景描述一座合成城市: 基站位置、共址小区、各基站的价格/年龄分布及其
站点级相关系数、设备人口、日内活动曲线、事件尖峰与 TAC 覆盖率。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from cdrtool.core.config import (
    BoundingBoxConfig,
    _check,
    _check_local_time,
    build_section,
    load_mapping,
    parse_year_month,
    to_plain,
)
from cdrtool.utils.exceptions import ConfigurationError

# 典型的日内活动形状(本地时间 0-23 点的相对权重)
DEFAULT_DIURNAL = [
    0.25, 0.15, 0.10, 0.08, 0.08, 0.15, 0.35, 0.65, 0.90, 1.00, 1.05, 1.10,
    1.15, 1.10, 1.05, 1.05, 1.10, 1.15, 1.20, 1.15, 1.05, 0.90, 0.65, 0.40,
]


@dataclass
class SesSpec:
    """站点级价格/年龄分布"""

    price_mean: float = 350.0  # 各基站平均价格的总体均值 (EUR)
    price_sd: float = 120.0  # 基站之间平均价格的标准差
    age_mean: float = 20.0  # 月
    age_sd: float = 8.0
    rho: float = -0.75  # 站点级价格-年龄相关系数
    device_price_sd: float = 60.0  # 基站内设备价格的离散程度
    device_age_sd: float = 6.0
    min_price: float = 20.0
    min_age: int = 0

    def validate(self) -> None:
        _check(self.price_sd >= 0 and self.age_sd >= 0, "ses sd values must be >= 0")
        _check(self.device_price_sd >= 0 and self.device_age_sd >= 0, "device sd values must be >= 0")
        _check(-1.0 <= self.rho <= 1.0, "ses.rho must be within [-1, 1]")
        if self.rho != 0.0 and (self.price_sd == 0 or self.age_sd == 0):
            raise ConfigurationError(f"ses.rho={self.rho} is unattainable when a station-level sd is 0")


@dataclass
class SyntheticEventConfig:
    """事件: 演出时段、参与区域与活动倍数"""

    show_start: str = "2014-08-20 20:30:00"
    show_end: str = "2014-08-20 21:00:00"
    margin_min: float = 30.0
    min_activity: int = 500
    radius_m: float = 600.0  # 距河道折线此距离内的基站参与事件
    rate_multiplier: float = 8.0
    n_quiet: int = 1  # 事件区内活动被压低的基站数, 用于触发最小活动量剔除
    quiet_factor: float = 0.01

    def validate(self) -> None:
        _check_local_time(self.show_start, "event.show_start")
        _check_local_time(self.show_end, "event.show_end")
        _check(self.show_start < self.show_end, "event.show_start must precede event.show_end")
        _check(self.margin_min >= 0, "event.margin_min must be >= 0")
        _check(self.min_activity >= 0, "event.min_activity must be >= 0")
        _check(self.radius_m > 0, "event.radius_m must be positive")
        _check(self.rate_multiplier >= 0, "event.rate_multiplier must be >= 0")
        _check(self.n_quiet >= 0, "event.n_quiet must be >= 0")
        _check(0.0 <= self.quiet_factor <= 1.0, "event.quiet_factor must be within [0, 1]")


@dataclass
class AreaSpec:
    """城区划分: 河道以西为 Buda, 以东为 Pest, 城堡区为以某点为圆心的圆"""

    west: str = "Buda"
    east: str = "Pest"
    castle: str = "Castle District"
    castle_lat: float = 47.4990
    castle_lon: float = 19.0340
    castle_radius_m: float = 700.0


@dataclass
class ScenarioConfig:
    """合成场景"""

    seed: int = 42
    n_stations: int = 50
    duplicate_cell_rate: float = 0.3  # 每个基站额外共址小区的概率 (至多 3 个)
    bbox: BoundingBoxConfig = field(
        default_factory=lambda: BoundingBoxConfig(min_lat=47.470, max_lat=47.530, min_lon=19.000, max_lon=19.100)
    )
    river_lon: Optional[float] = None  # 河道折线的经度, 默认取边界框中线
    n_devices: int = 20_000
    n_cdrs: int = 1_000_000
    activity_sigma: float = 1.0  # 设备活跃度对数正态分布的 sigma
    tz: str = "Europe/Budapest"
    dataset_start: str = "2014-08-18 00:00:00"
    dataset_end: str = "2014-08-23 00:00:00"
    reference: str = "2014-08"
    tac_coverage: float = 0.9
    anomaly_rate: float = 0.01  # 发布日期晚于参考月份的设备比例
    missing_demographics_rate: float = 0.05
    diurnal: List[float] = field(default_factory=lambda: list(DEFAULT_DIURNAL))
    ses: SesSpec = field(default_factory=SesSpec)
    event: SyntheticEventConfig = field(default_factory=SyntheticEventConfig)
    areas: AreaSpec = field(default_factory=AreaSpec)

    def validate(self) -> None:
        """验证场景配置"""
        _check(self.seed >= 0, "seed must be >= 0")
        _check(self.n_stations >= 3, "n_stations must be at least 3")
        _check(self.n_devices >= self.n_stations, "n_devices must be >= n_stations")
        _check(self.n_devices < 60_000_000, "n_devices must fit the 8-digit TAC range")
        _check(self.n_cdrs >= 0, "n_cdrs must be >= 0")
        _check(self.activity_sigma >= 0, "activity_sigma must be >= 0")
        for name in ("duplicate_cell_rate", "tac_coverage", "anomaly_rate", "missing_demographics_rate"):
            value = getattr(self, name)
            _check(0.0 <= value <= 1.0, f"{name} must be a probability in [0, 1]")
        self.bbox.validate()
        if self.river_lon is not None:
            _check(self.bbox.min_lon < self.river_lon < self.bbox.max_lon, "river_lon must lie inside the bbox")
        _check_local_time(self.dataset_start, "dataset_start")
        _check_local_time(self.dataset_end, "dataset_end")
        _check(self.dataset_start < self.dataset_end, "dataset_start must precede dataset_end")
        parse_year_month(self.reference)
        _check(len(self.diurnal) == 24, "diurnal must list 24 hourly weights")
        _check(all(w >= 0 for w in self.diurnal) and sum(self.diurnal) > 0, "diurnal weights must be >= 0 and not all 0")
        self.ses.validate()
        self.event.validate()
        _check(
            self.dataset_start <= self.event.show_start and self.event.show_end <= self.dataset_end,
            "event must fall inside the dataset range",
        )

    @property
    def river(self) -> float:
        if self.river_lon is not None:
            return self.river_lon
        return (self.bbox.min_lon + self.bbox.max_lon) / 2.0

    @classmethod
    def from_file(cls, file_path: Union[str, Path]) -> "ScenarioConfig":
        """从 YAML 或 JSON 文件加载场景"""
        config = cls._dict_to_dataclass(load_mapping(file_path))
        config.validate()
        return config

    @classmethod
    def _dict_to_dataclass(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        nested = {
            "bbox": BoundingBoxConfig,
            "ses": SesSpec,
            "event": SyntheticEventConfig,
            "areas": AreaSpec,
        }
        kwargs = dict(data)
        for key, section_cls in nested.items():
            if key in kwargs:
                kwargs[key] = build_section(section_cls, kwargs[key], key)
        return build_section(cls, kwargs, "scenario")

    def to_dict(self) -> Dict[str, Any]:
        return to_plain(self)
