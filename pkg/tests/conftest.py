"""
测试共用的夹具

- tiny_inputs: 手写的几行 CSV(三个小区, 其中两个共址)
- small_scenario / small_city: 小规模合成城市, 整个会话只生成一次
"""

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from cdrtool.core.config import BoundingBoxConfig
from cdrtool.synth.generator import generate
from cdrtool.synth.scenario import ScenarioConfig, SyntheticEventConfig

settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))

# 2014-08-20 20:30:00 Europe/Budapest (CEST, UTC+2)
SHOW_START = 1408559400
WINDOW_START = SHOW_START - 1800
WINDOW_END = SHOW_START + 1800 + 1800


def write_lines(path: Path, lines) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def tiny_inputs(tmp_path: Path) -> dict:
    """cells c1/c2 share a site, c3 stands alone; four devices; six records."""
    cells = write_lines(
        tmp_path / "cell.csv",
        [
            "cell_hash,lat,lon",
            "c1,47.5000001234567,19.0500009876543",
            "c2,47.500000,19.050000",
            "c3,47.5100009,19.0600001",
        ],
    )
    devices = write_lines(
        tmp_path / "device.csv",
        [
            "device_hash,age,gender,customer_type,subscription",
            "d1,34,male,individual,prepaid",
            "d2,,,business,postpaid",
            "d3,61,female,individual,postpaid",
            "d4,25,female,individual,prepaid",
        ],
    )
    cdr = write_lines(
        tmp_path / "cdr.csv",
        [
            "timestamp,device_hash,cell_hash,tac",
            "2014-08-20 19:59:59,d1,c1,35000001",
            "2014-08-20 20:00:00,d1,c2,35000001   ",
            "2014-08-20 20:45:00,d2,c3,35000002\r",
            "2014-08-20 21:29:59,d3,c1,35000003",
            "2014-08-20 21:30:00,d4,c3,35000004",
            "2014-08-20 20:10:00,d4,c2,99999999",
        ],
    )
    tacdb = write_lines(
        tmp_path / "tacdb.csv",
        [
            "tac,brand,model,release_year,release_month,price_eur",
            "35000001,Acme,One,2014,6,500.00",
            "35000002,Acme,Two,2012,5,300.00",
            "35000003,Bolt,X,2014,10,650.00",
            "35000004,Bolt,Y,2013,8,200.00",
        ],
    )
    return {"cells": cells, "devices": devices, "cdr": cdr, "tacdb": tacdb, "dir": tmp_path}


def small_scenario_config(seed: int = 7) -> ScenarioConfig:
    return ScenarioConfig(
        seed=seed,
        n_stations=12,
        duplicate_cell_rate=0.3,
        bbox=BoundingBoxConfig(min_lat=47.470, max_lat=47.530, min_lon=19.000, max_lon=19.100),
        n_devices=800,
        n_cdrs=20_000,
        event=SyntheticEventConfig(radius_m=2500.0, min_activity=50, rate_multiplier=12.0, n_quiet=1),
    )


@pytest.fixture
def small_scenario() -> ScenarioConfig:
    return small_scenario_config()


@pytest.fixture(scope="session")
def small_city(tmp_path_factory):
    """A generated city shared by the read-only tests."""
    out_dir = tmp_path_factory.mktemp("city")
    return generate(small_scenario_config(), out_dir)
