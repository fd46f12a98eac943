#!/usr/bin/env python3
"""
cdrtool 命令行入口

每个子命令运行一个或几个阶段, run-all 按顺序运行整条流水线:
ingest → merge-cells → fuse → filter-event → threshold → aggregate → correlate → series → render

退出码: 0 成功, 1 数据质量问题, 2 配置错误, 3 内部不变量被破坏。
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from cdrtool.core.config import (
    AnalyticsConfig,
    FusionConfig,
    IngestConfig,
    PipelineConfig,
    VizConfig,
    env_default,
)
from cdrtool.core.pipeline import PipelineEngine
from cdrtool.interfaces.stage import Stage
from cdrtool.stages import create_stage
from cdrtool.utils.exceptions import CdrToolError, ConfigurationError
from cdrtool.utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

PIPELINES_DIR = "pipelines"


def find_first_active_config(search_dir: Optional[Path] = None) -> Optional[Path]:
    """在 pipelines 文件夹中查找第一个 active: true 的配置"""

    pipelines_dir = search_dir or Path.cwd() / PIPELINES_DIR
    if not pipelines_dir.exists():
        return None

    yaml_files = list(pipelines_dir.glob("*.yaml")) + list(pipelines_dir.glob("*.yml"))
    for yaml_file in sorted(yaml_files):
        try:
            with open(yaml_file, "r") as f:
                data = yaml.safe_load(f)
            if data and data.get("active", False):
                logger.info(f"📁 Found active config: {yaml_file.name}")
                return yaml_file
        except Exception as e:
            logger.warning(f"⚠️ Error reading {yaml_file.name}: {e}")
            continue

    return None


def build_run_all_stages(config: PipelineConfig, scenario: Optional[Path] = None) -> List[Stage]:
    """
    The full stage list for one pipeline config.

    Args:
        config: validated pipeline config with resolved paths
        scenario: optional synthetic scenario; generated first into
            ``<out_dir>/synth`` and used as the pipeline inputs
    """
    out = Path(config.out_dir)
    inputs = config.inputs
    stages: List[Stage] = []

    if scenario is not None:
        synth_dir = out / "synth"
        stages.append(create_stage("synth", {"scenario": scenario, "out_dir": synth_dir}))
        inputs.cdr = str(synth_dir / "cdr.csv")
        inputs.cells = str(synth_dir / "cell.csv")
        inputs.devices = str(synth_dir / "device.csv")
        inputs.tacdb = str(synth_dir / "tacdb.csv")
        inputs.seeds = str(synth_dir / "seeds.json")
        inputs.event = str(synth_dir / "event.json")
        inputs.labels = str(synth_dir / "areas.json")

    store = out / "store.sqlite"
    event_store = out / "event.sqlite"
    attendance = out / "attendance.sqlite"
    aggregates = out / "aggregates.csv"
    report = out / "report.json"
    series = out / "series.csv"
    daily = out / "daily.csv"

    stages += [
        create_stage(
            "ingest",
            {"cdr": inputs.cdr, "cells": inputs.cells, "devices": inputs.devices, "store": store, "ingest": config.ingest},
        ),
        create_stage("merge-cells", {"store": store, "voronoi": out / "voronoi.geojson", "bbox": config.bbox}),
        create_stage(
            "fuse", {"store": store, "tacdb": inputs.tacdb, "coverage": out / "coverage.json", "fusion": config.fusion}
        ),
        create_stage("filter-event", {"store": store, "seeds": inputs.seeds, "event": inputs.event, "out": event_store}),
        create_stage("threshold", {"store": event_store, "out": attendance, "report": out / "threshold.json"}),
        create_stage(
            "aggregate",
            {"store": attendance, "out": aggregates, "fusion": config.fusion, "analytics": config.analytics},
        ),
        create_stage("correlate", {"aggregates": aggregates, "labels": inputs.labels, "out": report}),
        create_stage(
            "series",
            {
                "store": store,
                "stations_from": attendance,
                "out": series,
                "daily": daily,
                "bin_width_s": config.analytics.bin_width_s,
            },
        ),
    ]
    for indicator in ("price", "age"):
        stages.append(
            create_stage(
                "render",
                {
                    "kind": "choropleth",
                    "store": store,
                    "aggregates": aggregates,
                    "indicator": indicator,
                    "out": out / f"{indicator}_choropleth.svg",
                    "geojson": out / f"{indicator}_choropleth.geojson",
                    "bbox": config.bbox,
                    "viz": config.viz,
                },
                name=f"render-{indicator}",
            )
        )
    stages += [
        create_stage(
            "render", {"kind": "scatter", "report": report, "out": out / "scatter.svg", "viz": config.viz},
            name="render-scatter",
        ),
        create_stage(
            "render",
            {"kind": "series", "series": series, "window_from": event_store, "out": out / "series.svg", "viz": config.viz},
            name="render-series",
        ),
        create_stage(
            "render",
            {"kind": "series", "series": daily, "time_of_day": True, "out": out / "daily.svg", "viz": config.viz},
            name="render-daily",
        ),
    ]
    return stages


def default_manifest(stages: List[Stage]) -> Path:
    first = stages[0].outputs()[0]
    return first.with_name(first.name + ".manifest.json")


def run_stages(stages: List[Stage], args: argparse.Namespace, run_info: Dict[str, Any]) -> int:
    manifest = Path(args.manifest) if args.manifest else default_manifest(stages)
    engine = PipelineEngine(stages, manifest_path=manifest, threads=args.threads, run_info=run_info)
    return engine.run()


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigurationError(f"{flag} is required")
    return value


# ---- subcommands ----


def cmd_ingest(args: argparse.Namespace) -> List[Stage]:
    config = IngestConfig(tz=args.tz, check_foreign_keys="lazy" if args.lazy_devices else "eager")
    if args.dataset_start:
        config.dataset_start = args.dataset_start
    if args.dataset_end:
        config.dataset_end = args.dataset_end
    if args.max_error_rate is not None:
        config.max_error_rate = args.max_error_rate
    config.validate()
    store = _require(args.out or args.store, "--out")
    return [
        create_stage("ingest", {"cdr": args.cdr, "cells": args.cells, "devices": args.devices, "store": store, "ingest": config})
    ]


def cmd_merge_cells(args: argparse.Namespace) -> List[Stage]:
    return [
        create_stage(
            "merge-cells", {"store": _require(args.store, "--store"), "out": args.out, "voronoi": args.voronoi}
        )
    ]


def cmd_fuse(args: argparse.Namespace) -> List[Stage]:
    config = FusionConfig(reference=args.reference)
    config.validate()
    return [
        create_stage(
            "fuse",
            {
                "store": _require(args.store, "--store"),
                "tacdb": args.tacdb,
                "out": args.out,
                "coverage": args.coverage,
                "fusion": config,
            },
        )
    ]


def cmd_filter_event(args: argparse.Namespace) -> List[Stage]:
    store = _require(args.store, "--store")
    out = Path(args.out)
    if args.no_threshold:
        return [
            create_stage(
                "filter-event",
                {"store": store, "seeds": args.seeds, "event": args.event, "out": out, "min_activity": args.min_activity},
            )
        ]
    window = out.with_name(f"{out.stem}.window{out.suffix}")
    return [
        create_stage(
            "filter-event",
            {"store": store, "seeds": args.seeds, "event": args.event, "out": window, "min_activity": args.min_activity},
        ),
        create_stage("threshold", {"store": window, "out": out, "report": args.report}),
    ]


def cmd_aggregate(args: argparse.Namespace) -> List[Stage]:
    analytics = AnalyticsConfig(age_bucket_width=args.age_bucket_width)
    analytics.validate()
    return [
        create_stage(
            "aggregate",
            {
                "store": _require(args.store, "--store"),
                "out": args.out,
                "per_device": True if args.per_device else None,
                "analytics": analytics,
            },
        )
    ]


def cmd_series(args: argparse.Namespace) -> List[Stage]:
    return [
        create_stage(
            "series",
            {
                "store": _require(args.store, "--store"),
                "out": args.out,
                "bin_width_s": args.bin,
                "daily": args.daily,
                "stations_from": args.stations_from,
            },
        )
    ]


def cmd_correlate(args: argparse.Namespace) -> List[Stage]:
    return [create_stage("correlate", {"aggregates": args.aggregates, "labels": args.labels, "out": args.out})]


def cmd_render(args: argparse.Namespace) -> List[Stage]:
    viz = VizConfig(colormap=args.colormap) if args.colormap else VizConfig()
    viz.validate()
    config: Dict[str, Any] = {"kind": args.kind, "out": args.out, "viz": viz}
    if args.kind == "choropleth":
        config.update(
            store=_require(args.store, "--store"), aggregates=args.input, indicator=args.indicator, geojson=args.geojson
        )
    elif args.kind == "scatter":
        config.update(report=args.input)
    else:
        config.update(series=args.input, window_from=args.window_from, time_of_day=args.time_of_day, tz=args.tz)
    return [create_stage("render", config)]


def cmd_synth(args: argparse.Namespace) -> List[Stage]:
    return [create_stage("synth", {"scenario": args.config, "out_dir": args.out_dir})]


COMMANDS = {
    "ingest": cmd_ingest,
    "merge-cells": cmd_merge_cells,
    "fuse": cmd_fuse,
    "filter-event": cmd_filter_event,
    "aggregate": cmd_aggregate,
    "series": cmd_series,
    "correlate": cmd_correlate,
    "render": cmd_render,
    "synth": cmd_synth,
}


def run_all(args: argparse.Namespace) -> int:
    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            logger.error(f"❌ Config file not found: {args.config}")
            return ConfigurationError.exit_code
    else:
        logger.info("🔍 No config specified, auto-discovering active config...")
        config_path = find_first_active_config()
        if not config_path:
            logger.error(f"❌ No active config found in {PIPELINES_DIR}/ folder")
            logger.info(f"💡 Create a config file in {PIPELINES_DIR}/ with 'active: true'")
            return ConfigurationError.exit_code

    config = PipelineConfig.from_yaml(config_path)
    if args.validate:
        logger.info("✅ Configuration is valid")
        return 0
    if args.log_level is None:
        configure_logging(config.monitoring.log_level, json_output=args.log_json or config.monitoring.log_json)

    if args.threads_given is None and config.threads is not None:
        args.threads = config.threads
    stages = build_run_all_stages(config, Path(args.scenario) if args.scenario else None)
    manifest = Path(args.manifest) if args.manifest else Path(config.out_dir) / "manifest.json"
    engine = PipelineEngine(
        stages,
        manifest_path=manifest,
        threads=args.threads,
        run_info={"command": "run-all", "configs": [str(config_path)] + ([args.scenario] if args.scenario else [])},
    )
    logger.info(f"🚀 Starting {config.name}")
    return engine.run()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", help="store file")
    common.add_argument("--threads", type=int, default=None, help="intra-stage parallelism")
    common.add_argument("--log-json", action="store_true", help="one JSON object per log line")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--manifest", help="run manifest path")

    parser = argparse.ArgumentParser(prog="cdrtool", description="CDR socioeconomic-status analytics")
    sub = parser.add_subparsers(dest="command", required=True)
    tz_default = env_default("TZ", "Europe/Budapest")

    p = sub.add_parser("ingest", parents=[common], help="parse raw CSVs into a store")
    p.add_argument("--cdr", required=True)
    p.add_argument("--cells", required=True)
    p.add_argument("--devices", required=True)
    p.add_argument("--tz", default=tz_default)
    p.add_argument("--out", help="store to write (defaults to --store)")
    p.add_argument("--dataset-start", help="local 'YYYY-MM-DD HH:MM:SS'")
    p.add_argument("--dataset-end", help="local 'YYYY-MM-DD HH:MM:SS' (exclusive)")
    p.add_argument("--max-error-rate", type=float)
    p.add_argument("--lazy-devices", action="store_true", help="intern device hashes missing from device.csv")

    p = sub.add_parser("merge-cells", parents=[common], help="merge co-located cells into base stations")
    p.add_argument("--out", help="write the merged store here instead of in place")
    p.add_argument("--voronoi", help="also write Voronoi polygons as GeoJSON")

    p = sub.add_parser("fuse", parents=[common], help="attach the TAC phone-property table")
    p.add_argument("--tacdb", required=True)
    p.add_argument("--reference", default="2014-08", help="YYYY-MM for relative phone ages")
    p.add_argument("--out", help="write the fused store here instead of in place")
    p.add_argument("--coverage", help="coverage report JSON")

    p = sub.add_parser("filter-event", parents=[common], help="extract the event attendance subset")
    p.add_argument("--event", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-activity", type=int)
    p.add_argument("--report", help="threshold report JSON")
    p.add_argument("--no-threshold", action="store_true", help="skip the minimum-activity rule")

    p = sub.add_parser("aggregate", parents=[common], help="per-station SES aggregates")
    p.add_argument("--out", required=True)
    p.add_argument("--per-device", action="store_true", help="one sample per device per station")
    p.add_argument("--age-bucket-width", type=int, default=10)

    p = sub.add_parser("series", parents=[common], help="activity time series")
    p.add_argument("--bin", type=int, default=3600, help="bin width in seconds")
    p.add_argument("--out", required=True)
    p.add_argument("--daily", help="also write one time-of-day profile per local day")
    p.add_argument("--stations-from", help="restrict to the stations of an event subset")

    p = sub.add_parser("correlate", parents=[common], help="price-age correlation report")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", parents=[common], help="SVG figures")
    p.add_argument("kind", choices=["choropleth", "scatter", "series"])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--geojson")
    p.add_argument("--indicator", choices=["price", "age"], default="price")
    p.add_argument("--window-from", help="event subset whose window is marked on the series")
    p.add_argument("--time-of-day", action="store_true")
    p.add_argument("--tz", default=tz_default)
    p.add_argument("--colormap")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic city")
    p.add_argument("--config", help="scenario YAML/JSON (defaults built in)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run-all", parents=[common], help="run the whole pipeline")
    p.add_argument("--config", help=f"pipeline YAML (auto-discovered in {PIPELINES_DIR}/ if omitted)")
    p.add_argument("--scenario", help="generate this synthetic scenario first and use it as input")
    p.add_argument("--validate", action="store_true", help="only validate the configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主入口点"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    configure_logging(args.log_level or env_default("LOG_LEVEL", "INFO"), json_output=args.log_json)
    args.threads_given = args.threads
    try:
        if args.threads is None:
            try:
                args.threads = int(env_default("THREADS", "1"))
            except ValueError:
                raise ConfigurationError("CDRTOOL_THREADS must be an integer")
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        if args.command == "run-all":
            return run_all(args)
        stages = COMMANDS[args.command](args)
        return run_stages(stages, args, {"command": args.command})
    except CdrToolError as e:
        # raised while building stages, before any manifest exists
        logger.error(f"❌ {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
