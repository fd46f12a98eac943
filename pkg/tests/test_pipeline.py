import json
from pathlib import Path
from typing import List

import pytest

from cdrtool.core.invariants import (
    EventPartitionRule,
    IngestConservationRule,
    InvariantChecker,
    InvariantRule,
    StationRemapRule,
)
from cdrtool.core.pipeline import PipelineEngine
from cdrtool.core.store import CdrStore
from cdrtool.interfaces.stage import Stage, StageContext, StageResult, partial_of
from cdrtool.stages import STAGE_REGISTRY, create_stage
from cdrtool.utils.events import EventType
from cdrtool.utils.exceptions import ConfigurationError, DataQualityError, InvariantViolation


class WriteStage(Stage):
    """Writes a text file; optionally fails after writing its partial output."""

    stage_type = "write"

    def __init__(self, config, name="write"):
        super().__init__(name, config)

    def inputs(self) -> List[Path]:
        return [Path(p) for p in self.config.get("inputs", [])]

    def outputs(self) -> List[Path]:
        return [self.path("out")]

    def run(self, context: StageContext) -> StageResult:
        context.staged(self.path("out")).write_text(self.config.get("text", "ok"), encoding="utf-8")
        error = self.config.get("error")
        if error is not None:
            raise error
        return StageResult(row_counts=self.config.get("counts", {"lines": 1}))


class CountStage(WriteStage):
    stage_type = "merge-cells"


def _manifest(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class TestInvariantRules:
    def test_ingest_conservation(self):
        ok = StageResult(row_counts={"cdr_rows_in": 10, "cdr_records": 9, "cdr_errors": 1})
        bad = StageResult(row_counts={"cdr_rows_in": 10, "cdr_records": 9, "cdr_errors": 0})
        assert IngestConservationRule().evaluate({"ingest": ok}) == []
        events = IngestConservationRule().evaluate({"ingest": bad})
        assert len(events) == 1
        assert events[0].stage == "ingest"

    def test_rules_skip_missing_stages(self):
        assert StationRemapRule().evaluate({}) == []
        assert EventPartitionRule().evaluate({}) == []

    def test_event_partition(self):
        counts = {"records_in": 10, "records_out": 7, "kept_station_total": 7, "removed_station_total": 3}
        assert EventPartitionRule().evaluate({"threshold": StageResult(row_counts=counts)}) == []
        leaking = dict(counts, records_out=8)
        assert EventPartitionRule().evaluate({"threshold": StageResult(row_counts=leaking)})

    def test_enforce_raises(self):
        checker = InvariantChecker()
        with pytest.raises(InvariantViolation):
            checker.enforce({"merge-cells": StageResult(row_counts={"records": 5, "station_total": 4})})
        assert checker.get_status()["violations"][0]["rule"] == "station_remap_conservation"

    def test_broken_rule_counts_as_violation(self):
        class Broken(InvariantRule):
            def evaluate(self, results):
                raise KeyError("n_total_sum")

        checker = InvariantChecker(rules=[Broken("broken")])
        assert len(checker.evaluate({})) == 1

    def test_disabled_rules_are_skipped(self):
        rule = StationRemapRule()
        rule.enabled = False
        checker = InvariantChecker(rules=[rule])
        checker.enforce({"merge-cells": StageResult(row_counts={"records": 5, "station_total": 4})})
        assert checker.get_status()["disabled_rules"] == ["station_remap_conservation"]


class TestEngine:
    def test_outputs_are_promoted(self, tmp_path):
        out = tmp_path / "out" / "a.txt"
        manifest = tmp_path / "manifest.json"
        code = PipelineEngine([WriteStage({"out": out})], manifest).run()
        assert code == 0
        assert out.read_text() == "ok"
        assert not partial_of(out).exists()
        data = _manifest(manifest)
        assert data["exit_code"] == 0
        assert data["stages"][0]["status"] == "ok"
        assert data["stages"][0]["row_counts"] == {"lines": 1}
        assert data["versions"]["numpy"]
        assert data["peak_rss_mb"] > 0

    def test_failed_stage_keeps_partial_output(self, tmp_path):
        out = tmp_path / "a.txt"
        manifest = tmp_path / "manifest.json"
        stages = [
            WriteStage({"out": out, "error": DataQualityError("too many bad rows")}, name="first"),
            WriteStage({"out": tmp_path / "b.txt"}, name="second"),
        ]
        assert PipelineEngine(stages, manifest).run() == 1
        assert not out.exists()
        assert partial_of(out).exists()
        assert not (tmp_path / "b.txt").exists()
        data = _manifest(manifest)
        assert data["failing_stage"] == "first"
        assert [s["name"] for s in data["stages"]] == ["first"]
        assert "DataQualityError" in data["error"]

    def test_previous_output_survives_a_failure(self, tmp_path):
        out = tmp_path / "a.txt"
        out.write_text("previous")
        code = PipelineEngine([WriteStage({"out": out, "text": "new", "error": RuntimeError("boom")})]).run()
        assert code == 3
        assert out.read_text() == "previous"

    def test_missing_input(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        stage = WriteStage({"out": tmp_path / "a.txt", "inputs": [tmp_path / "absent.csv"]}, name="fuse")
        assert PipelineEngine([stage], manifest).run() == 2
        data = _manifest(manifest)
        assert data["failing_stage"] == "fuse"
        assert "absent.csv" in data["stages"][0]["error"]

    def test_invariant_violation_stops_the_run(self, tmp_path):
        stage = CountStage({"out": tmp_path / "a.txt", "counts": {"records": 5, "station_total": 4}})
        manifest = tmp_path / "manifest.json"
        assert PipelineEngine([stage], manifest).run() == 3
        assert _manifest(manifest)["invariants"]["violations"]

    def test_events_are_emitted(self, tmp_path):
        engine = PipelineEngine([WriteStage({"out": tmp_path / "a.txt"}), WriteStage({"out": tmp_path / "b.txt"}, "two")])
        seen = []
        engine.bus.subscribe(EventType.STAGE_DONE, lambda e: seen.append(e.source))
        engine.bus.subscribe(EventType.PIPELINE_DONE, lambda e: seen.append(e.data["exit_code"]))
        engine.run()
        assert seen == ["write", "two", 0]

    def test_real_stages(self, tmp_path, tiny_inputs):
        store = tmp_path / "work" / "store.sqlite"
        stages = [
            create_stage(
                "ingest",
                {"cdr": tiny_inputs["cdr"], "cells": tiny_inputs["cells"], "devices": tiny_inputs["devices"], "store": store},
            ),
            create_stage("merge-cells", {"store": store, "voronoi": tmp_path / "work" / "voronoi.geojson"}),
        ]
        engine = PipelineEngine(stages, tmp_path / "manifest.json")
        assert engine.run() == 0
        assert engine.results["merge-cells"].row_counts == {"cells": 3, "stations": 2, "records": 6, "station_total": 6}
        with CdrStore(store) as merged:
            assert merged.has_stations
        assert (tmp_path / "work" / "voronoi.geojson").exists()

    def test_unexpected_error_in_a_stage(self, tmp_path, tiny_inputs, mocker):
        mocker.patch("cdrtool.stages.ingest.ingest_all", side_effect=RuntimeError("worker died"))
        stage = create_stage(
            "ingest",
            {"cdr": tiny_inputs["cdr"], "cells": tiny_inputs["cells"], "devices": tiny_inputs["devices"], "store": tmp_path / "s.sqlite"},
        )
        manifest = tmp_path / "manifest.json"
        assert PipelineEngine([stage], manifest).run() == 3
        assert _manifest(manifest)["failing_stage"] == "ingest"


class TestRegistry:
    def test_unknown_stage_type(self):
        with pytest.raises(ConfigurationError):
            create_stage("transmogrify", {})

    def test_every_stage_is_registered_under_its_type(self):
        for stage_type, stage_class in STAGE_REGISTRY.items():
            assert stage_class.stage_type == stage_type

    def test_missing_required_path(self):
        stage = create_stage("ingest", {"cdr": "a.csv"})
        with pytest.raises(ConfigurationError):
            stage.inputs()
