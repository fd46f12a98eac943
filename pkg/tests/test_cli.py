import json
from pathlib import Path
from typing import Optional

import pytest
import yaml

from cdrtool.analytics import read_aggregates_csv
from cdrtool.cli import find_first_active_config, main
from cdrtool.core.config import PipelineConfig
from cdrtool.core.store import CdrStore

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
PIPELINES = Path(__file__).resolve().parents[1] / "pipelines"

RUN_ALL_OUTPUTS = [
    "store.sqlite",
    "voronoi.geojson",
    "coverage.json",
    "event.sqlite",
    "threshold.json",
    "attendance.sqlite",
    "aggregates.csv",
    "report.json",
    "series.csv",
    "daily.csv",
    "price_choropleth.svg",
    "price_choropleth.geojson",
    "age_choropleth.svg",
    "age_choropleth.geojson",
    "scatter.svg",
    "series.svg",
    "daily.svg",
    "manifest.json",
]


def _pipeline_config(directory: Path, threads: Optional[int] = 1, **inputs) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    data = {"name": "test", "active": True, "out_dir": "out"}
    if threads is not None:
        data["threads"] = threads
    if inputs:
        data["inputs"] = {k: str(v) for k, v in inputs.items()}
    path = directory / "pipeline.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def _json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    config = _pipeline_config(tmp_path_factory.mktemp("run"))
    code = main(["run-all", "--config", str(config), "--scenario", str(SCENARIOS / "small.yaml")])
    return code, config.parent / "out"


class TestRunAll:
    def test_every_output_is_written(self, small_run):
        code, out = small_run
        assert code == 0
        for name in RUN_ALL_OUTPUTS:
            assert (out / name).exists(), name
        assert not list(out.glob("*.partial"))

    def test_manifest(self, small_run):
        _, out = small_run
        manifest = _json(out / "manifest.json")
        assert manifest["exit_code"] == 0
        assert manifest["failing_stage"] is None
        assert manifest["stages"][0]["name"] == "synth"
        assert all(s["status"] == "ok" for s in manifest["stages"])
        assert manifest["seeds"]["synth"] == 7
        assert manifest["invariants"]["violations"] == []

    def test_report_matches_ground_truth(self, small_run):
        _, out = small_run
        truth = _json(out / "synth" / "ground_truth.json")
        report = _json(out / "report.json")
        threshold = _json(out / "threshold.json")
        assert threshold["kept_stations"] == truth["event"]["expected_kept"]
        assert report["n"] == len(truth["event"]["expected_kept"])
        assert -1.0 <= report["r"] <= 1.0
        with CdrStore(out / "event.sqlite") as event:
            assert event.counts()["cdr"] == truth["event"]["n_window_records"]

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        _, out = small_run
        before = {name: (out / name).read_bytes() for name in ("report.json", "aggregates.csv", "price_choropleth.svg")}
        config = out.parent / "pipeline.yaml"
        assert main(["run-all", "--config", str(config), "--scenario", str(SCENARIOS / "small.yaml")]) == 0
        for name, data in before.items():
            assert (out / name).read_bytes() == data, name

    def test_threads_do_not_change_the_result(self, small_run, tmp_path):
        _, out = small_run
        config = _pipeline_config(tmp_path, threads=4)
        assert main(["run-all", "--config", str(config), "--scenario", str(SCENARIOS / "small.yaml")]) == 0
        serial = read_aggregates_csv(out / "aggregates.csv")
        parallel = read_aggregates_csv(tmp_path / "out" / "aggregates.csv")
        assert [(a.station_id, a.n_total, a.n_with_ses) for a in serial] == [
            (a.station_id, a.n_total, a.n_with_ses) for a in parallel
        ]
        for a, b in zip(serial, parallel):
            if a.has_ses:
                assert a.mean_price_eur == pytest.approx(b.mean_price_eur, abs=1e-9)
                assert a.mean_age_months == pytest.approx(b.mean_age_months, abs=1e-9)
        assert _json(tmp_path / "out" / "report.json")["r"] == pytest.approx(_json(out / "report.json")["r"], abs=1e-9)
        assert _json(tmp_path / "out" / "manifest.json")["threads"] == 4

    def test_missing_tacdb(self, small_city, tmp_path):
        files = small_city.files
        config = _pipeline_config(
            tmp_path,
            cdr=files["cdr"],
            cells=files["cells"],
            devices=files["devices"],
            tacdb=tmp_path / "absent.csv",
            seeds=files["seeds"],
            event=files["event"],
            labels=files["labels"],
        )
        assert main(["run-all", "--config", str(config)]) == 2
        manifest = _json(tmp_path / "out" / "manifest.json")
        assert manifest["failing_stage"] == "fuse"
        assert manifest["exit_code"] == 2
        assert (tmp_path / "out" / "store.sqlite").exists()

    def test_validate_only(self, tmp_path):
        config = _pipeline_config(tmp_path)
        assert main(["run-all", "--config", str(config), "--validate"]) == 0
        assert not (tmp_path / "out").exists()

    def test_missing_config(self, tmp_path):
        assert main(["run-all", "--config", str(tmp_path / "absent.yaml")]) == 2

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "pipeline.yaml"
        path.write_text("name: test\nthreads: 0\n", encoding="utf-8")
        assert main(["run-all", "--config", str(path)]) == 2

    def test_bad_threads_flag(self, tmp_path):
        config = _pipeline_config(tmp_path)
        assert main(["run-all", "--config", str(config), "--threads", "0"]) == 2

    @pytest.mark.parametrize(
        "config_threads,flag,expected",
        [(None, None, 3), (2, None, 2), (2, "5", 5), (None, "5", 5)],
    )
    def test_thread_count_precedence(self, tmp_path, monkeypatch, config_threads, flag, expected):
        monkeypatch.setenv("CDRTOOL_THREADS", "3")
        config = _pipeline_config(tmp_path, threads=config_threads)
        argv = ["run-all", "--config", str(config)] + (["--threads", flag] if flag else [])
        # default inputs do not exist, so the run stops at ingest
        assert main(argv) == 2
        manifest = _json(tmp_path / "out" / "manifest.json")
        assert manifest["failing_stage"] == "ingest"
        assert manifest["threads"] == expected


class TestSubcommands:
    def test_step_by_step(self, tmp_path, tiny_inputs):
        store = tmp_path / "store.sqlite"
        seeds = tmp_path / "seeds.json"
        seeds.write_text(json.dumps({"seed_station_ids": [0, 1], "radius_m": 250.0}))
        event = tmp_path / "event.json"
        event.write_text(
            json.dumps({"show_start": "2014-08-20 20:30:00", "show_end": "2014-08-20 21:00:00", "margin_min": 30, "min_activity": 1})
        )
        labels = tmp_path / "areas.json"
        labels.write_text(json.dumps({"0": "Pest", "1": "Buda"}))

        steps = [
            ["ingest", "--cdr", tiny_inputs["cdr"], "--cells", tiny_inputs["cells"], "--devices", tiny_inputs["devices"], "--out", store],
            ["merge-cells", "--store", store, "--voronoi", tmp_path / "voronoi.geojson"],
            ["fuse", "--store", store, "--tacdb", tiny_inputs["tacdb"], "--coverage", tmp_path / "coverage.json"],
            ["filter-event", "--store", store, "--seeds", seeds, "--event", event, "--out", tmp_path / "attendance.sqlite"],
            ["aggregate", "--store", tmp_path / "attendance.sqlite", "--out", tmp_path / "aggregates.csv"],
            ["correlate", "--aggregates", tmp_path / "aggregates.csv", "--labels", labels, "--out", tmp_path / "report.json"],
            ["series", "--store", store, "--out", tmp_path / "series.csv", "--bin", "900"],
            ["render", "scatter", "--in", tmp_path / "report.json", "--out", tmp_path / "scatter.svg"],
        ]
        for step in steps:
            assert main([str(arg) for arg in step]) == 0, step[0]

        assert (tmp_path / "store.sqlite.manifest.json").exists()
        coverage = _json(tmp_path / "coverage.json")
        assert coverage["unmatched"] == 1
        aggregates = read_aggregates_csv(tmp_path / "aggregates.csv")
        assert [(a.station_id, a.n_total, a.n_with_ses) for a in aggregates] == [(0, 3, 1), (1, 1, 1)]
        assert aggregates[0].mean_price_eur == 500.0
        assert aggregates[1].mean_age_months == 27.0
        report = _json(tmp_path / "report.json")
        assert report["r"] == pytest.approx(-1.0)
        assert report["areas"]["Buda"]["mean_price_eur"] == 300.0
        assert (tmp_path / "scatter.svg").exists()

    def test_bad_rows_fail_ingest(self, tmp_path, tiny_inputs):
        cdr = tmp_path / "bad.csv"
        cdr.write_text("timestamp,device_hash,cell_hash,tac\n2014-08-20 20:00:00,d1,c1,12AB\n")
        store = tmp_path / "s.sqlite"
        args = ["ingest", "--cdr", cdr, "--cells", tiny_inputs["cells"], "--devices", tiny_inputs["devices"], "--out", store]
        assert main([str(a) for a in args]) == 1
        assert not store.exists()

    def test_synth(self, tmp_path):
        code = main(["synth", "--config", str(SCENARIOS / "small.yaml"), "--out-dir", str(tmp_path / "city")])
        assert code == 0
        assert (tmp_path / "city" / "ground_truth.json").exists()


class TestConfigDiscovery:
    def test_shipped_pipeline_is_valid(self):
        config = PipelineConfig.from_yaml(PIPELINES / "budapest_event.yaml")
        assert config.threads == 4
        assert config.ingest.max_error_rate == 0.01
        assert Path(config.inputs.cdr).is_absolute()

    def test_first_active_config(self, tmp_path):
        (tmp_path / "a.yaml").write_text("name: a\nactive: false\n")
        (tmp_path / "b.yaml").write_text("name: b\nactive: true\n")
        assert find_first_active_config(tmp_path) == tmp_path / "b.yaml"

    def test_no_active_config(self, tmp_path):
        (tmp_path / "a.yaml").write_text("name: a\nactive: false\n")
        assert find_first_active_config(tmp_path) is None


@pytest.mark.slow
def test_acceptance_scenario(tmp_path):
    config = _pipeline_config(tmp_path, threads=4)
    assert main(["run-all", "--config", str(config), "--scenario", str(SCENARIOS / "acceptance.yaml")]) == 0
    out = tmp_path / "out"
    truth = _json(out / "synth" / "ground_truth.json")
    report = _json(out / "report.json")
    assert truth["counts"]["cdr"] == 1_000_000
    assert report["r"] == pytest.approx(truth["planted_correlation_event"], abs=0.05)
    assert _json(out / "threshold.json")["kept_stations"] == truth["event"]["expected_kept"]
