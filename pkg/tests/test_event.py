import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from cdrtool.core.config import EventConfig
from cdrtool.core.store import CdrStore, StoreTables, persist
from cdrtool.event import EventSpec, apply_activity_threshold, attendance_window, filter_event
from cdrtool.geo import merge_cells, remap_cdr_cells
from cdrtool.ingest import CdrTable, ingest_all
from cdrtool.utils.exceptions import ArgumentError, DataQualityError

from conftest import SHOW_START, WINDOW_END, WINDOW_START


def _spec(stations=(0, 1), **kwargs) -> EventSpec:
    return EventSpec(stations=frozenset(stations), t_start=SHOW_START, t_end=SHOW_START + 1800, **kwargs)


def _station_records(counts) -> CdrTable:
    station_id = np.repeat(np.arange(len(counts)), counts)
    n = len(station_id)
    return CdrTable(
        ts=np.full(n, SHOW_START),
        device_id=np.arange(n),
        cell_id=station_id,
        tac=np.zeros(n),
        station_id=station_id,
    )


@pytest.fixture
def tiny_merged(tmp_path, tiny_inputs):
    result = ingest_all(tiny_inputs["cdr"], tiny_inputs["cells"], tiny_inputs["devices"])
    stations, cell_to_station = merge_cells(result.cells)
    cdrs = remap_cdr_cells(result.cdrs, cell_to_station)
    path = persist(
        tmp_path / "store.sqlite",
        StoreTables(cdrs=result.cdrs, cells=result.cells, devices=result.devices, dicts=result.dicts),
    )
    with CdrStore(path, writable=True) as store:
        store.write_stations(stations, cell_to_station)
    return path, cdrs


class TestWindow:
    def test_default_margin(self):
        assert attendance_window(_spec()) == (WINDOW_START, WINDOW_END)

    def test_from_config(self):
        spec = EventSpec.from_config(EventConfig(), [3, 1])
        assert (spec.t_start, spec.t_end, spec.margin_s, spec.min_activity) == (SHOW_START, SHOW_START + 1800, 1800, 500)
        assert spec.with_stations([7]).stations == frozenset({7})

    def test_zero_margin_is_the_show(self):
        assert attendance_window(_spec(margin_s=0)) == (SHOW_START, SHOW_START + 1800)

    @pytest.mark.parametrize(
        "kwargs", [{"margin_s": -1}, {"min_activity": -1}],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ArgumentError):
            _spec(**kwargs)

    def test_end_before_start(self):
        with pytest.raises(ArgumentError):
            EventSpec(stations=frozenset({0}), t_start=SHOW_START, t_end=SHOW_START)


class TestFilterEvent:
    def test_window_boundaries(self, tiny_merged):
        path, _ = tiny_merged
        with CdrStore(path) as store:
            records = filter_event(store, _spec())
        # 19:59:59 and 21:30:00 fall outside, 20:00:00 and 21:29:59 inside
        assert records.ts.tolist() == [WINDOW_START, WINDOW_START + 600, WINDOW_START + 2700, WINDOW_END - 1]
        assert records.station_id.tolist() == [0, 0, 1, 0]

    def test_store_and_table_agree(self, tiny_merged):
        path, cdrs = tiny_merged
        with CdrStore(path) as store:
            for stations in ([0], [1], [0, 1]):
                assert filter_event(store, _spec(stations)).equals(filter_event(cdrs, _spec(stations)))

    def test_no_stations(self, tiny_merged):
        _, cdrs = tiny_merged
        with pytest.raises(ArgumentError):
            filter_event(cdrs, _spec(stations=()))

    def test_table_without_stations(self, tiny_inputs):
        result = ingest_all(tiny_inputs["cdr"], tiny_inputs["cells"], tiny_inputs["devices"])
        with pytest.raises(ArgumentError):
            filter_event(result.cdrs, _spec())

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        ts=st.lists(st.integers(WINDOW_START - 4000, WINDOW_END + 4000), min_size=1, max_size=200),
        data=st.data(),
    )
    def test_matches_brute_force(self, ts, data):
        n = len(ts)
        station_id = np.array(data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n)))
        stations = data.draw(st.sets(st.integers(0, 5), min_size=1))
        cdrs = CdrTable(ts=ts, device_id=np.arange(n), cell_id=station_id, tac=np.zeros(n), station_id=station_id)
        result = filter_event(cdrs, _spec(stations))
        expected = sorted(
            (t, i) for i, (t, s) in enumerate(zip(ts, station_id)) if WINDOW_START <= t < WINDOW_END and s in stations
        )
        assert result.device_id.tolist() == [i for _, i in expected]


class TestActivityThreshold:
    def test_mixed_counts(self):
        spec = _spec(stations=(0, 1, 2, 3), min_activity=500)
        result = apply_activity_threshold(_station_records([600, 450, 510, 12]), spec)
        assert result.kept_stations == [0, 2]
        assert result.removed_stations == {1: 450, 3: 12}
        assert len(result.cdrs) == 1110
        assert result.to_dict()["removed_stations"] == {"1": 450, "3": 12}

    @pytest.mark.parametrize("count,kept", [(499, False), (500, True), (501, True)])
    def test_threshold_is_inclusive(self, count, kept):
        spec = _spec(stations=(0, 1), min_activity=500)
        result = apply_activity_threshold(_station_records([1000, count]), spec)
        assert (1 in result.kept_stations) is kept

    def test_zero_threshold_keeps_silent_stations(self):
        spec = _spec(stations=(0, 1, 2), min_activity=0)
        result = apply_activity_threshold(_station_records([3, 0, 5]), spec)
        assert result.kept_stations == [0, 1, 2]
        assert result.counts[1] == 0

    def test_all_removed(self):
        spec = _spec(stations=(0, 1), min_activity=500)
        with pytest.raises(DataQualityError):
            apply_activity_threshold(_station_records([10, 20]), spec)

    def test_idempotent(self):
        spec = _spec(stations=(0, 1, 2, 3), min_activity=500)
        once = apply_activity_threshold(_station_records([600, 450, 510, 12]), spec)
        twice = apply_activity_threshold(once.cdrs, spec.with_stations(once.kept_stations))
        assert twice.kept_stations == once.kept_stations
        assert twice.removed_stations == {}
        assert twice.cdrs.equals(once.cdrs)

    def test_generated_city_matches_ground_truth(self, small_city):
        files = small_city.files
        truth = small_city.ground_truth
        result = ingest_all(files["cdr"], files["cells"], files["devices"])
        stations, cell_to_station = merge_cells(result.cells)
        cdrs = remap_cdr_cells(result.cdrs, cell_to_station)
        event = truth["event"]
        spec = EventSpec(
            stations=frozenset(event["stations"]),
            t_start=event["window"][0] + 1800,
            t_end=event["window"][1] - 1800,
            min_activity=50,
        )
        window = filter_event(cdrs, spec)
        assert len(window) == event["n_window_records"]
        threshold = apply_activity_threshold(window, spec)
        assert threshold.kept_stations == event["expected_kept"]
        assert sorted(threshold.removed_stations) == event["expected_removed"]
        assert {str(k): v for k, v in threshold.counts.items()} == event["window_counts"]
