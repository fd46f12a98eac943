import sqlite3

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from cdrtool.core.store import (
    CdrStore,
    StoreTables,
    partial_path,
    persist,
    persist_subset,
    query_window,
    query_window_table,
)
from cdrtool.geo.stations import merge_cells, remap_cdr_cells
from cdrtool.ingest import CdrTable, CellTable, DeviceTable, Dictionaries, IdDictionary, ingest_all
from cdrtool.utils.exceptions import ArgumentError, ConfigurationError, StoreError


def _random_tables(n_records: int = 10_000, n_cells: int = 40, n_devices: int = 300, seed: int = 3) -> StoreTables:
    rng = np.random.default_rng(seed)
    dicts = Dictionaries(
        devices=IdDictionary(f"d{i}" for i in range(n_devices)),
        cells=IdDictionary(f"c{i}" for i in range(n_cells)),
    )
    cells = CellTable(
        cell_id=np.arange(n_cells),
        lat=np.round(rng.uniform(47.47, 47.53, n_cells), 6),
        lon=np.round(rng.uniform(19.0, 19.1, n_cells), 6),
    )
    devices = DeviceTable(
        device_id=np.arange(n_devices),
        age=rng.integers(16, 80, n_devices),
        gender=rng.integers(0, 3, n_devices),
        customer_type=rng.integers(0, 2, n_devices),
        subscription=rng.integers(0, 2, n_devices),
    )
    cdrs = CdrTable(
        ts=rng.integers(1408320000, 1408752000, n_records),
        device_id=rng.integers(0, n_devices, n_records),
        cell_id=rng.integers(0, n_cells, n_records),
        tac=rng.integers(35_000_000, 35_000_500, n_records),
    )
    return StoreTables(cdrs=cdrs, cells=cells, devices=devices, dicts=dicts)


@pytest.fixture
def random_store(tmp_path):
    tables = _random_tables()
    path = persist(tmp_path / "store.sqlite", tables)
    with CdrStore(path) as store:
        yield store, tables


def _brute_force(cdrs: CdrTable, t0: int, t1: int, ids) -> np.ndarray:
    mask = (cdrs.ts >= t0) & (cdrs.ts < t1) & np.isin(cdrs.cell_id, list(ids))
    index = np.flatnonzero(mask)
    return index[np.argsort(cdrs.ts[index], kind="stable")]


class TestPersist:
    def test_reopen_preserves_tables(self, tmp_path, tiny_inputs):
        result = ingest_all(tiny_inputs["cdr"], tiny_inputs["cells"], tiny_inputs["devices"])
        path = persist(
            tmp_path / "store.sqlite",
            StoreTables(cdrs=result.cdrs, cells=result.cells, devices=result.devices, dicts=result.dicts),
            meta={"tz": "Europe/Budapest"},
        )
        with CdrStore(path) as store:
            assert store.counts()["cdr"] == len(result.cdrs)
            assert store.load_cdrs().equals(result.cdrs)
            assert store.load_dictionaries().devices == result.dicts.devices
            devices = store.load_devices()
            assert devices.age.tolist() == result.devices.age.tolist()
            assert devices.gender.tolist() == result.devices.gender.tolist()
            assert store.meta()["tz"] == "Europe/Budapest"
            assert not store.has_stations
        assert not partial_path(path).exists()

    def test_empty_tables(self, tmp_path):
        tables = StoreTables(
            cdrs=CdrTable.empty(),
            cells=CellTable(cell_id=[], lat=[], lon=[]),
            devices=DeviceTable(device_id=[], age=[], gender=[], customer_type=[], subscription=[]),
            dicts=Dictionaries(),
        )
        with CdrStore(persist(tmp_path / "empty.sqlite", tables)) as store:
            assert all(count == 0 for count in store.counts().values())
            assert len(store.load_cdrs()) == 0

    def test_indices_exist(self, random_store):
        store, _ = random_store
        assert {"idx_cdr_ts", "idx_cdr_device", "idx_cdr_cell", "idx_cdr_tac"} <= set(store.index_names())

    def test_window_query_uses_an_index(self, random_store):
        store, _ = random_store
        plan = " ".join(store.explain("SELECT * FROM cdr WHERE ts >= ? AND ts < ?", (0, 1)))
        assert "USING INDEX" in plan

    def test_failure_removes_partial_file(self, tmp_path, mocker):
        tables = _random_tables(n_records=10)
        mocker.patch("cdrtool.core.store._insert_cdrs", side_effect=sqlite3.OperationalError("disk full"))
        target = tmp_path / "store.sqlite"
        with pytest.raises(StoreError):
            persist(target, tables)
        assert not target.exists()
        assert not partial_path(target).exists()

    def test_failure_keeps_previous_store(self, tmp_path, mocker):
        target = persist(tmp_path / "store.sqlite", _random_tables(n_records=10))
        mocker.patch("cdrtool.core.store._insert_cdrs", side_effect=sqlite3.OperationalError("disk full"))
        with pytest.raises(StoreError):
            persist(target, _random_tables(n_records=20))
        with CdrStore(target) as store:
            assert store.counts()["cdr"] == 10

    def test_missing_store(self, tmp_path):
        with pytest.raises(ConfigurationError):
            CdrStore(tmp_path / "absent.sqlite")

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "other.sqlite"
        conn = sqlite3.connect(path)
        conn.execute("PRAGMA user_version = 99")
        conn.close()
        with pytest.raises(StoreError):
            CdrStore(path)

    def test_read_only_store_refuses_writes(self, random_store):
        store, _ = random_store
        with pytest.raises(ArgumentError):
            store.set_meta(reference="2014-08")


class TestQueryWindow:
    def test_whole_range_returns_everything(self, random_store):
        store, tables = random_store
        records = list(query_window(store, 0, 2**40, range(40)))
        assert len(records) == len(tables.cdrs)
        assert [r.ts for r in records] == sorted(r.ts for r in records)

    def test_empty_id_set(self, random_store):
        store, _ = random_store
        assert list(query_window(store, 0, 2**40, [])) == []
        assert len(query_window_table(store, 0, 2**40, [])) == 0

    def test_inverted_window(self, random_store):
        store, _ = random_store
        with pytest.raises(ArgumentError):
            list(query_window(store, 10, 10, [1]))

    def test_station_key_needs_merged_store(self, random_store):
        store, _ = random_store
        with pytest.raises(ArgumentError):
            list(query_window(store, 0, 10, [1], key="station_id"))

    @settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        start=st.integers(1408320000, 1408752000),
        length=st.integers(1, 200_000),
        ids=st.sets(st.integers(0, 39), max_size=40),
    )
    def test_matches_brute_force(self, random_store, start, length, ids):
        store, tables = random_store
        expected = _brute_force(tables.cdrs, start, start + length, ids)
        table = query_window_table(store, start, start + length, ids)
        assert np.array_equal(table.ts, tables.cdrs.ts[expected])
        assert np.array_equal(table.device_id, tables.cdrs.device_id[expected])
        streamed = list(query_window(store, start, start + length, ids))
        assert [r.ts for r in streamed] == table.ts.tolist()

    def test_more_ids_than_one_chunk(self, tmp_path):
        tables = _random_tables(n_records=5_000, n_cells=1_200, seed=11)
        with CdrStore(persist(tmp_path / "wide.sqlite", tables)) as store:
            ids = range(0, 1_200, 1)
            table = query_window_table(store, 1408400000, 1408600000, ids)
            expected = _brute_force(tables.cdrs, 1408400000, 1408600000, ids)
            assert np.array_equal(table.ts, tables.cdrs.ts[expected])
            assert np.array_equal(table.cell_id, tables.cdrs.cell_id[expected])
            streamed = list(query_window(store, 1408400000, 1408600000, ids))
            assert [r.cell_id for r in streamed] == table.cell_id.tolist()


class TestStationUpdates:
    def test_write_stations_remaps_records(self, tmp_path, tiny_inputs):
        result = ingest_all(tiny_inputs["cdr"], tiny_inputs["cells"], tiny_inputs["devices"])
        path = persist(
            tmp_path / "store.sqlite",
            StoreTables(cdrs=result.cdrs, cells=result.cells, devices=result.devices, dicts=result.dicts),
        )
        stations, cell_to_station = merge_cells(result.cells)
        with CdrStore(path, writable=True) as store:
            store.write_stations(stations, cell_to_station)
        with CdrStore(path) as store:
            assert store.has_stations
            assert "idx_cdr_station" in store.index_names()
            expected = remap_cdr_cells(result.cdrs, cell_to_station)
            assert store.load_cdrs().equals(expected)
            counts = store.station_counts()
            assert counts["n_records"].tolist() == [4, 2]
            assert store.load_stations().members == [[0, 1], [2]]

    def test_persist_subset_carries_lookup_tables(self, tmp_path, random_store):
        store, tables = random_store
        subset = tables.cdrs.take(np.arange(100))
        path = persist_subset(tmp_path / "subset.sqlite", store, subset, {"note": "first hundred"})
        with CdrStore(path) as copy:
            assert copy.counts()["cdr"] == 100
            assert copy.counts()["device"] == len(tables.devices)
            assert copy.meta()["note"] == "first hundred"
            assert copy.load_cdrs().equals(subset)
