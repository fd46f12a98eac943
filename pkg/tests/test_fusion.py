import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdrtool.fusion import (
    PhonePropertyTable,
    SesSample,
    SesSampleTable,
    demote_anomalies,
    flag_anomalies,
    fuse,
    load_tacdb,
    months_between,
    per_device_samples,
)
from cdrtool.ingest import CdrTable
from cdrtool.utils.exceptions import ArgumentError, ConfigurationError

from conftest import write_lines

year_months = st.tuples(st.integers(2000, 2020), st.integers(1, 12))


def _properties() -> PhonePropertyTable:
    return PhonePropertyTable(
        tac=[35000002, 35000001, 35000003],
        release_year=[2012, 2014, 2014],
        release_month=[5, 6, 10],
        price_eur=[300.0, 500.0, 650.0],
    )


def _cdrs(tacs, stations=None, devices=None) -> CdrTable:
    n = len(tacs)
    return CdrTable(
        ts=np.arange(n) + 1408557600,
        device_id=devices if devices is not None else np.arange(n),
        cell_id=np.zeros(n),
        tac=tacs,
        station_id=stations if stations is not None else np.zeros(n),
    )


class TestMonthsBetween:
    @pytest.mark.parametrize(
        "release,reference,expected",
        [
            ((2014, 8), (2014, 8), 0),
            ((2013, 8), (2014, 8), 12),
            ((2012, 5), (2014, 8), 27),
            ((2014, 10), (2014, 8), -2),
        ],
    )
    def test_examples(self, release, reference, expected):
        assert months_between(release, reference) == expected

    def test_every_month_of_two_decades(self):
        months = [(y, m) for y in range(2000, 2021) for m in range(1, 13)]
        for i, release in enumerate(months):
            assert months_between(release, (2014, 8)) == months.index((2014, 8)) - i

    @given(year_months, year_months)
    def test_antisymmetric(self, a, b):
        assert months_between(a, b) == -months_between(b, a)

    @given(year_months, year_months, year_months)
    def test_additive(self, a, b, c):
        assert months_between(a, c) == months_between(a, b) + months_between(b, c)

    @pytest.mark.parametrize("release", [(2014, 0), (2014, 13)])
    def test_invalid_month(self, release):
        with pytest.raises(ArgumentError):
            months_between(release, (2014, 8))


class TestFuse:
    def test_indicators_for_matched_tac(self):
        samples, report = fuse(_cdrs([35000001]), _properties(), reference=(2014, 8))
        assert samples.has_ses.tolist() == [True]
        assert samples.price_eur[0] == 500.0
        assert samples.age_months[0] == 2
        assert report.matched == 1

    def test_unmatched_tac_keeps_the_record(self):
        samples, report = fuse(_cdrs([99999999, 35000002]), _properties())
        assert len(samples) == 2
        assert samples.has_ses.tolist() == [False, True]
        assert np.isnan(samples.price_eur[0])
        assert report.unmatched == 1
        assert report.unmatched_tacs == [99999999]
        assert report.matched_fraction == pytest.approx(0.5)

    def test_one_sample_per_record_in_order(self):
        tacs = [35000003, 35000001, 12345678, 35000001]
        cdrs = _cdrs(tacs, stations=[3, 1, 2, 0])
        samples, _ = fuse(cdrs, _properties())
        assert samples.station_id.tolist() == [3, 1, 2, 0]
        assert samples.ts.tolist() == cdrs.ts.tolist()
        assert samples.age_months.tolist()[:2] == [-2, 2]

    def test_empty_property_table(self):
        empty = PhonePropertyTable(tac=[], release_year=[], release_month=[], price_eur=[])
        samples, report = fuse(_cdrs([35000001, 35000002]), empty)
        assert not samples.has_ses.any()
        assert report.matched == 0

    def test_needs_station_ids(self):
        cdrs = CdrTable(ts=[1], device_id=[0], cell_id=[0], tac=[35000001])
        with pytest.raises(ArgumentError):
            fuse(cdrs, _properties())

    def test_property_table_is_sorted_by_tac(self):
        table = _properties()
        assert table.tac.tolist() == [35000001, 35000002, 35000003]
        assert table.price_eur.tolist() == [500.0, 300.0, 650.0]

    def test_duplicate_tac_in_table(self):
        with pytest.raises(ArgumentError):
            PhonePropertyTable(tac=[2, 1, 2], release_year=[2014] * 3, release_month=[1] * 3, price_eur=[1.0] * 3)


class TestAnomalies:
    def _samples(self, ages):
        n = len(ages)
        return SesSampleTable(
            device_id=np.arange(n),
            station_id=np.zeros(n),
            ts=np.arange(n),
            price_eur=np.full(n, 100.0),
            age_months=ages,
            has_ses=np.ones(n, dtype=bool),
        )

    def test_release_month_equal_to_reference_is_valid(self):
        valid, anomalous = flag_anomalies(self._samples([0, -1, 5]))
        assert valid.age_months.tolist() == [0, 5]
        assert anomalous.age_months.tolist() == [-1]

    def test_demotion_keeps_records(self):
        samples, n = demote_anomalies(self._samples([0, -1, 5]))
        assert n == 1
        assert len(samples) == 3
        assert samples.has_ses.tolist() == [True, False, True]
        assert np.isnan(samples.price_eur[1])

    def test_nothing_to_demote(self):
        original = self._samples([1, 2])
        samples, n = demote_anomalies(original)
        assert n == 0
        assert samples is original


class TestPerDeviceSamples:
    def test_prefers_earliest_matched_sample(self):
        samples = SesSampleTable.from_samples(
            [
                SesSample(device_id=1, station_id=0, ts=10),
                SesSample(device_id=1, station_id=0, ts=20, price_eur=400.0, age_months=3),
                SesSample(device_id=1, station_id=0, ts=30, price_eur=900.0, age_months=1),
                SesSample(device_id=1, station_id=1, ts=5),
                SesSample(device_id=2, station_id=0, ts=15, price_eur=200.0, age_months=8),
            ]
        )
        reduced = list(per_device_samples(samples).samples())
        assert [(s.station_id, s.device_id, s.ts) for s in reduced] == [(0, 1, 20), (0, 2, 15), (1, 1, 5)]
        assert reduced[0].price_eur == 400.0
        assert reduced[2].price_eur is None

    def test_empty(self):
        empty = SesSampleTable.from_samples([])
        assert len(per_device_samples(empty)) == 0


class TestLoadTacdb:
    def test_tiny_inputs(self, tiny_inputs):
        table, report = load_tacdb(tiny_inputs["tacdb"])
        assert len(table) == 4
        assert report.errors == 0
        assert table.brand[0] == "Acme"

    def test_invalid_rows_are_reported_and_skipped(self, tmp_path):
        path = write_lines(
            tmp_path / "tacdb.csv",
            [
                "tac,brand,model,release_year,release_month,price_eur",
                "35000001,Acme,One,2014,6,500.00",
                "35000001,Acme,One again,2014,6,500.00",
                "3500,Acme,Short,2014,6,500.00",
                "35000002,Acme,Two,2014,13,500.00",
                "35000003,Acme,Three,2014,6,-1",
                "35000004,Acme,Four,2014,6,cheap",
            ],
        )
        table, report = load_tacdb(path)
        assert table.tac.tolist() == [35000001]
        assert report.errors == 5
        assert report.conserved

    def test_fuse_tiny_inputs(self, tiny_inputs):
        table, _ = load_tacdb(tiny_inputs["tacdb"])
        samples, report = fuse(_cdrs([35000001, 35000002, 35000003, 35000004, 99999999]), table, (2014, 8))
        assert samples.age_months.tolist()[:4] == [2, 27, -2, 12]
        assert samples.price_eur.tolist()[:4] == [500.0, 300.0, 650.0, 200.0]
        assert report.unmatched == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_tacdb(tmp_path / "absent.csv")
