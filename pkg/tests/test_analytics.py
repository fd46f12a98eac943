import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from cdrtool.analytics import (
    POOLED,
    CorrelationReport,
    StationAggregate,
    activity_series,
    age_bucket_labels,
    aggregate_station,
    area_summary,
    correlation_report,
    daily_profiles,
    demographic_summary,
    pearson,
    read_aggregates_csv,
    read_series_csv,
    write_aggregates_csv,
    write_series_csv,
)
from cdrtool.fusion import SesSample, SesSampleTable
from cdrtool.ingest import CdrTable, DeviceTable
from cdrtool.utils.exceptions import ArgumentError, DataQualityError, InvariantViolation, UndefinedCorrelationError

from conftest import SHOW_START

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _samples(rows) -> SesSampleTable:
    """rows of (station, device, price or None, age or None)."""
    return SesSampleTable.from_samples(
        SesSample(device_id=d, station_id=s, ts=i, price_eur=p, age_months=a) for i, (s, d, p, a) in enumerate(rows)
    )


def _aggregate(station_id, price, age, n=10) -> StationAggregate:
    return StationAggregate(station_id=station_id, n_total=n, n_with_ses=n, mean_price_eur=price, mean_age_months=age)


class TestPearson:
    def test_small_example(self):
        assert pearson([(1, 1), (2, 3), (3, 2), (4, 5)]) == pytest.approx(11 / (5 * math.sqrt(7)), abs=1e-12)

    def test_perfect_lines(self):
        assert pearson([(1, 2), (2, 4), (3, 6)]) == pytest.approx(1.0)
        assert pearson([(1, 6), (2, 4), (3, 2)]) == pytest.approx(-1.0)

    def test_two_points_are_perfectly_correlated(self):
        assert pearson([(400.0, 10.0), (300.0, 20.0)]) == pytest.approx(-1.0)

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            pearson([(1.0, 2.0)])

    def test_zero_variance(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)])

    @given(st.lists(st.tuples(finite, finite), min_size=2, max_size=60))
    def test_bounded(self, points):
        try:
            r = pearson(points)
        except UndefinedCorrelationError:
            return
        assert -1.0 <= r <= 1.0

    @given(
        st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=40),
        st.floats(0.1, 100.0),
        st.floats(-1e3, 1e3),
    )
    def test_affine_invariance(self, points, scale, shift):
        x = np.array([p[0] for p in points])
        y = np.array([p[1] for p in points])
        assume(np.std(x) > 1e-3 and np.std(y) > 1e-3)
        r = pearson(points)
        moved = [(scale * a + shift, b) for a, b in points]
        assert pearson(moved) == pytest.approx(r, abs=1e-9)
        flipped = [(-a, b) for a, b in points]
        assert pearson(flipped) == pytest.approx(-r, abs=1e-9)


class TestCorrelationReport:
    def test_two_stations(self):
        report = correlation_report([_aggregate(0, 400.0, 10.0), _aggregate(1, 300.0, 20.0)])
        assert report.r == pytest.approx(-1.0)
        assert report.n == 2

    def test_stations_without_ses_are_excluded(self):
        empty = StationAggregate(station_id=5, n_total=3, n_with_ses=0)
        report = correlation_report([_aggregate(0, 400.0, 10.0), empty, _aggregate(1, 300.0, 20.0)])
        assert report.excluded_stations == [5]
        assert [p.station_id for p in report.points] == [0, 1]

    def test_one_usable_station(self):
        with pytest.raises(DataQualityError):
            correlation_report([_aggregate(0, 400.0, 10.0), StationAggregate(station_id=1, n_total=3, n_with_ses=0)])

    def test_identical_means(self):
        with pytest.raises(UndefinedCorrelationError):
            correlation_report([_aggregate(0, 400.0, 10.0), _aggregate(1, 400.0, 20.0)])

    def test_areas_are_sample_weighted(self):
        aggregates = [_aggregate(0, 400.0, 10.0, n=1), _aggregate(1, 100.0, 40.0, n=3), _aggregate(2, 300.0, 20.0)]
        summary = area_summary(aggregates, {0: "Buda", 1: "Buda"})
        assert summary["Buda"].mean_price_eur == pytest.approx(175.0)
        assert summary["Buda"].n_stations == 2
        assert summary["unlabeled"].mean_age_months == pytest.approx(20.0)

    def test_json_readback(self, tmp_path):
        report = correlation_report(
            [_aggregate(0, 400.0, 10.0), _aggregate(1, 300.0, 20.0), _aggregate(2, 350.0, 12.0)],
            {0: "Pest", 1: "Buda"},
        )
        path = report.write_json(tmp_path / "report.json")
        again = CorrelationReport.read_json(path)
        assert again.r == report.r
        assert again.points == report.points
        assert again.areas["Pest"].mean_price_eur == 400.0

    def test_r_outside_bounds_is_rejected(self):
        with pytest.raises(ArgumentError):
            CorrelationReport(r=1.5, n=3, points=[])


class TestAggregate:
    def test_mean_of_two_samples(self):
        aggregates = aggregate_station(_samples([(0, 1, 400.0, 10), (0, 2, 600.0, 20)]))
        assert len(aggregates) == 1
        assert aggregates[0].mean_price_eur == pytest.approx(500.0)
        assert aggregates[0].mean_age_months == pytest.approx(15.0)
        assert aggregates[0].n_devices == 2

    def test_unmatched_only_station(self):
        aggregates = aggregate_station(_samples([(3, 1, None, None), (3, 2, None, None), (4, 1, 100.0, 1)]))
        empty = aggregates[0]
        assert (empty.station_id, empty.n_total, empty.n_with_ses) == (3, 2, 0)
        assert empty.mean_price_eur is None
        assert not empty.has_ses

    def test_listed_station_without_samples(self):
        aggregates = aggregate_station(_samples([(0, 1, 400.0, 10)]), stations=[0, 7])
        assert [a.station_id for a in aggregates] == [0, 7]
        assert aggregates[1].n_total == 0

    def test_inconsistent_aggregate(self):
        with pytest.raises(InvariantViolation):
            StationAggregate(station_id=0, n_total=1, n_with_ses=2, mean_price_eur=1.0, mean_age_months=1.0)
        with pytest.raises(InvariantViolation):
            StationAggregate(station_id=0, n_total=1, n_with_ses=1)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        n = 5_000
        matched = rng.random(n) < 0.8
        samples = SesSampleTable(
            device_id=rng.integers(0, 200, n),
            station_id=rng.integers(0, 15, n),
            ts=np.arange(n),
            price_eur=np.where(matched, rng.uniform(50, 1000, n).round(2), np.nan),
            age_months=np.where(matched, rng.integers(0, 60, n), 0),
            has_ses=matched,
        )
        for agg in aggregate_station(samples):
            at = samples.station_id == agg.station_id
            assert agg.n_total == int(at.sum())
            assert agg.n_with_ses == int((at & matched).sum())
            assert agg.mean_price_eur == pytest.approx(samples.price_eur[at & matched].mean(), rel=1e-9)
            assert agg.mean_age_months == pytest.approx(samples.age_months[at & matched].mean(), rel=1e-9)
            assert agg.n_devices == len(np.unique(samples.device_id[at]))

    def test_threads_do_not_change_the_result(self):
        rng = np.random.default_rng(9)
        n = 20_000
        samples = SesSampleTable(
            device_id=rng.integers(0, 500, n),
            station_id=rng.integers(0, 30, n),
            ts=np.arange(n),
            price_eur=rng.uniform(50, 1000, n),
            age_months=rng.integers(0, 60, n),
            has_ses=np.ones(n, dtype=bool),
        )
        serial = aggregate_station(samples, threads=1)
        parallel = aggregate_station(samples, threads=4)
        for a, b in zip(serial, parallel):
            assert (a.station_id, a.n_total, a.n_with_ses, a.n_devices) == (b.station_id, b.n_total, b.n_with_ses, b.n_devices)
            assert a.mean_price_eur == pytest.approx(b.mean_price_eur, abs=1e-9)
            assert a.mean_age_months == pytest.approx(b.mean_age_months, abs=1e-9)

    def test_demographics_count_distinct_devices(self):
        devices = DeviceTable(
            device_id=[1, 2, 3], age=[34, -1, 61], gender=[1, 0, 2], customer_type=[0, 1, 0], subscription=[0, 1, 1]
        )
        samples = _samples([(0, 1, 400.0, 10), (0, 1, 400.0, 10), (0, 2, None, None), (0, 3, 300.0, 5), (0, 9, None, None)])
        agg = aggregate_station(samples, devices)[0]
        assert agg.n_devices == 4
        assert agg.age_histogram["30-39"] == 1
        assert agg.age_histogram["60-69"] == 1
        assert agg.age_histogram["unknown"] == 2
        assert agg.gender_counts == {"male": 1, "female": 1, "unknown": 2}

        summary = demographic_summary(devices, [1, 1, 2, 3])
        assert summary.n_devices == 3
        assert sum(summary.age_histogram.values()) == 3

    def test_bucket_labels(self):
        labels = age_bucket_labels()
        assert labels[0] == "0-9"
        assert labels[-2] == "110-119"
        assert labels[-1] == "unknown"

    def test_csv_readback(self, tmp_path):
        aggregates = aggregate_station(
            _samples([(0, 1, 400.1, 10), (0, 2, 600.3, 21), (1, 1, None, None)]), stations=[0, 1, 2]
        )
        path = write_aggregates_csv(aggregates, tmp_path / "aggregates.csv")
        assert read_aggregates_csv(path) == aggregates


class TestSeries:
    def _cdrs(self, ts, stations=None) -> CdrTable:
        n = len(ts)
        stations = np.zeros(n) if stations is None else stations
        return CdrTable(ts=ts, device_id=np.zeros(n), cell_id=stations, tac=np.zeros(n), station_id=stations)

    def test_records_in_one_bin(self):
        series = activity_series(self._cdrs(SHOW_START + np.arange(10) * 60), bin_width_s=3600, start=SHOW_START)
        assert series.pooled.counts.tolist() == [10]
        assert series.pooled.peak_bin() == SHOW_START

    def test_empty_input(self):
        series = activity_series(CdrTable.empty(with_stations=True), start=SHOW_START, end=SHOW_START + 7200)
        assert series.pooled.counts.tolist() == [0, 0]
        assert series.per_station == {}

    def test_range_end_excludes_later_records(self):
        ts = [SHOW_START, SHOW_START + 100, SHOW_START + 3600, SHOW_START + 5000]
        series = activity_series(self._cdrs(ts), start=SHOW_START, end=SHOW_START + 4000)
        assert series.pooled.counts.tolist() == [2, 1]
        assert series.pooled.end == SHOW_START + 7200

    @given(st.lists(st.integers(0, 86_399), max_size=300), st.sampled_from([60, 900, 3600]))
    def test_bins_sum_to_records_in_range(self, offsets, width):
        ts = SHOW_START + np.array(offsets, dtype=np.int64)
        stations = np.array(offsets, dtype=np.int64) % 3
        series = activity_series(self._cdrs(ts, stations), bin_width_s=width, start=SHOW_START, end=SHOW_START + 86_400)
        assert series.pooled.total == len(offsets)
        assert sum(s.total for s in series.per_station.values()) == len(offsets)
        for station_id, s in series.per_station.items():
            assert s.total == int((stations == station_id).sum())

    def test_bad_width(self):
        with pytest.raises(ArgumentError):
            activity_series(self._cdrs([SHOW_START]), bin_width_s=0)

    def test_daily_profiles_follow_local_days(self):
        # 2014-08-20 23:30 and 2014-08-21 00:30 local time
        ts = [1408570200, 1408573800]
        profiles = daily_profiles(self._cdrs(ts), "Europe/Budapest")
        assert list(profiles) == ["2014-08-20", "2014-08-21"]
        assert profiles["2014-08-20"].counts[23] == 1
        assert profiles["2014-08-21"].counts[0] == 1
        assert len(profiles["2014-08-20"]) == 24

    def test_daily_profile_on_dst_change(self):
        # 2014-10-26 is 25 hours long in Budapest
        profiles = daily_profiles(self._cdrs([1414310400]), "Europe/Budapest")
        assert len(profiles["2014-10-26"]) == 25

    def test_csv_readback(self, tmp_path):
        series = activity_series(self._cdrs([SHOW_START, SHOW_START + 10, SHOW_START + 4000], [0, 1, 1]))
        path = write_series_csv(series.all(), tmp_path / "series.csv")
        again = read_series_csv(path)
        assert [s.label for s in again] == [POOLED, "station 0", "station 1"]
        assert again[0].counts.tolist() == series.pooled.counts.tolist()
        assert again[2].bin_start == series.per_station[1].bin_start
