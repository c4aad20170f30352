import random
from datetime import datetime, timezone

import pytest

from geovisits.errors import InputError, TimeRangeError
from geovisits.ingest import (
    BoundingBox,
    TweetRecord,
    TzRules,
    bbox_filter,
    build_trajectories,
    epoch_from_rfc3339,
    median_filter,
    parse_stream,
    rfc3339_from_epoch,
    to_local_time,
    utc_from_local,
)

CHICAGO = BoundingBox(41.201577, -88.707599, 42.495775, -87.524535)
TZ2014 = TzRules(year_min=2014, year_max=2014)


def _epoch(*args) -> int:
    return int(datetime(*args, tzinfo=timezone.utc).timestamp())


class TestParseStream:
    def test_wellformed_ndjson_line(self):
        line = '{"user":"u1","lon":-87.6,"lat":41.9,"ts":"2014-06-01T12:00:00Z"}'
        result = parse_stream([line])
        assert result.error_count == 0
        assert result.records == [
            TweetRecord("u1", -87.6, 41.9, _epoch(2014, 6, 1, 12, 0, 0))
        ]

    def test_latitude_out_of_range(self):
        line = '{"user":"u1","lon":-87.6,"lat":95,"ts":"2014-06-01T12:00:00Z"}'
        result = parse_stream([line])
        assert result.records == []
        assert result.error_count == 1
        assert result.errors[0] == (1, "latitude out of range")

    def test_three_valid_one_truncated(self):
        good = '{"user":"u%d","lon":-87.6,"lat":41.9,"ts":"2014-06-01T12:00:00Z"}'
        lines = [good % 1, good % 2, '{"user":"u3","lon":-87.', good % 4]
        result = parse_stream(lines)
        assert len(result.records) == 3
        assert result.error_count == 1
        assert result.errors[0][0] == 3

    def test_missing_fields_and_bad_ts(self):
        lines = [
            '{"lon":-87.6,"lat":41.9,"ts":"2014-06-01T12:00:00Z"}',
            '{"user":"u1","lon":"x","lat":41.9,"ts":"2014-06-01T12:00:00Z"}',
            '{"user":"u1","lon":-87.6,"lat":41.9,"ts":"yesterday"}',
        ]
        result = parse_stream(lines)
        assert result.records == []
        assert result.error_count == 3

    def test_blank_lines_skipped(self):
        line = '{"user":"u1","lon":-87.6,"lat":41.9,"ts":"2014-06-01T12:00:00Z"}'
        result = parse_stream([line, "", "  ", line])
        assert len(result.records) == 2
        assert result.error_count == 0

    def test_csv_roundtrip(self):
        lines = [
            "user,lon,lat,ts",
            "u1,-87.6,41.9,2014-06-01T12:00:00Z",
            "u2,-87.7,41.8,2014-06-02T13:30:00Z",
        ]
        result = parse_stream(lines, fmt="csv")
        assert [r.user_id for r in result.records] == ["u1", "u2"]
        assert result.error_count == 0

    def test_csv_bad_header_fatal(self):
        with pytest.raises(InputError):
            parse_stream(["who,where,when"], fmt="csv")

    def test_csv_short_row_recoverable(self):
        result = parse_stream(["user,lon,lat,ts", "u1,-87.6,41.9"], fmt="csv")
        assert result.records == []
        assert result.error_count == 1

    def test_unknown_format(self):
        with pytest.raises(InputError):
            parse_stream([], fmt="parquet")


class TestBBoxFilter:
    def test_chicago_point_retained(self):
        recs = [TweetRecord("u", -87.6, 41.9, 0)]
        assert bbox_filter(recs, CHICAGO) == recs

    def test_south_of_box_dropped(self):
        recs = [TweetRecord("u", -87.6, 40.0, 0)]
        assert bbox_filter(recs, CHICAGO) == []

    def test_boundary_inclusive(self):
        recs = [TweetRecord("u", -87.6, CHICAGO.min_lat, 0)]
        assert bbox_filter(recs, CHICAGO) == recs

    def test_idempotent(self):
        rng = random.Random(11)
        recs = [
            TweetRecord("u", rng.uniform(-90, -86), rng.uniform(40, 44), 0)
            for _ in range(500)
        ]
        once = bbox_filter(recs, CHICAGO)
        assert bbox_filter(once, CHICAGO) == once

    def test_invalid_box(self):
        with pytest.raises(InputError):
            BoundingBox(42.0, -88.0, 41.0, -87.0)


class TestLocalTime:
    def test_summer_cdt(self):
        local = to_local_time(_epoch(2014, 6, 1, 12), TZ2014)
        assert local == datetime(2014, 6, 1, 7, 0)

    def test_winter_cst(self):
        local = to_local_time(_epoch(2014, 1, 15, 12), TZ2014)
        assert local == datetime(2014, 1, 15, 6, 0)

    # 2014 US transitions (published): DST began Mar 9 02:00, ended Nov 2 02:00.
    def test_spring_forward_instant(self):
        assert to_local_time(_epoch(2014, 3, 9, 8), TZ2014) == datetime(2014, 3, 9, 3, 0)
        assert to_local_time(_epoch(2014, 3, 9, 7, 59, 59), TZ2014) == datetime(
            2014, 3, 9, 1, 59, 59
        )

    def test_fall_back_instant(self):
        assert to_local_time(_epoch(2014, 11, 2, 6, 59, 59), TZ2014) == datetime(
            2014, 11, 2, 1, 59, 59
        )
        assert to_local_time(_epoch(2014, 11, 2, 7), TZ2014) == datetime(2014, 11, 2, 1, 0)

    def test_out_of_range_year(self):
        with pytest.raises(TimeRangeError):
            to_local_time(_epoch(2013, 12, 31, 23), TZ2014)

    def test_local_year_boundary_uses_local_calendar(self):
        # early-UTC January 2015 is still December 2014 locally
        local = to_local_time(_epoch(2015, 1, 1, 3), TZ2014)
        assert local == datetime(2014, 12, 31, 21, 0)

    def test_roundtrip_excluding_fall_back_hour(self):
        rng = random.Random(7)
        start = _epoch(2014, 1, 1, 12)
        end = _epoch(2014, 12, 30, 12)
        ambiguous_lo = _epoch(2014, 11, 2, 6)  # repeated local hour
        ambiguous_hi = _epoch(2014, 11, 2, 8)
        for _ in range(500):
            t = rng.randrange(start, end)
            if ambiguous_lo <= t < ambiguous_hi:
                continue
            assert utc_from_local(to_local_time(t, TZ2014), TZ2014) == t

    def test_gap_local_time_rejected(self):
        with pytest.raises(TimeRangeError):
            utc_from_local(datetime(2014, 3, 9, 2, 30), TZ2014)

    def test_rule_start_year_guard(self):
        with pytest.raises(InputError):
            TzRules(year_min=2006, year_max=2006)

    def test_rfc3339_roundtrip(self):
        t = _epoch(2014, 7, 4, 4, 5, 6)
        assert epoch_from_rfc3339(rfc3339_from_epoch(t)) == t


class TestTrajectories:
    def test_sorts_by_time(self):
        recs = [
            TweetRecord("u1", 0.0, 0.0, 3),
            TweetRecord("u1", 0.1, 0.0, 1),
            TweetRecord("u1", 0.2, 0.0, 2),
        ]
        trajs = build_trajectories(recs)
        assert [r.t_utc for r in trajs[0].points] == [1, 2, 3]

    def test_two_users_interleaved(self):
        recs = [
            TweetRecord("b", 0.0, 0.0, 1),
            TweetRecord("a", 0.0, 0.0, 2),
            TweetRecord("b", 0.0, 0.0, 3),
        ]
        trajs = build_trajectories(recs)
        assert [t.user_id for t in trajs] == ["a", "b"]
        assert len(trajs[1]) == 2

    def test_duplicates_preserve_input_order(self):
        first = TweetRecord("u", 1.0, 0.0, 5)
        second = TweetRecord("u", 2.0, 0.0, 5)
        trajs = build_trajectories([first, second])
        assert trajs[0].points == [first, second]

    def test_record_count_conserved(self):
        rng = random.Random(3)
        recs = [
            TweetRecord(f"u{rng.randrange(20)}", 0.0, 0.0, rng.randrange(10**6))
            for _ in range(1000)
        ]
        trajs = build_trajectories(recs)
        assert sum(len(t) for t in trajs) == len(recs)


def _traj(uid, n):
    return build_trajectories(
        [TweetRecord(uid, 0.0, 0.0, i) for i in range(n)]
    )[0]


class TestMedianFilter:
    def test_documented_example(self):
        trajs = [_traj(f"u{i}", n) for i, n in enumerate([1, 2, 4, 4, 9])]
        retained, report = median_filter(trajs)
        assert report.median == 4
        assert sorted(len(t) for t in retained) == [4, 4, 9]
        assert report.retained_count == 3
        assert report.retained_mean == pytest.approx((4 + 4 + 9) / 3)
        assert report.retained_max == 9

    def test_all_singletons_retained(self):
        trajs = [_traj(f"u{i}", 1) for i in range(5)]
        retained, report = median_filter(trajs)
        assert report.median == 1
        assert len(retained) == 5
        assert report.retained_fraction == 1.0

    def test_lower_median_for_even_n(self):
        trajs = [_traj(f"u{i}", n) for i, n in enumerate([1, 2, 3, 4])]
        retained, report = median_filter(trajs)
        assert report.median == 2
        assert len(retained) == 3

    def test_retains_at_least_half(self):
        rng = random.Random(23)
        for _ in range(50):
            trajs = [
                _traj(f"u{i}", rng.randrange(1, 40))
                for i in range(rng.randrange(1, 30))
            ]
            _, report = median_filter(trajs)
            assert report.retained_fraction >= 0.5

    def test_empty_errors(self):
        with pytest.raises(InputError):
            median_filter([])
