import json
import random
from datetime import datetime, timezone

import numpy as np
import pytest

from geovisits.errors import MapError
from geovisits.ingest import Trajectory, TweetRecord, TzRules
from geovisits.landuse import (
    LandusePolygon,
    LanduseMap,
    LanduseTaxonomy,
    default_taxonomy,
    load_map,
    load_taxonomy_csv,
    write_taxonomy_csv,
)

TZ = TzRules(year_min=2014, year_max=2014)


def square(fid, x0, y0, size, raw):
    ring = [
        [x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size], [x0, y0],
    ]
    return {
        "type": "Feature",
        "id": fid,
        "properties": {"raw_class": raw},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def collection(features):
    return json.dumps({"type": "FeatureCollection", "features": features})


TAXONOMY = LanduseTaxonomy.from_rows(
    [
        ("1111", "Residential", False),
        ("1500", "Office", False),
        ("1216", "Hotel", False),
        ("4110", "Road/Transport", True),
    ]
)


class TestLoadMap:
    def test_two_squares(self):
        text = collection([square(0, 0, 0, 1, "1111"), square(1, 2, 0, 1, "1500")])
        lmap = load_map(text, TAXONOMY)
        assert len(lmap.polygons) == 2
        assert lmap.locate(0.5, 0.5) == "Residential"

    def test_degenerate_polygon(self):
        bad = {
            "type": "Feature",
            "id": 5,
            "properties": {"raw_class": "1111"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[0, 0], [1, 0], [0, 0]]],
            },
        }
        with pytest.raises(MapError, match="degenerate"):
            load_map(collection([bad]), TAXONOMY)

    def test_unclosed_ring(self):
        bad = {
            "type": "Feature",
            "id": 5,
            "properties": {"raw_class": "1111"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1]]],
            },
        }
        with pytest.raises(MapError, match="not closed"):
            load_map(collection([bad]), TAXONOMY)

    def test_unmapped_code_named(self):
        text = collection([square(0, 0, 0, 1, "9999")])
        with pytest.raises(MapError, match="9999"):
            load_map(text, TAXONOMY)

    def test_duplicate_ids(self):
        text = collection([square(3, 0, 0, 1, "1111"), square(3, 2, 0, 1, "1500")])
        with pytest.raises(MapError, match="duplicate"):
            load_map(text, TAXONOMY)

    def test_multipolygon_flattened(self):
        feature = {
            "type": "Feature",
            "id": 0,
            "properties": {"raw_class": "1111"},
            "geometry": {
                "type": "MultiPolygon",
                "coordinates": [
                    [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
                    [[[5, 5], [6, 5], [6, 6], [5, 6], [5, 5]]],
                ],
            },
        }
        lmap = load_map(collection([feature]), TAXONOMY)
        assert lmap.locate(0.5, 0.5) == "Residential"
        assert lmap.locate(5.5, 5.5) == "Residential"
        assert lmap.locate(3.0, 3.0) is None


class TestTaxonomy:
    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "tax.csv"
        with open(path, "w") as fp:
            write_taxonomy_csv(default_taxonomy(), fp)
        with open(path) as fp:
            loaded = load_taxonomy_csv(fp)
        assert loaded == default_taxonomy()

    def test_bad_header(self):
        with pytest.raises(MapError):
            load_taxonomy_csv(["a,b,c", "1,2,3"])

    def test_conflicting_mapping(self):
        with pytest.raises(MapError):
            LanduseTaxonomy.from_rows([("1", "A", False), ("1", "B", False)])

    def test_default_contains_named_classes(self):
        tax = default_taxonomy()
        classes = set(tax.mapping.values())
        for cls in (
            "Residential", "Hotel", "Urban mix Commercial", "Urban mix Residential",
            "Office", "Cultural/Entertainment", "K-12 Educational",
            "Post-Secondary Educational", "Road/Transport", "Other",
        ):
            assert cls in classes
        assert tax.is_road("Road/Transport")
        assert not tax.is_road("Hotel")


class TestLocate:
    def test_outside_all_is_none(self):
        lmap = load_map(collection([square(0, 0, 0, 1, "1111")]), TAXONOMY)
        assert lmap.locate(5.0, 5.0) is None

    def test_shared_edge_smallest_id_wins(self):
        text = collection([square(7, 0, 0, 1, "1500"), square(3, 1, 0, 1, "1111")])
        lmap = load_map(text, TAXONOMY)
        # x == 1 lies on the shared edge of ids 3 and 7
        assert lmap.locate(1.0, 0.5) == "Residential"

    def test_index_matches_bruteforce_scan(self):
        rng = random.Random(31)
        features = [
            square(i, rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0.3, 2.0), "1111")
            for i in range(60)
        ]
        lmap = load_map(collection(features), TAXONOMY)
        for _ in range(2000):
            x = rng.uniform(-1, 10)
            y = rng.uniform(-1, 10)
            containing = [p.poly_id for p in lmap.polygons if p.contains(x, y)]
            expected = lmap.class_of(min(containing)) if containing else None
            assert lmap.locate(x, y) == expected


def nearest_oracle(x, y, polygons, exclude_classes, class_of):
    """Exhaustive scan with an independent vectorized segment-distance."""
    best = None
    for p in sorted(polygons, key=lambda p: p.poly_id):
        if class_of(p.poly_id) in exclude_classes:
            continue
        if p.contains(x, y):
            d = 0.0
        else:
            dmin = np.inf
            for ring in p.rings:
                v = np.asarray(ring)
                ax, ay = v[:-1, 0], v[:-1, 1]
                bx, by = v[1:, 0], v[1:, 1]
                ex, ey = bx - ax, by - ay
                len2 = ex * ex + ey * ey
                t = np.clip(
                    np.divide((x - ax) * ex + (y - ay) * ey, len2, where=len2 > 0,
                              out=np.zeros_like(len2)),
                    0.0, 1.0,
                )
                dmin = min(dmin, float(np.min(np.hypot(x - (ax + t * ex), y - (ay + t * ey)))))
            d = dmin
        if best is None or d < best[1]:
            best = (p.poly_id, d)
    return best


class TestNearestPolygon:
    def test_contained_distance_zero(self):
        lmap = load_map(collection([square(0, 0, 0, 1, "1111")]), TAXONOMY)
        pid, d = lmap.nearest_polygon(0.5, 0.5)
        assert (pid, d) == (0, 0.0)

    def test_equidistant_takes_smaller_id(self):
        text = collection([square(8, 0, 0, 1, "1111"), square(2, 3, 0, 1, "1500")])
        lmap = load_map(text, TAXONOMY)
        # x == 2 is exactly 1 away from both squares
        pid, d = lmap.nearest_polygon(2.0, 0.5)
        assert pid == 2
        assert d == pytest.approx(1.0)

    def test_random_points_match_exhaustive_oracle(self):
        rng = random.Random(77)
        features = [
            square(i, rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0.3, 1.5), "1111")
            for i in range(20)
        ]
        lmap = load_map(collection(features), TAXONOMY)
        for _ in range(500):
            x = rng.uniform(-2, 12)
            y = rng.uniform(-2, 12)
            got = lmap.nearest_polygon(x, y)
            want = nearest_oracle(x, y, lmap.polygons, set(), lmap.class_of)
            assert got[0] == want[0]
            assert got[1] == pytest.approx(want[1], abs=1e-12)

    def test_all_excluded_errors(self):
        lmap = load_map(collection([square(0, 0, 0, 1, "4110")]), TAXONOMY)
        with pytest.raises(MapError):
            lmap.nearest_polygon(0.5, 0.5, exclude=lambda cls: True)

    def test_zero_distance_iff_contained(self):
        rng = random.Random(13)
        features = [
            square(i, rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0.4, 1.2), "1111")
            for i in range(15)
        ]
        lmap = load_map(collection(features), TAXONOMY)
        for _ in range(400):
            x = rng.uniform(-1, 7)
            y = rng.uniform(-1, 7)
            pid, d = lmap.nearest_polygon(x, y)
            contained_any = any(p.contains(x, y) for p in lmap.polygons)
            assert (d == 0.0) == contained_any


def _rec(uid, lon, lat, hour=12):
    t = int(datetime(2014, 6, 1, hour, tzinfo=timezone.utc).timestamp())
    return TweetRecord(uid, lon, lat, t)


class TestEnrich:
    @pytest.fixture
    def road_map(self):
        # office | road | residential, plus a far hotel
        features = [
            square(0, 0.0, 0.0, 1.0, "1500"),
            square(1, 1.0, 0.0, 0.2, "4110"),
            square(2, 1.2, 0.0, 1.0, "1111"),
            square(3, 5.0, 5.0, 1.0, "1216"),
        ]
        # make the road strip full height
        features[1]["geometry"]["coordinates"] = [
            [[1.0, 0.0], [1.2, 0.0], [1.2, 1.0], [1.0, 1.0], [1.0, 0.0]]
        ]
        return load_map(collection(features), TAXONOMY)

    def test_plain_containment(self, road_map):
        traj = Trajectory("u", [_rec("u", 0.5, 0.5)])
        points = road_map.enrich(traj, TZ)
        assert points[0].landuse == "Office"
        assert points[0].local_time.hour == 7  # 12 UTC in summer

    def test_road_reassigned_to_adjacent(self, road_map):
        # just inside the road, nearer the office side
        traj = Trajectory("u", [_rec("u", 1.05, 0.5)])
        assert road_map.enrich(traj, TZ)[0].landuse == "Office"
        traj = Trajectory("u", [_rec("u", 1.15, 0.5)])
        assert road_map.enrich(traj, TZ)[0].landuse == "Residential"

    def test_uncovered_point_falls_to_nearest(self, road_map):
        traj = Trajectory("u", [_rec("u", 5.5, 4.5)])
        assert road_map.enrich(traj, TZ)[0].landuse == "Hotel"

    def test_output_never_road_and_order_preserved(self, road_map):
        rng = random.Random(3)
        recs = [
            _rec("u", rng.uniform(-0.5, 6.5), rng.uniform(-0.5, 6.5), rng.randrange(24))
            for _ in range(300)
        ]
        traj = Trajectory("u", recs)
        points = road_map.enrich(traj, TZ)
        assert len(points) == len(recs)
        for rec, sp in zip(recs, points):
            assert (sp.lon, sp.lat) == (rec.lon, rec.lat)
            assert sp.landuse != "Road/Transport"

    def test_haversine_mode_still_total(self, road_map):
        features = [
            square(0, 0.0, 0.0, 1.0, "1500"),
            square(1, 2.0, 0.0, 1.0, "1111"),
        ]
        lmap = load_map(collection(features), TAXONOMY, distance="haversine")
        pid, d = lmap.nearest_polygon(1.5, 0.5)
        assert pid in (0, 1)
        assert d > 0.0
