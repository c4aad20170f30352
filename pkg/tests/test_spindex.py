import math
import random

import pytest

from geovisits.spindex import STRTree


def random_entries(rng, n, span=10.0):
    entries = []
    for i in range(n):
        x = rng.uniform(0, span)
        y = rng.uniform(0, span)
        w = rng.uniform(0.05, 1.5)
        h = rng.uniform(0.05, 1.5)
        entries.append((x, y, x + w, y + h, i))
    return entries


def rect_distance(x, y, e):
    dx = e[0] - x if x < e[0] else (x - e[2] if x > e[2] else 0.0)
    dy = e[1] - y if y < e[1] else (y - e[3] if y > e[3] else 0.0)
    return math.hypot(dx, dy)


class TestQueryPoint:
    def test_matches_exhaustive_scan(self):
        rng = random.Random(2)
        entries = random_entries(rng, 300)
        tree = STRTree(entries)
        for _ in range(1000):
            x = rng.uniform(-1, 11)
            y = rng.uniform(-1, 11)
            expected = sorted(
                e[4] for e in entries if e[0] <= x <= e[2] and e[1] <= y <= e[3]
            )
            assert tree.query_point(x, y) == expected

    def test_boundary_inclusive(self):
        tree = STRTree([(0.0, 0.0, 1.0, 1.0, 7)])
        assert tree.query_point(1.0, 1.0) == [7]
        assert tree.query_point(0.0, 0.5) == [7]

    def test_empty_build_rejected(self):
        with pytest.raises(ValueError):
            STRTree([])

    def test_single_entry(self):
        tree = STRTree([(0.0, 0.0, 1.0, 1.0, 0)])
        assert tree.query_point(0.5, 0.5) == [0]
        assert tree.query_point(2.0, 2.0) == []


class TestNearest:
    def test_matches_exhaustive_min(self):
        rng = random.Random(4)
        entries = random_entries(rng, 200)
        tree = STRTree(entries)
        by_id = {e[4]: e for e in entries}
        for _ in range(500):
            x = rng.uniform(-2, 12)
            y = rng.uniform(-2, 12)
            got = tree.nearest(x, y, lambda eid: rect_distance(x, y, by_id[eid]))
            want = min((rect_distance(x, y, e), e[4]) for e in entries)
            assert got == (want[1], want[0])

    def test_distance_ties_take_smallest_id(self):
        # two identical rectangles, ids 9 and 3
        entries = [(0.0, 0.0, 1.0, 1.0, 9), (0.0, 0.0, 1.0, 1.0, 3)]
        tree = STRTree(entries)
        by_id = {e[4]: e for e in entries}
        got = tree.nearest(5.0, 0.5, lambda eid: rect_distance(5.0, 0.5, by_id[eid]))
        assert got == (3, 4.0)

    def test_skip_all_returns_none(self):
        tree = STRTree([(0.0, 0.0, 1.0, 1.0, 0)])
        assert tree.nearest(0.5, 0.5, lambda eid: 0.0, lambda eid: True) is None

    def test_skip_filters(self):
        entries = [(0.0, 0.0, 1.0, 1.0, 0), (3.0, 0.0, 4.0, 1.0, 1)]
        tree = STRTree(entries)
        by_id = {e[4]: e for e in entries}
        got = tree.nearest(
            0.5, 0.5, lambda eid: rect_distance(0.5, 0.5, by_id[eid]), {0}.__contains__
        )
        assert got == (1, 2.5)

    def test_lon_scale_changes_winner(self):
        # entry 0 is 2 units west, entry 1 is 1.5 units north; shrinking
        # the x axis by half makes the western entry the nearer one
        entries = [(-2.2, -0.1, -2.0, 0.1, 0), (-0.1, 1.5, 0.1, 1.7, 1)]
        tree = STRTree(entries)
        by_id = {e[4]: e for e in entries}

        def dist(scale):
            def fn(eid):
                e = by_id[eid]
                dx = e[0] - 0 if 0 < e[0] else (0 - e[2] if 0 > e[2] else 0.0)
                dy = e[1] - 0 if 0 < e[1] else (0 - e[3] if 0 > e[3] else 0.0)
                return math.hypot(dx * scale, dy)
            return fn

        assert tree.nearest(0.0, 0.0, dist(1.0))[0] == 1
        assert tree.nearest(0.0, 0.0, dist(0.5), lon_scale=0.5)[0] == 0
