"""Landuse polygon map: taxonomy reduction and semantic point enrichment.

The polygon inventory is a GeoJSON FeatureCollection whose features carry a
``raw_class`` property. A taxonomy CSV (``raw_class,analysis_class,is_road``)
reduces raw codes to the analysis classes; the mapping must cover every code
present in the map. Points are located with a boundary-inclusive even-odd
test behind a bulk-loaded rectangle index; points that land on road/transport
polygons (or on no polygon at all) are reassigned to the nearest non-road
polygon so streets never count as visited locations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable, Sequence

from . import geometry
from .errors import MapError
from .ingest import Trajectory, TzRules, to_local_time
from .spindex import STRTree

# Stylized default mapping in the spirit of a detailed municipal inventory,
# reduced to the analysis classes. Not an official class list.
DEFAULT_TAXONOMY_ROWS: list[tuple[str, str, bool]] = [
    ("1111", "Residential", False),
    ("1112", "Residential", False),
    ("1130", "Urban mix Residential", False),
    ("1140", "Urban mix Commercial", False),
    ("1211", "Office", False),
    ("1216", "Hotel", False),
    ("1310", "Cultural/Entertainment", False),
    ("1410", "K-12 Educational", False),
    ("1420", "Post-Secondary Educational", False),
    ("1511", "Other", False),
    ("1512", "Other", False),
    ("2000", "Other", False),
    ("3000", "Other", False),
    ("4110", "Road/Transport", True),
    ("4120", "Road/Transport", True),
    ("4200", "Road/Transport", True),
]


@dataclass(frozen=True)
class LanduseTaxonomy:
    """Total mapping raw code -> analysis class, with a road/transport flag."""

    mapping: dict[str, str]
    road_classes: frozenset[str]

    def analysis_class(self, raw_class: str) -> str:
        return self.mapping[raw_class]

    def is_road(self, analysis_class: str) -> bool:
        return analysis_class in self.road_classes

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, bool]]) -> "LanduseTaxonomy":
        mapping: dict[str, str] = {}
        roads = set()
        for raw, analysis, is_road in rows:
            if raw in mapping and mapping[raw] != analysis:
                raise MapError(f"taxonomy maps raw class {raw!r} twice")
            mapping[raw] = analysis
            if is_road:
                roads.add(analysis)
        if not mapping:
            raise MapError("taxonomy is empty")
        return cls(mapping=mapping, road_classes=frozenset(roads))


def default_taxonomy() -> LanduseTaxonomy:
    return LanduseTaxonomy.from_rows(DEFAULT_TAXONOMY_ROWS)


def load_taxonomy_csv(lines: Iterable[str]) -> LanduseTaxonomy:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise MapError("taxonomy CSV is empty") from None
    if [h.strip().lstrip("﻿") for h in header] != ["raw_class", "analysis_class", "is_road"]:
        raise MapError("taxonomy CSV header must be raw_class,analysis_class,is_road")
    rows = []
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise MapError(f"taxonomy CSV line {reader.line_num}: expected 3 fields")
        flag = row[2].strip().lower()
        if flag not in ("true", "false", "1", "0"):
            raise MapError(f"taxonomy CSV line {reader.line_num}: bad is_road {row[2]!r}")
        rows.append((row[0].strip(), row[1].strip(), flag in ("true", "1")))
    return LanduseTaxonomy.from_rows(rows)


def write_taxonomy_csv(taxonomy: LanduseTaxonomy, fp) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["raw_class", "analysis_class", "is_road"])
    for raw in sorted(taxonomy.mapping):
        analysis = taxonomy.mapping[raw]
        writer.writerow([raw, analysis, str(taxonomy.is_road(analysis)).lower()])


@dataclass(frozen=True)
class LandusePolygon:
    """One feature: id, closed rings (outer + holes), raw class code."""

    poly_id: int
    rings: tuple[tuple[tuple[float, float], ...], ...]
    raw_class: str

    def contains(self, lon: float, lat: float) -> bool:
        return geometry.point_in_polygon(lon, lat, self.rings)

    def distance(self, lon: float, lat: float, lon_scale: float = 1.0) -> float:
        return geometry.polygon_distance(lon, lat, self.rings, lon_scale)


@dataclass(frozen=True)
class SemanticPoint:
    """Enriched event: position, local civil time, non-road landuse class."""

    user_id: str
    lon: float
    lat: float
    local_time: datetime
    landuse: str


def _validate_rings(feature_id, geom) -> tuple[tuple[tuple[float, float], ...], ...]:
    gtype = geom.get("type")
    if gtype == "Polygon":
        ring_sets = [geom["coordinates"]]
    elif gtype == "MultiPolygon":
        ring_sets = geom["coordinates"]
    else:
        raise MapError(f"feature {feature_id}: unsupported geometry type {gtype!r}")
    rings = []
    for rset in ring_sets:
        for ring in rset:
            if len(ring) < 4:
                raise MapError(f"feature {feature_id}: degenerate polygon ring")
            if tuple(ring[0]) != tuple(ring[-1]):
                raise MapError(f"feature {feature_id}: ring not closed")
            rings.append(tuple((float(x), float(y)) for x, y in ring))
    if not rings:
        raise MapError(f"feature {feature_id}: no rings")
    return tuple(rings)


class LanduseMap:
    """Polygon inventory plus taxonomy behind a rectangle index.

    The taxonomy is applied lazily at query time; the index is built once
    and never mutated, so concurrent lookups are safe.
    """

    def __init__(
        self,
        polygons: Sequence[LandusePolygon],
        taxonomy: LanduseTaxonomy,
        distance: str = "planar",
    ):
        if not polygons:
            raise MapError("landuse map has no polygons")
        if distance not in ("planar", "haversine"):
            raise MapError(f"unknown distance mode {distance!r}")
        ids = [p.poly_id for p in polygons]
        if len(set(ids)) != len(ids):
            raise MapError("duplicate polygon ids in landuse map")
        missing = sorted({p.raw_class for p in polygons} - set(taxonomy.mapping))
        if missing:
            raise MapError(f"taxonomy missing raw classes: {', '.join(missing)}")
        self.distance_mode = distance
        self.taxonomy = taxonomy
        self._by_id = {p.poly_id: p for p in polygons}
        self.polygons = sorted(polygons, key=lambda p: p.poly_id)
        self._road_ids = frozenset(
            p.poly_id
            for p in polygons
            if taxonomy.is_road(taxonomy.analysis_class(p.raw_class))
        )
        entries = []
        for p in self.polygons:
            xmin, ymin, xmax, ymax = geometry.rings_bbox(p.rings)
            entries.append((xmin, ymin, xmax, ymax, p.poly_id))
        self.index = STRTree(entries)

    def polygon(self, poly_id: int) -> LandusePolygon:
        return self._by_id[poly_id]

    def class_of(self, poly_id: int) -> str:
        return self.taxonomy.analysis_class(self._by_id[poly_id].raw_class)

    def locate(self, lon: float, lat: float) -> str | None:
        """Analysis class of the containing polygon, or None.

        When several polygons contain the point (shared boundaries,
        overlaps), the smallest polygon id wins.
        """
        for pid in self.index.query_point(lon, lat):
            if self._by_id[pid].contains(lon, lat):
                return self.class_of(pid)
        return None

    def nearest_polygon(
        self, lon: float, lat: float, exclude: Callable[[str], bool] | None = None
    ) -> tuple[int, float]:
        """Closest polygon by boundary distance (0 if contained).

        ``exclude`` filters on the analysis class; distance ties resolve to
        the smallest polygon id. In haversine mode distances use a local
        equirectangular projection around the query point (longitude scaled
        by cos latitude), adequate at sub-degree ranges.
        """
        skip = None
        if exclude is not None:
            skip = lambda pid: exclude(self.class_of(pid))
        lon_scale = 1.0
        if self.distance_mode == "haversine":
            lon_scale = geometry.equirect_scale(lat)
        hit = self.index.nearest(
            lon,
            lat,
            lambda pid: self._by_id[pid].distance(lon, lat, lon_scale),
            skip,
            lon_scale=lon_scale,
        )
        if hit is None:
            raise MapError("no polygon available after exclusions")
        return hit

    def _nearest_non_road(self, lon: float, lat: float) -> tuple[int, float]:
        """nearest_polygon with roads excluded via the precomputed id set."""
        if len(self._road_ids) == len(self.polygons):
            raise MapError("no polygon available after exclusions")
        lon_scale = 1.0
        if self.distance_mode == "haversine":
            lon_scale = geometry.equirect_scale(lat)
        hit = self.index.nearest(
            lon,
            lat,
            lambda pid: self._by_id[pid].distance(lon, lat, lon_scale),
            self._road_ids.__contains__,
            lon_scale=lon_scale,
        )
        if hit is None:
            raise MapError("no polygon available after exclusions")
        return hit

    def enrich(self, trajectory: Trajectory, tz: TzRules) -> list[SemanticPoint]:
        """Attach local time and a non-road landuse class to every point.

        Road/transport hits and points contained by no polygon fall back to
        the nearest non-road polygon. Order and length are preserved.
        """
        is_road = self.taxonomy.is_road
        out = []
        for rec in trajectory.points:
            cls = self.locate(rec.lon, rec.lat)
            if cls is None or is_road(cls):
                pid, _ = self._nearest_non_road(rec.lon, rec.lat)
                cls = self.class_of(pid)
            out.append(
                SemanticPoint(
                    user_id=rec.user_id,
                    lon=rec.lon,
                    lat=rec.lat,
                    local_time=to_local_time(rec.t_utc, tz),
                    landuse=cls,
                )
            )
        return out


def load_map(
    geojson_text: str, taxonomy: LanduseTaxonomy, distance: str = "planar"
) -> LanduseMap:
    """Parse a GeoJSON FeatureCollection into a validated LanduseMap.

    Feature ids must be unique integers when present; features without an id
    get their zero-based position in the collection.
    """
    try:
        doc = json.loads(geojson_text)
    except json.JSONDecodeError as e:
        raise MapError(f"polygon file is not valid JSON: {e}") from e
    if doc.get("type") != "FeatureCollection":
        raise MapError("polygon file must be a GeoJSON FeatureCollection")
    polygons = []
    for i, feature in enumerate(doc.get("features", [])):
        fid = feature.get("id", i)
        try:
            fid = int(fid)
        except (TypeError, ValueError):
            raise MapError(f"feature id {fid!r} is not an integer") from None
        props = feature.get("properties") or {}
        raw = props.get("raw_class")
        if raw is None:
            raise MapError(f"feature {fid}: missing raw_class property")
        rings = _validate_rings(fid, feature.get("geometry") or {})
        polygons.append(LandusePolygon(poly_id=fid, rings=rings, raw_class=str(raw)))
    return LanduseMap(polygons, taxonomy, distance=distance)
