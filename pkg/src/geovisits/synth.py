"""Synthetic labeled corpora driven by a preferential-return visit process.

Each simulated user owns a few favorite locations in distinct cells of a
synthetic landuse grid and revisits them with Zipf-decaying probability;
tweet positions scatter isotropically around the location (GPS-style noise,
occasionally glitched wider) and tweet hours follow a per-landuse 24-bin
template. Templates are stylized shapes (school mornings, office lunches,
residential evenings), not measurements. A fixed seed reproduces the corpus
and its ground truth bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence

import numpy as np

from .errors import InputError
from .ingest import TzRules, _nth_sunday_of_month, rfc3339_from_epoch
from .landuse import (
    DEFAULT_TAXONOMY_ROWS,
    LanduseTaxonomy,
    default_taxonomy,
)

_EPOCH = datetime(1970, 1, 1)

# 24-bin hourly weight templates per analysis class (normalized at use).
# Shapes are deliberately contrasted so a 50-tweet histogram identifies its
# class: schools peak at 8 and collapse after 15, offices ramp at 8 with a
# lunch spike and die at 18, homes peak late evening with a thin midday,
# hotels pair late arrivals with a checkout bump, nightlife owns 19-23.
HOUR_TEMPLATES: dict[str, tuple[float, ...]] = {
    "Residential": (
        1.0, 0.6, 0.4, 0.4, 0.4, 0.6, 1.4, 2.6, 3.0, 2.2, 1.7, 1.6,
        1.8, 1.6, 1.5, 1.7, 2.2, 3.2, 4.4, 5.8, 6.8, 7.4, 6.4, 3.2,
    ),
    "Urban mix Residential": (
        0.8, 0.5, 0.4, 0.4, 0.4, 0.7, 1.8, 3.4, 4.0, 3.4, 2.8, 2.6,
        2.8, 2.6, 2.5, 2.7, 3.2, 4.0, 4.6, 4.4, 3.8, 3.0, 2.0, 1.2,
    ),
    "Office": (
        0.2, 0.15, 0.1, 0.1, 0.15, 0.3, 1.0, 3.0, 5.5, 6.0, 5.2, 4.6,
        6.8, 5.4, 4.8, 4.6, 4.2, 3.6, 1.8, 0.9, 0.5, 0.35, 0.25, 0.2,
    ),
    "Urban mix Commercial": (
        0.3, 0.2, 0.15, 0.15, 0.15, 0.2, 0.4, 0.8, 1.6, 2.8, 4.2, 4.8,
        5.0, 5.0, 5.0, 5.0, 5.2, 5.4, 4.8, 3.6, 2.4, 1.4, 0.7, 0.4,
    ),
    "Hotel": (
        3.5, 2.0, 0.8, 0.5, 0.4, 0.5, 1.2, 3.0, 3.5, 2.5, 1.2, 0.8,
        0.8, 0.8, 0.8, 1.0, 1.4, 2.0, 3.0, 4.2, 5.5, 6.5, 7.0, 6.0,
    ),
    "K-12 Educational": (
        0.2, 0.1, 0.1, 0.1, 0.1, 0.3, 1.0, 6.0, 9.0, 6.5, 3.0, 2.5,
        3.5, 2.5, 2.0, 1.5, 0.5, 0.4, 0.3, 0.3, 0.2, 0.2, 0.2, 0.2,
    ),
    "Post-Secondary Educational": (
        1.2, 0.7, 0.4, 0.3, 0.3, 0.4, 0.7, 1.6, 3.4, 4.6, 5.0, 4.4,
        3.8, 4.2, 4.4, 4.0, 3.2, 2.6, 2.2, 2.6, 3.4, 4.2, 3.6, 2.2,
    ),
    "Cultural/Entertainment": (
        2.0, 1.0, 0.5, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8,
        1.0, 1.0, 1.0, 1.2, 2.0, 3.5, 5.5, 6.8, 7.5, 7.2, 5.8, 4.0,
    ),
    "Other": (
        1.8, 1.6, 1.5, 1.4, 1.4, 1.5, 1.7, 2.0, 2.2, 2.3, 2.4, 2.4,
        2.4, 2.4, 2.4, 2.4, 2.4, 2.4, 2.3, 2.2, 2.1, 2.0, 1.9, 1.8,
    ),
}

# Cell class sampling weights for the synthetic grid.
DEFAULT_PALETTE: dict[str, float] = {
    "Residential": 0.40,
    "Urban mix Residential": 0.08,
    "Urban mix Commercial": 0.08,
    "Office": 0.12,
    "Hotel": 0.06,
    "Cultural/Entertainment": 0.06,
    "K-12 Educational": 0.08,
    "Post-Secondary Educational": 0.06,
    "Other": 0.06,
}

_ROAD_CLASS = "Road/Transport"

# first raw code per analysis class from the shipped default taxonomy
_RAW_CODE: dict[str, str] = {}
for _raw, _cls, _ in DEFAULT_TAXONOMY_ROWS:
    _RAW_CODE.setdefault(_cls, _raw)


def zipf_weights(n: int, s: float) -> np.ndarray:
    """Normalized Zipf visitation weights over ranks 1..n."""
    w = np.arange(1, n + 1, dtype=float) ** (-s)
    return w / w.sum()


@dataclass(frozen=True)
class GridSpec:
    n_cols: int = 40
    n_rows: int = 40
    cell_size_deg: float = 0.02
    road_width_deg: float = 0.002
    origin_lon: float = -88.45
    origin_lat: float = 41.35
    palette: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    def __post_init__(self):
        if self.n_cols < 2 or self.n_rows < 2:
            raise InputError("grid must be at least 2x2")
        if self.cell_size_deg <= 0 or self.road_width_deg < 0:
            raise InputError("grid cell/road sizes must be positive")
        bad = set(self.palette) - set(HOUR_TEMPLATES)
        if bad:
            raise InputError(f"palette classes without hour templates: {sorted(bad)}")

    @property
    def pitch(self) -> float:
        return self.cell_size_deg + self.road_width_deg

    def cell_origin(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_lon + col * self.pitch,
            self.origin_lat + row * self.pitch,
        )


@dataclass(frozen=True)
class TouristSpec:
    """Cohort with one hotel stay plus one-off scattered visits."""

    count: int = 0
    hotel_tweets: tuple[int, int] = (4, 5)
    extra_tweets: tuple[int, int] = (55, 70)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 10000
    seed: int = 20140101
    year: int = 2014
    sigma_deg: float = 0.0005
    glitch_prob: float = 0.02
    glitch_scale: float = 8.0
    zipf_s: float = 1.2
    max_locations: int = 8
    loc_zipf_s: float = 1.5
    home_bias: float = 0.6  # chance the first location sits in a residential cell
    edge_frac: float = 0.15  # locations placed against a road edge
    edge_sigma_scale: float = 2.0
    edge_dist: tuple[float, float] = (0.0001, 0.001)
    tweets_median: float = 50.0
    tweets_sigma: float = 0.6
    tweets_min: int = 20
    tweets_max: int = 500
    grid: GridSpec = field(default_factory=GridSpec)
    tourists: TouristSpec = field(default_factory=TouristSpec)

    def __post_init__(self):
        if self.n_users < 1:
            raise InputError("n_users must be >= 1")
        if self.sigma_deg <= 0:
            raise InputError("sigma_deg must be positive")
        if self.max_locations < 1:
            raise InputError("max_locations must be >= 1")
        if self.tweets_min < 1 or self.tweets_max < self.tweets_min:
            raise InputError("bad tweets_min/tweets_max")

    def tz_rules(self) -> TzRules:
        return TzRules(year_min=self.year, year_max=self.year)


def _rect_feature(fid: int, x0: float, y0: float, x1: float, y1: float, raw: str) -> dict:
    ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
    return {
        "type": "Feature",
        "id": fid,
        "properties": {"raw_class": raw},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def build_synth_map(grid: GridSpec, seed: int) -> tuple[dict, LanduseTaxonomy, list[str]]:
    """Tile classed cells separated by road strips over the grid's extent.

    Returns (GeoJSON FeatureCollection, taxonomy, per-cell class list).
    Cell ids are row-major starting at 0; road strips follow.
    """
    rng = np.random.default_rng([seed, 0])
    classes = sorted(grid.palette)
    weights = np.array([grid.palette[c] for c in classes], dtype=float)
    weights = weights / weights.sum()
    n_cells = grid.n_rows * grid.n_cols
    cell_classes = [classes[k] for k in rng.choice(len(classes), size=n_cells, p=weights)]

    features = []
    c = grid.cell_size_deg
    for row in range(grid.n_rows):
        for col in range(grid.n_cols):
            fid = row * grid.n_cols + col
            x0, y0 = grid.cell_origin(row, col)
            features.append(
                _rect_feature(fid, x0, y0, x0 + c, y0 + c, _RAW_CODE[cell_classes[fid]])
            )
    fid = n_cells
    road_raw = _RAW_CODE[_ROAD_CLASS]
    w = grid.road_width_deg
    # roads as per-block segments; vertical segments span the intersection
    # squares so the strips tile the gap area exactly once
    for col in range(grid.n_cols - 1):
        x0 = grid.origin_lon + col * grid.pitch + c
        for row in range(grid.n_rows):
            y0 = grid.origin_lat + row * grid.pitch
            top = y0 + (c if row == grid.n_rows - 1 else grid.pitch)
            features.append(_rect_feature(fid, x0, y0, x0 + w, top, road_raw))
            fid += 1
    for row in range(grid.n_rows - 1):
        y0 = grid.origin_lat + row * grid.pitch + c
        for col in range(grid.n_cols):
            x0 = grid.origin_lon + col * grid.pitch
            features.append(_rect_feature(fid, x0, y0, x0 + c, y0 + w, road_raw))
            fid += 1
    doc = {"type": "FeatureCollection", "features": features}
    return doc, default_taxonomy(), cell_classes


def _day_tables(year: int, tz: TzRules) -> tuple[np.ndarray, np.ndarray]:
    """(local-midnight epoch, utc offset) per usable day of the study year.

    The two DST transition dates are excluded so every retained day has one
    constant offset and drawn local times always convert unambiguously.
    """
    mar = _nth_sunday_of_month(year, 3, 2)
    nov = _nth_sunday_of_month(year, 11, 1)
    spring = datetime(year, 3, mar)
    fall = datetime(year, 11, nov)
    bases = []
    offsets = []
    day0 = datetime(year, 1, 1)
    n_days = (datetime(year + 1, 1, 1) - day0).days
    for d in range(n_days):
        day = day0.toordinal() + d
        dt = datetime.fromordinal(day)
        if dt == spring or dt == fall:
            continue
        bases.append((dt - _EPOCH).days * 86400)
        offsets.append(tz.dst_offset_s if spring < dt < fall else tz.std_offset_s)
    return np.asarray(bases, dtype=np.int64), np.asarray(offsets, dtype=np.int64)


def _hours_for(rng, template: Sequence[float], n: int) -> np.ndarray:
    p = np.asarray(template, dtype=float)
    return rng.choice(24, size=n, p=p / p.sum())


class _UserEmitter:
    """Accumulates NDJSON lines and ground truth for one corpus."""

    def __init__(self, config: SynthConfig, rng, out_fp):
        self.config = config
        self.rng = rng
        self.out = out_fp
        self.users: dict[str, dict] = {}
        self.day_bases, self.day_offsets = _day_tables(config.year, config.tz_rules())

    def emit_user(self, uid: str, locations: list[dict], loc_idx: np.ndarray) -> None:
        """Draw positions/times for pre-assigned per-tweet locations and write."""
        cfg = self.config
        rng = self.rng
        n = len(loc_idx)
        base_lon = np.array([loc["lon"] for loc in locations])
        base_lat = np.array([loc["lat"] for loc in locations])
        base_sig = np.array([loc.get("sigma", cfg.sigma_deg) for loc in locations])
        sigma = base_sig[loc_idx].copy()
        glitch = rng.random(n) < cfg.glitch_prob
        sigma[glitch] *= cfg.glitch_scale
        lons = base_lon[loc_idx] + rng.normal(0.0, 1.0, n) * sigma
        lats = base_lat[loc_idx] + rng.normal(0.0, 1.0, n) * sigma

        hours = np.empty(n, dtype=np.int64)
        for k in range(len(locations)):
            mask = loc_idx == k
            cnt = int(mask.sum())
            if cnt:
                hours[mask] = _hours_for(rng, HOUR_TEMPLATES[locations[k]["landuse"]], cnt)
        days = rng.integers(0, len(self.day_bases), size=n)
        secs = rng.integers(0, 3600, size=n)  # minute+second within the hour
        epochs = (
            self.day_bases[days] + hours * 3600 + secs - self.day_offsets[days]
        )

        write = self.out.write
        for i in range(n):
            lon = round(float(lons[i]), 6)
            lat = round(float(lats[i]), 6)
            ts = rfc3339_from_epoch(int(epochs[i]))
            write(f'{{"user":"{uid}","lon":{lon!r},"lat":{lat!r},"ts":"{ts}"}}\n')
        self.users[uid] = {
            "locations": locations,
            "tweet_locs": [int(k) for k in loc_idx],
        }


def _place_in_cell(grid: GridSpec, rng, cell: int) -> tuple[float, float]:
    """Uniform position inside the central band of a cell (25% margin)."""
    row, col = divmod(cell, grid.n_cols)
    x0, y0 = grid.cell_origin(row, col)
    m = 0.25 * grid.cell_size_deg
    span = grid.cell_size_deg - 2 * m
    u, v = rng.random(2)
    return (x0 + m + u * span, y0 + m + v * span)


def _place_location(
    grid: GridSpec, rng, cell: int, config: SynthConfig
) -> tuple[float, float, float]:
    """Location centroid and its scatter multiplier.

    Most locations sit in the safe central band of their cell; a fraction
    press against a road edge with wider scatter, so some of their tweets
    land on the road (reassigned home) or across it (labeled with the
    neighbor cell's class), which is what erodes cluster purity.
    """
    if rng.random() >= config.edge_frac:
        lon, lat = _place_in_cell(grid, rng, cell)
        return lon, lat, 1.0
    row, col = divmod(cell, grid.n_cols)
    x0, y0 = grid.cell_origin(row, col)
    c = grid.cell_size_deg
    m = 0.25 * c
    d = rng.uniform(config.edge_dist[0], config.edge_dist[1])
    along = m + rng.random() * (c - 2 * m)
    side = int(rng.integers(4))  # W, E, S, N
    if side == 0:
        lon, lat = x0 + d, y0 + along
    elif side == 1:
        lon, lat = x0 + c - d, y0 + along
    elif side == 2:
        lon, lat = x0 + along, y0 + d
    else:
        lon, lat = x0 + along, y0 + c - d
    return lon, lat, config.edge_sigma_scale


def generate(config: SynthConfig, out_fp) -> dict:
    """Write the NDJSON corpus to out_fp and return its ground truth.

    The ground truth carries, per user, the ordered true locations with
    strictly decreasing visit probabilities, and the per-tweet location
    index aligned with that user's emitted lines. The corpus digest field
    is left empty for the caller to fill after writing the file.
    """
    grid = config.grid
    _, _, cell_classes = build_synth_map(grid, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    emitter = _UserEmitter(config, rng, out_fp)
    n_cells = len(cell_classes)

    loc_count_p = zipf_weights(config.max_locations, config.loc_zipf_s)
    mu = math.log(config.tweets_median)
    home_pool = np.array(
        [
            i
            for i, c in enumerate(cell_classes)
            if c in ("Residential", "Urban mix Residential")
        ]
    )

    uid_width = max(6, len(str(config.n_users + config.tourists.count)))
    for u in range(config.n_users):
        uid = f"u{u:0{uid_width}d}"
        n_locs = int(rng.choice(config.max_locations, p=loc_count_p)) + 1
        # first ("home") location biased toward residential cells
        if home_pool.size and rng.random() < config.home_bias:
            first = int(rng.choice(home_pool))
        else:
            first = int(rng.integers(n_cells))
        cells = [first]
        if n_locs > 1:
            rest = rng.choice(n_cells - 1, size=n_locs - 1, replace=False)
            cells.extend(int(i) + (1 if int(i) >= first else 0) for i in rest)
        probs = zipf_weights(n_locs, config.zipf_s)
        locations = []
        for k, cell in enumerate(cells):
            lon, lat, s_scale = _place_location(grid, rng, int(cell), config)
            locations.append(
                {
                    "lon": round(lon, 6),
                    "lat": round(lat, 6),
                    "landuse": cell_classes[int(cell)],
                    "prob": float(probs[k]),
                    "sigma": config.sigma_deg * s_scale,
                }
            )
        t = int(np.clip(
            round(math.exp(rng.normal(mu, config.tweets_sigma))),
            config.tweets_min,
            config.tweets_max,
        ))
        loc_idx = rng.choice(n_locs, size=t, p=probs)
        emitter.emit_user(uid, locations, loc_idx)

    _generate_tourists(config, cell_classes, rng, emitter, uid_width)

    return {
        "version": 1,
        "corpus_digest": "",
        "seed": config.seed,
        "year": config.year,
        "n_users": config.n_users + config.tourists.count,
        "users": emitter.users,
    }


def _generate_tourists(
    config: SynthConfig, cell_classes: list[str], rng, emitter: _UserEmitter, uid_width: int
) -> None:
    """Single hotel location with few tweets plus scattered one-off visits.

    The one-offs land in distinct non-hotel cells (one tweet each), so they
    never form clusters on their own; with fractional minimum-population
    clustering the hotel stay itself drops below threshold.
    """
    spec = config.tourists
    if spec.count == 0:
        return
    grid = config.grid
    hotel_cells = [i for i, c in enumerate(cell_classes) if c == "Hotel"]
    if not hotel_cells:
        raise InputError("tourist cohort requires at least one Hotel cell")
    other_cells = np.array([i for i in range(len(cell_classes)) if cell_classes[i] not in ("Hotel",)])
    for u in range(spec.count):
        uid = f"t{u:0{uid_width}d}"
        hotel_cell = int(rng.choice(np.asarray(hotel_cells)))
        lon, lat = _place_in_cell(grid, rng, hotel_cell)
        n_hotel = int(rng.integers(spec.hotel_tweets[0], spec.hotel_tweets[1] + 1))
        n_extra = int(rng.integers(spec.extra_tweets[0], spec.extra_tweets[1] + 1))
        extra_cells = rng.choice(other_cells, size=n_extra, replace=False)
        total = n_hotel + n_extra
        locations = [
            {
                "lon": round(lon, 6),
                "lat": round(lat, 6),
                "landuse": "Hotel",
                "prob": n_hotel / total,
            }
        ]
        for j, cell in enumerate(extra_cells):
            elon, elat = _place_in_cell(grid, rng, int(cell))
            locations.append(
                {
                    "lon": round(elon, 6),
                    "lat": round(elat, 6),
                    "landuse": cell_classes[int(cell)],
                    # strictly-decreasing tiebreak on equal one-visit shares
                    "prob": (1.0 / total) * (1.0 - (j + 1) * 1e-9),
                }
            )
        loc_idx = np.concatenate(
            [np.zeros(n_hotel, dtype=np.int64), np.arange(1, n_extra + 1, dtype=np.int64)]
        )
        emitter.emit_user(uid, locations, loc_idx)
