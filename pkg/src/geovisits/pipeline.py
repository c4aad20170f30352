"""End-to-end pipeline: ingest -> enrich -> cluster -> reports.

Stages are pure given their inputs, so per-user work can fan out over a
process pool; results are merged in user-id order and every report is
written with fixed formatting, which makes reruns byte-identical at any
parallelism degree. Report files land in the output directory only after
the whole run has succeeded.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .cluster import ClusterParams, VisitCluster, cluster_user
from .errors import GeovisitsError, InputError
from .ingest import (
    BoundingBox,
    Trajectory,
    TweetRecord,
    TzRules,
    bbox_filter,
    build_trajectories,
    median_filter,
    parse_stream,
    year_filter,
)
from .landuse import LanduseMap, LanduseTaxonomy, default_taxonomy, load_map, load_taxonomy_csv
from . import metrics

CHICAGO_BBOX = BoundingBox(41.201577, -88.707599, 42.495775, -87.524535)

CLUSTERS_CSV = "clusters.csv"
RANK_COMPOSITION_CSV = "rank_composition.csv"
PURITY_CSV = "purity_quantiles.csv"
SIGNATURES_CSV = "signatures.csv"
SENSITIVITY_CSV = "sensitivity.csv"
SUMMARY_JSON = "summary.json"
MANIFEST_JSON = "manifest.json"


def fmt_float(x: float) -> str:
    return f"{x:.9g}"


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for block in iter(lambda: fp.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    params: ClusterParams

    def to_dict(self) -> dict:
        d = {"name": self.name, "eps_deg": self.params.eps, "distance": self.params.distance}
        if self.params.min_pts is not None:
            d["min_pts"] = self.params.min_pts
        else:
            d["min_pts_frac"] = self.params.min_pts_frac
        return d

    @classmethod
    def from_dict(cls, d: dict, default_name: str) -> "ExperimentSpec":
        known = {"name", "eps_deg", "min_pts", "min_pts_frac", "distance"}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown experiment keys: {sorted(unknown)}")
        if "min_pts" in d and "min_pts_frac" in d:
            raise InputError("experiment sets both min_pts and min_pts_frac")
        params = ClusterParams(
            eps=d.get("eps_deg", 0.0025),
            min_pts=d.get("min_pts"),
            min_pts_frac=d.get("min_pts_frac"),
            distance=d.get("distance", "planar"),
        )
        return cls(name=str(d.get("name", default_name)), params=params)


_DEFAULT_EXPERIMENT = ExperimentSpec("exp1", ClusterParams(eps=0.0025, min_pts=4))


@dataclass
class PipelineConfig:
    events: str
    polygons: str
    out_dir: str
    taxonomy: str | None = None
    fmt: str = "ndjson"
    bbox: BoundingBox = field(default_factory=lambda: CHICAGO_BBOX)
    year: int = 2014
    dedupe: bool = False
    jobs: int = 1
    max_rank: int = 10
    signature_ranks: tuple[int, ...] = (1, 2, 3, 4, 5)
    classify_min_tweets: int = 10
    landuse_distance: str = "planar"
    experiments: tuple[ExperimentSpec, ...] = (_DEFAULT_EXPERIMENT,)

    def __post_init__(self):
        if not 1 <= len(self.experiments) <= 2:
            raise InputError("configure one or two cluster parameter sets")
        if len({e.name for e in self.experiments}) != len(self.experiments):
            raise InputError("experiment names must be distinct")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")
        if self.fmt not in ("ndjson", "csv"):
            raise InputError(f"unknown input format {self.fmt!r}")

    def validate_paths(self) -> None:
        for label, path in (("events", self.events), ("polygons", self.polygons)):
            if not os.path.isfile(path):
                raise InputError(f"{label} file not found: {path}")
        if self.taxonomy is not None and not os.path.isfile(self.taxonomy):
            raise InputError(f"taxonomy file not found: {self.taxonomy}")

    def tz_rules(self) -> TzRules:
        return TzRules(year_min=self.year, year_max=self.year)

    def to_dict(self) -> dict:
        return {
            "events": self.events,
            "polygons": self.polygons,
            "taxonomy": self.taxonomy,
            "out_dir": self.out_dir,
            "format": self.fmt,
            "bbox": [self.bbox.min_lat, self.bbox.min_lon, self.bbox.max_lat, self.bbox.max_lon],
            "year": self.year,
            "dedupe": self.dedupe,
            "jobs": self.jobs,
            "max_rank": self.max_rank,
            "signature_ranks": list(self.signature_ranks),
            "classify_min_tweets": self.classify_min_tweets,
            "landuse_distance": self.landuse_distance,
            "experiments": [e.to_dict() for e in self.experiments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {
            "events", "polygons", "taxonomy", "out_dir", "format", "bbox", "year",
            "dedupe", "jobs", "max_rank", "signature_ranks", "classify_min_tweets",
            "landuse_distance", "experiments",
        }
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        for key in ("events", "polygons", "out_dir"):
            if key not in d:
                raise InputError(f"config missing required key {key!r}")
        bbox = CHICAGO_BBOX
        if "bbox" in d:
            v = d["bbox"]
            if not (isinstance(v, (list, tuple)) and len(v) == 4):
                raise InputError("bbox must be [min_lat, min_lon, max_lat, max_lon]")
            bbox = BoundingBox(*[float(x) for x in v])
        exps = d.get("experiments")
        if exps is None:
            experiments: tuple[ExperimentSpec, ...] = (_DEFAULT_EXPERIMENT,)
        else:
            experiments = tuple(
                ExperimentSpec.from_dict(e, f"exp{i + 1}") for i, e in enumerate(exps)
            )
        return cls(
            events=d["events"],
            polygons=d["polygons"],
            out_dir=d["out_dir"],
            taxonomy=d.get("taxonomy"),
            fmt=d.get("format", "ndjson"),
            bbox=bbox,
            year=int(d.get("year", 2014)),
            dedupe=bool(d.get("dedupe", False)),
            jobs=int(d.get("jobs", 1)),
            max_rank=int(d.get("max_rank", 10)),
            signature_ranks=tuple(d.get("signature_ranks", (1, 2, 3, 4, 5))),
            classify_min_tweets=int(d.get("classify_min_tweets", 10)),
            landuse_distance=d.get("landuse_distance", "planar"),
            experiments=experiments,
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_taxonomy_for(config: PipelineConfig) -> LanduseTaxonomy:
    if config.taxonomy is None:
        return default_taxonomy()
    with open(config.taxonomy, "r", encoding="utf-8") as fp:
        return load_taxonomy_csv(fp)


def load_map_for(config: PipelineConfig) -> LanduseMap:
    taxonomy = load_taxonomy_for(config)
    with open(config.polygons, "r", encoding="utf-8") as fp:
        return load_map(fp.read(), taxonomy, distance=config.landuse_distance)


# ---------------------------------------------------------------------------
# Per-user work (inline or in a process pool)
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(config_dict: dict) -> None:
    config = PipelineConfig.from_dict(config_dict)
    _WORKER_STATE["map"] = load_map_for(config)
    _WORKER_STATE["tz"] = config.tz_rules()
    _WORKER_STATE["experiments"] = config.experiments


def process_users(
    chunk: Sequence[tuple[str, list[tuple[float, float, int]]]],
    lmap: LanduseMap,
    tz: TzRules,
    experiments: Sequence[ExperimentSpec],
) -> list[tuple[str, dict[str, tuple[list[VisitCluster], int]]]]:
    """Enrich and cluster a batch of users under every experiment."""
    out = []
    for uid, pts in chunk:
        traj = Trajectory(uid, [TweetRecord(uid, lon, lat, t) for lon, lat, t in pts])
        spoints = lmap.enrich(traj, tz)
        per_exp = {}
        for exp in experiments:
            per_exp[exp.name] = cluster_user(spoints, exp.params)
        out.append((uid, per_exp))
    return out


def _pool_task(chunk):
    return process_users(
        chunk, _WORKER_STATE["map"], _WORKER_STATE["tz"], _WORKER_STATE["experiments"]
    )


# ---------------------------------------------------------------------------
# Run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    counts: dict
    clusters: dict[str, list[VisitCluster]]  # experiment name -> merged clusters
    summary: dict
    manifest: dict


class StageError(GeovisitsError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_pipeline(config: PipelineConfig) -> RunResult:
    config.validate_paths()
    tz = config.tz_rules()
    counts: dict = {}

    try:
        with open(config.events, "r", encoding="utf-8") as fp:
            parsed = parse_stream(fp, config.fmt)
    except OSError as e:
        raise InputError(f"cannot read events file: {e}") from e
    counts["parsed"] = len(parsed.records)
    counts["parse_errors"] = parsed.error_count
    if not parsed.records:
        raise InputError("no records parsed")

    records = bbox_filter(parsed.records, config.bbox)
    counts["bbox_retained"] = len(records)
    records = list(year_filter(records, tz))
    counts["year_retained"] = len(records)
    if config.dedupe:
        seen = set()
        deduped = []
        for r in records:
            key = (r.user_id, r.t_utc)
            if key not in seen:
                seen.add(key)
                deduped.append(r)
        counts["dedupe_removed"] = len(records) - len(deduped)
        records = deduped
    else:
        counts["dedupe_removed"] = 0
    if not records:
        raise InputError("no records left after filtering")

    trajectories = build_trajectories(records)
    counts["users_total"] = len(trajectories)
    retained, med_report = median_filter(trajectories)
    counts["count_median"] = med_report.median
    counts["users_retained"] = med_report.retained_count
    counts["retained_records"] = sum(len(t) for t in retained)

    try:
        lmap = load_map_for(config)
    except GeovisitsError:
        raise
    except OSError as e:
        raise InputError(f"cannot read map inputs: {e}") from e

    work = [
        (t.user_id, [(p.lon, p.lat, p.t_utc) for p in t.points]) for t in retained
    ]
    results: list[tuple[str, dict]] = []
    try:
        if config.jobs == 1:
            results = process_users(work, lmap, tz, config.experiments)
        else:
            chunk_size = max(1, math.ceil(len(work) / (config.jobs * 8)))
            chunks = [work[i : i + chunk_size] for i in range(0, len(work), chunk_size)]
            with ProcessPoolExecutor(
                max_workers=config.jobs,
                initializer=_init_worker,
                initargs=(config.to_dict(),),
            ) as pool:
                for part in pool.map(_pool_task, chunks):
                    results.extend(part)
    except GeovisitsError:
        raise
    except Exception as e:
        raise StageError("cluster", e) from e

    # deterministic merge regardless of completion order
    results.sort(key=lambda r: r[0])
    clusters_by_exp: dict[str, list[VisitCluster]] = {e.name: [] for e in config.experiments}
    noise_by_exp = {e.name: 0 for e in config.experiments}
    for _, per_exp in results:
        for name, (user_clusters, noise) in per_exp.items():
            clusters_by_exp[name].extend(user_clusters)
            noise_by_exp[name] += noise
    for exp in config.experiments:
        cl = clusters_by_exp[exp.name]
        counts[f"clusters_{exp.name}"] = len(cl)
        clustered = sum(c.size for c in cl)
        counts[f"clustered_{exp.name}"] = clustered
        counts[f"noise_{exp.name}"] = noise_by_exp[exp.name]

    primary = config.experiments[0]
    primary_clusters = clusters_by_exp[primary.name]
    composition = metrics.rank_composition(primary_clusters, config.max_rank)
    purity = metrics.purity_distribution(primary_clusters)
    signatures = metrics.hourly_signature(primary_clusters, config.signature_ranks)

    sensitivity = None
    if len(config.experiments) == 2:
        second = config.experiments[1]
        sensitivity = metrics.SensitivityReport(
            first=metrics.experiment_result(primary.name, primary_clusters),
            second=metrics.experiment_result(second.name, clusters_by_exp[second.name]),
        )

    summary = {
        "counts": counts,
        "median_filter": {
            "median": med_report.median,
            "total_users": med_report.total_users,
            "retained_count": med_report.retained_count,
            "retained_fraction": med_report.retained_fraction,
            "retained_mean": med_report.retained_mean,
            "retained_max": med_report.retained_max,
        },
        "rank_totals": {str(r): n for r, n in sorted(composition.rank_totals.items())},
        "purity_omitted_ranks": purity.omitted_ranks,
        "experiments": [e.to_dict() for e in config.experiments],
    }
    if sensitivity is not None:
        summary["sensitivity"] = {
            "first": {"name": sensitivity.first.name, "rank1_share_pct": sensitivity.first.rank1_share_pct},
            "second": {"name": sensitivity.second.name, "rank1_share_pct": sensitivity.second.rank1_share_pct},
        }

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "inputs": {
            "events_sha256": sha256_file(config.events),
            "polygons_sha256": sha256_file(config.polygons),
            "taxonomy_sha256": sha256_file(config.taxonomy) if config.taxonomy else None,
        },
        "counts": counts,
    }

    result = RunResult(
        counts=counts, clusters=clusters_by_exp, summary=summary, manifest=manifest
    )
    _write_reports(config, result, composition, purity, signatures, sensitivity)
    return result


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def _clusters_rows(clusters: Iterable[VisitCluster]) -> list[str]:
    rows = ["user,rank,size,centroid_lon,centroid_lat,dominant_landuse,purity"]
    for c in sorted(clusters, key=lambda c: (c.user_id, c.rank)):
        rows.append(
            f"{c.user_id},{c.rank},{c.size},{fmt_float(c.centroid_lon)},"
            f"{fmt_float(c.centroid_lat)},{c.dominant_landuse},{fmt_float(c.purity)}"
        )
    return rows


def _composition_rows(comp: metrics.RankComposition) -> list[str]:
    rows = ["rank,landuse,count,fraction,rank_total"]
    for (rank, landuse), n in sorted(comp.counts.items()):
        rows.append(
            f"{rank},{landuse},{n},{fmt_float(comp.fractions[(rank, landuse)])},"
            f"{comp.rank_totals[rank]}"
        )
    return rows


def _purity_rows(pur: metrics.PurityDistribution) -> list[str]:
    rows = ["rank,n,min,p25,p50,p75,max"]
    for rank in sorted(pur.stats):
        s = pur.stats[rank]
        rows.append(
            f"{rank},{int(s['n'])},{fmt_float(s['min'])},{fmt_float(s['p25'])},"
            f"{fmt_float(s['p50'])},{fmt_float(s['p75'])},{fmt_float(s['max'])}"
        )
    return rows


def _signature_rows(sig: metrics.SignatureMatrix) -> list[str]:
    hour_cols = ",".join(f"h{h:02d}" for h in range(24))
    rows = [f"landuse,rank,clusters,total_tweets,peak_hour,peak_share,chi2_uniform,{hour_cols}"]
    for (landuse, rank) in sorted(sig.rows):
        row = sig.rows[(landuse, rank)]
        vals = ",".join(fmt_float(v) for v in row.intensity)
        rows.append(
            f"{landuse},{rank},{row.n_clusters},{row.total_tweets},{row.peak_hour()},"
            f"{fmt_float(row.peak_share())},{fmt_float(row.chi2_uniform())},{vals}"
        )
    return rows


def _sensitivity_rows(rep: metrics.SensitivityReport) -> list[str]:
    a, b = rep.first, rep.second
    rows = [
        f"landuse,{a.name}_rank1_share_pct,{b.name}_rank1_share_pct,"
        f"{a.name}_rank1_count,{b.name}_rank1_count,"
        f"{a.name}_total_clusters,{b.name}_total_clusters"
    ]
    for landuse in rep.landuses():
        rows.append(
            f"{landuse},{fmt_float(a.rank1_share_pct.get(landuse, 0.0))},"
            f"{fmt_float(b.rank1_share_pct.get(landuse, 0.0))},"
            f"{a.rank1_counts.get(landuse, 0)},{b.rank1_counts.get(landuse, 0)},"
            f"{a.total_counts.get(landuse, 0)},{b.total_counts.get(landuse, 0)}"
        )
    return rows


def _write_reports(config, result, composition, purity, signatures, sensitivity) -> None:
    os.makedirs(config.out_dir, exist_ok=True)
    primary = config.experiments[0].name
    files = {
        CLUSTERS_CSV: "\n".join(_clusters_rows(result.clusters[primary])) + "\n",
        RANK_COMPOSITION_CSV: "\n".join(_composition_rows(composition)) + "\n",
        PURITY_CSV: "\n".join(_purity_rows(purity)) + "\n",
        SIGNATURES_CSV: "\n".join(_signature_rows(signatures)) + "\n",
        SUMMARY_JSON: json.dumps(result.summary, sort_keys=True, indent=2) + "\n",
        MANIFEST_JSON: json.dumps(result.manifest, sort_keys=True, indent=2) + "\n",
    }
    if sensitivity is not None:
        files[SENSITIVITY_CSV] = "\n".join(_sensitivity_rows(sensitivity)) + "\n"
    written = []
    try:
        for name, text in files.items():
            path = os.path.join(config.out_dir, name)
            with open(path, "w", encoding="utf-8", newline="") as fp:
                fp.write(text)
            written.append(path)
    except OSError:
        for path in written:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise


# ---------------------------------------------------------------------------
# Verification against synthetic ground truth
# ---------------------------------------------------------------------------


def _planar(ax, ay, bx, by) -> float:
    return math.hypot(ax - bx, ay - by)


def verify_run(
    reports_dir: str, truth_path: str, corpus_path: str, eps: float | None = None
) -> dict:
    """Score pipeline reports against generator ground truth.

    Raises InputError when the corpus digest does not match the one recorded
    in the ground-truth file.
    """
    with open(truth_path, "r", encoding="utf-8") as fp:
        truth = json.load(fp)
    digest = sha256_file(corpus_path)
    if truth.get("corpus_digest") != digest:
        raise InputError(
            "corpus digest mismatch: ground truth was generated for a different corpus"
        )
    if eps is None:
        with open(os.path.join(reports_dir, MANIFEST_JSON), "r", encoding="utf-8") as fp:
            manifest = json.load(fp)
        eps = float(manifest["config"]["experiments"][0]["eps_deg"])

    by_user: dict[str, list[tuple[int, float, float, str]]] = {}
    path = os.path.join(reports_dir, CLUSTERS_CSV)
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in fp:
            parts = line.rstrip("\n").split(",")
            uid = parts[idx["user"]]
            by_user.setdefault(uid, []).append(
                (
                    int(parts[idx["rank"]]),
                    float(parts[idx["centroid_lon"]]),
                    float(parts[idx["centroid_lat"]]),
                    parts[idx["dominant_landuse"]],
                )
            )

    users_truth = truth["users"]
    recovered = 0
    label_matches = 0
    evaluated = 0
    taus = []
    for uid, rows in by_user.items():
        info = users_truth.get(uid)
        if info is None:
            continue
        locations = info["locations"]
        top = locations[0]
        rows.sort(key=lambda r: r[0])
        evaluated += 1
        rank1 = rows[0]
        hit = _planar(rank1[1], rank1[2], top["lon"], top["lat"]) <= eps
        if hit:
            recovered += 1
            if rank1[3] == top["landuse"]:
                label_matches += 1
        if len(rows) >= 2:
            probs = []
            for _, clon, clat, _ in rows:
                nearest = min(
                    locations, key=lambda loc: _planar(clon, clat, loc["lon"], loc["lat"])
                )
                probs.append(nearest["prob"])
            n = len(probs)
            concordant = discordant = 0
            for i in range(n):
                for j in range(i + 1, n):
                    if probs[i] > probs[j]:
                        concordant += 1
                    elif probs[i] < probs[j]:
                        discordant += 1
            taus.append((concordant - discordant) / (n * (n - 1) / 2))

    return {
        "eps": eps,
        "users_truth": len(users_truth),
        "users_reported": evaluated,
        "top1_recovered": recovered,
        "top1_recovery_rate": recovered / evaluated if evaluated else 0.0,
        "label_matches": label_matches,
        "label_accuracy": label_matches / recovered if recovered else 0.0,
        "kendall_mean": sum(taus) / len(taus) if taus else None,
        "kendall_users": len(taus),
    }
