"""Command-line entry points: generate, run, verify, signatures.

Option precedence: built-in defaults, then the --config JSON file, then
explicit flags. Exit codes: 0 success, 1 internal failure, 2 bad input or
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from . import synth
from .errors import GeovisitsError, InputError
from .landuse import write_taxonomy_csv
from .pipeline import (
    ExperimentSpec,
    PipelineConfig,
    run_pipeline,
    sha256_file,
    verify_run,
)


def _load_json_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return json.load(fp)
    except OSError as e:
        raise InputError(f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"config file is not valid JSON: {e}") from e


def _dump_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        json.dump(obj, fp, sort_keys=True, separators=(",", ":"))
        fp.write("\n")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _synth_config_from(args) -> tuple[synth.SynthConfig, dict]:
    d: dict = {}
    if args.config:
        d = _load_json_config(args.config)
    defaults_applied = []
    flag_map = {
        "n_users": args.n_users,
        "seed": args.seed,
        "tourists_count": args.tourists,
    }
    for key, val in flag_map.items():
        if val is not None:
            d[key] = val

    known = {
        "n_users", "seed", "year", "sigma_deg", "glitch_prob", "glitch_scale",
        "zipf_s", "max_locations", "loc_zipf_s", "home_bias", "edge_frac",
        "edge_sigma_scale", "edge_dist", "tweets_median", "tweets_sigma",
        "tweets_min", "tweets_max", "grid", "tourists", "tourists_count",
    }
    unknown = set(d) - known
    if unknown:
        raise InputError(f"unknown synth config keys: {sorted(unknown)}")
    for field_name in ("n_users", "seed"):
        if field_name not in d:
            defaults_applied.append(field_name)

    grid = synth.GridSpec(**d.get("grid", {})) if "grid" in d else synth.GridSpec()
    tourists = synth.TouristSpec()
    if "tourists" in d:
        t = dict(d["tourists"])
        if "hotel_tweets" in t:
            t["hotel_tweets"] = tuple(t["hotel_tweets"])
        if "extra_tweets" in t:
            t["extra_tweets"] = tuple(t["extra_tweets"])
        tourists = synth.TouristSpec(**t)
    if "tourists_count" in d:
        tourists = synth.TouristSpec(
            count=int(d["tourists_count"]),
            hotel_tweets=tourists.hotel_tweets,
            extra_tweets=tourists.extra_tweets,
        )
    if "edge_dist" in d:
        d["edge_dist"] = tuple(d["edge_dist"])
    kwargs = {
        k: d[k]
        for k in (
            "n_users", "seed", "year", "sigma_deg", "glitch_prob", "glitch_scale",
            "zipf_s", "max_locations", "loc_zipf_s", "home_bias", "edge_frac",
            "edge_sigma_scale", "edge_dist", "tweets_median", "tweets_sigma",
            "tweets_min", "tweets_max",
        )
        if k in d
    }
    try:
        config = synth.SynthConfig(grid=grid, tourists=tourists, **kwargs)
    except TypeError as e:
        raise InputError(f"bad synth config: {e}") from e
    return config, {"defaults_applied": sorted(defaults_applied)}


def cmd_generate(args) -> int:
    config, notes = _synth_config_from(args)
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)

    doc, taxonomy, _ = synth.build_synth_map(config.grid, config.seed)
    map_path = os.path.join(outdir, "map.geojson")
    with open(map_path, "w", encoding="utf-8", newline="") as fp:
        json.dump(doc, fp, sort_keys=True, separators=(",", ":"))
        fp.write("\n")
    tax_path = os.path.join(outdir, "taxonomy.csv")
    with open(tax_path, "w", encoding="utf-8", newline="") as fp:
        write_taxonomy_csv(taxonomy, fp)

    events_path = os.path.join(outdir, "events.ndjson")
    with open(events_path, "w", encoding="utf-8", newline="") as fp:
        truth = synth.generate(config, fp)
    truth["corpus_digest"] = sha256_file(events_path)
    truth_path = os.path.join(outdir, "ground_truth.json")
    _dump_json(truth, truth_path)

    manifest = {
        "seed": config.seed,
        "n_users": config.n_users,
        "tourists": config.tourists.count,
        "year": config.year,
        "corpus_digest": truth["corpus_digest"],
        "notes": notes,
        "files": ["events.ndjson", "ground_truth.json", "map.geojson", "taxonomy.csv"],
    }
    _dump_json(manifest, os.path.join(outdir, "generate_manifest.json"))
    print(f"wrote corpus for {truth['n_users']} users to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _experiment_overrides(d: dict, args) -> None:
    """Apply --eps-deg style flags over the config dict's experiment list."""
    exps = d.get("experiments")
    primary = dict(exps[0]) if exps else {}
    changed = False
    if args.eps_deg is not None:
        primary["eps_deg"] = args.eps_deg
        changed = True
    if args.min_pts is not None:
        primary["min_pts"] = args.min_pts
        primary.pop("min_pts_frac", None)
        changed = True
    if args.min_pts_frac is not None:
        primary["min_pts_frac"] = args.min_pts_frac
        primary.pop("min_pts", None)
        changed = True
    if args.distance is not None:
        primary["distance"] = args.distance
        changed = True
    second = dict(exps[1]) if exps and len(exps) > 1 else None
    if args.eps_deg_2 is not None or args.min_pts_2 is not None or args.min_pts_frac_2 is not None:
        second = second or {}
        if args.eps_deg_2 is not None:
            second["eps_deg"] = args.eps_deg_2
        if args.min_pts_2 is not None:
            second["min_pts"] = args.min_pts_2
            second.pop("min_pts_frac", None)
        if args.min_pts_frac_2 is not None:
            second["min_pts_frac"] = args.min_pts_frac_2
            second.pop("min_pts", None)
        changed = True
    if changed or exps:
        d["experiments"] = [primary] if second is None else [primary, second]


def _pipeline_config_from(args) -> PipelineConfig:
    d: dict = {}
    if args.config:
        d = _load_json_config(args.config)
    if args.events is not None:
        d["events"] = args.events
    if args.format is not None:
        d["format"] = args.format
    if args.polygons is not None:
        d["polygons"] = args.polygons
    if args.taxonomy is not None:
        d["taxonomy"] = args.taxonomy
    if args.outdir is not None:
        d["out_dir"] = args.outdir
    if args.year is not None:
        d["year"] = args.year
    if args.jobs is not None:
        d["jobs"] = args.jobs
    if args.dedupe:
        d["dedupe"] = True
    if args.landuse_distance is not None:
        d["landuse_distance"] = args.landuse_distance
    if args.bbox is not None:
        parts = args.bbox.split(",")
        if len(parts) != 4:
            raise InputError("--bbox expects min_lat,min_lon,max_lat,max_lon")
        d["bbox"] = [float(p) for p in parts]
    _experiment_overrides(d, args)
    return PipelineConfig.from_dict(d)


def cmd_run(args) -> int:
    config = _pipeline_config_from(args)
    result = run_pipeline(config)
    c = result.counts
    primary = config.experiments[0].name
    print(
        f"parsed {c['parsed']} records ({c['parse_errors']} malformed), "
        f"retained {c['users_retained']}/{c['users_total']} users, "
        f"{c['clusters_' + primary]} clusters; reports in {config.out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    scorecard = verify_run(args.reports, args.truth, args.corpus, eps=args.eps)
    text = json.dumps(scorecard, sort_keys=True, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fp:
            fp.write(text + "\n")
    return 0


# ---------------------------------------------------------------------------
# signatures
# ---------------------------------------------------------------------------


def cmd_signatures(args) -> int:
    lines = ["landuse," + ",".join(f"h{h:02d}" for h in range(24))]
    for cls in sorted(synth.HOUR_TEMPLATES):
        weights = synth.HOUR_TEMPLATES[cls]
        total = sum(weights)
        lines.append(cls + "," + ",".join(f"{w / total:.9g}" for w in weights))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geovisits",
        description="Frequently-visited location mining over geo-located event streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic labeled corpus")
    p.add_argument("--config", help="synth config JSON file")
    p.add_argument("--outdir", default="synth_out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-users", type=int, dest="n_users")
    p.add_argument("--tourists", type=int, help="tourist cohort size")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run the full pipeline and write reports")
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--events")
    p.add_argument("--format", choices=["ndjson", "csv"])
    p.add_argument("--polygons")
    p.add_argument("--taxonomy")
    p.add_argument("--outdir")
    p.add_argument("--bbox", help="min_lat,min_lon,max_lat,max_lon")
    p.add_argument("--year", type=int)
    p.add_argument("--dedupe", action="store_true")
    p.add_argument("--jobs", type=int)
    p.add_argument("--eps-deg", type=float, dest="eps_deg")
    p.add_argument("--min-pts", type=int, dest="min_pts")
    p.add_argument("--min-pts-frac", type=float, dest="min_pts_frac")
    p.add_argument("--distance", choices=["planar", "haversine"])
    p.add_argument("--landuse-distance", choices=["planar", "haversine"], dest="landuse_distance")
    p.add_argument("--eps-deg-2", type=float, dest="eps_deg_2")
    p.add_argument("--min-pts-2", type=int, dest="min_pts_2")
    p.add_argument("--min-pts-frac-2", type=float, dest="min_pts_frac_2")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="score reports against synthetic ground truth")
    p.add_argument("--reports", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("signatures", help="dump the reference hourly signatures")
    p.add_argument("--out")
    p.set_defaults(func=cmd_signatures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GeovisitsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
