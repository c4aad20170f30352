"""Frequently-visited location mining over geo-located event streams."""

__version__ = "0.1.0"

from .cluster import ClusterParams, VisitCluster, cluster_user, dbscan, effective_min_pts
from .ingest import (
    BoundingBox,
    Trajectory,
    TweetRecord,
    TzRules,
    bbox_filter,
    build_trajectories,
    median_filter,
    parse_stream,
    to_local_time,
)
from .landuse import LanduseMap, LanduseTaxonomy, SemanticPoint, default_taxonomy, load_map
from .pipeline import PipelineConfig, run_pipeline, verify_run
from .synth import GridSpec, SynthConfig, build_synth_map, generate

__all__ = [
    "BoundingBox",
    "ClusterParams",
    "GridSpec",
    "LanduseMap",
    "LanduseTaxonomy",
    "PipelineConfig",
    "SemanticPoint",
    "SynthConfig",
    "Trajectory",
    "TweetRecord",
    "TzRules",
    "VisitCluster",
    "bbox_filter",
    "build_synth_map",
    "build_trajectories",
    "cluster_user",
    "dbscan",
    "default_taxonomy",
    "effective_min_pts",
    "generate",
    "load_map",
    "median_filter",
    "parse_stream",
    "run_pipeline",
    "to_local_time",
    "verify_run",
]
