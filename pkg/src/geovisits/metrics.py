"""Aggregate analytics over ranked visit clusters.

Products: per-rank landuse composition, purity quantile tables, 24-bin
hourly signatures per (landuse, rank) group, signature-based labeling, and
a two-parameter-set sensitivity comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cluster import ClusterParams, VisitCluster, cluster_user
from .errors import InputError
from .landuse import SemanticPoint


@dataclass
class RankComposition:
    """Dominant-landuse counts per rank with within-rank fractions."""

    rank_totals: dict[int, int]
    counts: dict[tuple[int, str], int]
    fractions: dict[tuple[int, str], float]


def rank_composition(clusters: Iterable[VisitCluster], max_rank: int) -> RankComposition:
    rank_totals: dict[int, int] = {}
    counts: dict[tuple[int, str], int] = {}
    for c in clusters:
        if c.rank > max_rank:
            continue
        rank_totals[c.rank] = rank_totals.get(c.rank, 0) + 1
        key = (c.rank, c.dominant_landuse)
        counts[key] = counts.get(key, 0) + 1
    fractions = {k: v / rank_totals[k[0]] for k, v in counts.items()}
    return RankComposition(rank_totals=rank_totals, counts=counts, fractions=fractions)


@dataclass
class PurityDistribution:
    """Per-rank purity order statistics (linear-interpolation quantiles)."""

    stats: dict[int, dict[str, float]]  # rank -> {n, min, p25, p50, p75, max}
    omitted_ranks: list[int] = field(default_factory=list)


def purity_distribution(
    clusters: Iterable[VisitCluster], ranks: Sequence[int] = (1, 2, 3, 4, 5)
) -> PurityDistribution:
    by_rank: dict[int, list[float]] = {r: [] for r in ranks}
    for c in clusters:
        if c.rank in by_rank:
            by_rank[c.rank].append(c.purity)
    stats: dict[int, dict[str, float]] = {}
    omitted = []
    for r in ranks:
        vals = by_rank[r]
        if not vals:
            omitted.append(r)
            continue
        arr = np.asarray(vals)
        p25, p50, p75 = np.percentile(arr, [25.0, 50.0, 75.0])
        stats[r] = {
            "n": float(len(vals)),
            "min": float(arr.min()),
            "p25": float(p25),
            "p50": float(p50),
            "p75": float(p75),
            "max": float(arr.max()),
        }
    return PurityDistribution(stats=stats, omitted_ranks=omitted)


@dataclass
class SignatureRow:
    """One (landuse, rank) group of the signature matrix."""

    landuse: str
    rank: int
    n_clusters: int
    hour_totals: tuple[int, ...]  # raw member counts per local hour
    intensity: tuple[float, ...]  # totals / n_clusters

    @property
    def total_tweets(self) -> int:
        return sum(self.hour_totals)

    def peak_hour(self) -> int:
        return max(range(24), key=lambda h: (self.intensity[h], -h))

    def peak_share(self) -> float:
        total = self.total_tweets
        return self.hour_totals[self.peak_hour()] / total if total else 0.0

    def chi2_uniform(self) -> float:
        """Chi-squared of the raw hour counts against a uniform 24-bin law."""
        total = self.total_tweets
        if total == 0:
            return 0.0
        expected = total / 24.0
        return sum((o - expected) ** 2 / expected for o in self.hour_totals)


@dataclass
class SignatureMatrix:
    rows: dict[tuple[str, int], SignatureRow]

    def vector(self, landuse: str, rank: int) -> tuple[float, ...]:
        return self.rows[(landuse, rank)].intensity


def hourly_signature(
    clusters: Iterable[VisitCluster], ranks: Sequence[int] = (1, 2, 3, 4, 5)
) -> SignatureMatrix:
    """Per-(landuse, rank) hourly intensity, normalized by group cluster count."""
    acc: dict[tuple[str, int], list] = {}
    for c in clusters:
        if c.rank not in ranks:
            continue
        key = (c.dominant_landuse, c.rank)
        slot = acc.get(key)
        if slot is None:
            acc[key] = [1, list(c.hour_hist)]
        else:
            slot[0] += 1
            totals = slot[1]
            for h, v in enumerate(c.hour_hist):
                totals[h] += v
    rows = {}
    for (landuse, rank), (n, totals) in acc.items():
        rows[(landuse, rank)] = SignatureRow(
            landuse=landuse,
            rank=rank,
            n_clusters=n,
            hour_totals=tuple(totals),
            intensity=tuple(t / n for t in totals),
        )
    return SignatureMatrix(rows=rows)


def signature_distance(sig_a: Sequence[float], sig_b: Sequence[float]) -> float:
    """1 - cosine similarity of the L1-normalized vectors, in [0, 1].

    Scale-invariant in either argument; raises on an all-zero vector.
    """
    a = np.asarray(sig_a, dtype=float)
    b = np.asarray(sig_b, dtype=float)
    if a.shape != b.shape:
        raise InputError("signature vectors must have equal length")
    if (a < 0).any() or (b < 0).any():
        raise InputError("signature vectors must be non-negative")
    sa = a.sum()
    sb = b.sum()
    if sa == 0.0 or sb == 0.0:
        raise InputError("signature vector is all zeros")
    a = a / sa
    b = b / sb
    sim = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    d = 1.0 - min(1.0, max(-1.0, sim))
    # snap float dust so identical shapes compare equal to 0
    if d < 1e-12:
        return 0.0
    return min(1.0, d)


ABSTAIN = "ABSTAIN"


@dataclass(frozen=True)
class Classification:
    landuse: str | None
    dissimilarity: float | None
    abstained: bool

    @property
    def label(self) -> str:
        return ABSTAIN if self.abstained else self.landuse


def classify_cluster(
    hour_hist: Sequence[float],
    references: Mapping[str, Sequence[float]],
    min_tweets: int = 10,
) -> Classification:
    """Label a cluster by its nearest reference signature.

    Abstains when the cluster holds fewer than min_tweets member tweets
    (hour_hist sums below the threshold); reference ties break to the
    lexicographically smallest class name.
    """
    if len(references) < 2:
        raise InputError("classification needs references for at least 2 classes")
    if sum(hour_hist) < min_tweets:
        return Classification(landuse=None, dissimilarity=None, abstained=True)
    best_cls = None
    best_d = math.inf
    for cls in sorted(references):
        d = signature_distance(hour_hist, references[cls])
        if d < best_d:
            best_d = d
            best_cls = cls
    return Classification(landuse=best_cls, dissimilarity=best_d, abstained=False)


@dataclass
class ExperimentResult:
    name: str
    rank1_counts: dict[str, int]  # dominant landuse -> rank-1 cluster count
    rank1_share_pct: dict[str, float]
    total_counts: dict[str, int]  # dominant landuse -> clusters at any rank
    n_rank1: int


@dataclass
class SensitivityReport:
    first: ExperimentResult
    second: ExperimentResult

    def landuses(self) -> list[str]:
        return sorted(set(self.first.total_counts) | set(self.second.total_counts))


def experiment_result(name: str, clusters: Iterable[VisitCluster]) -> ExperimentResult:
    rank1: dict[str, int] = {}
    total: dict[str, int] = {}
    n_rank1 = 0
    for c in clusters:
        total[c.dominant_landuse] = total.get(c.dominant_landuse, 0) + 1
        if c.rank == 1:
            rank1[c.dominant_landuse] = rank1.get(c.dominant_landuse, 0) + 1
            n_rank1 += 1
    share = {cls: 100.0 * v / n_rank1 for cls, v in rank1.items()} if n_rank1 else {}
    return ExperimentResult(
        name=name,
        rank1_counts=rank1,
        rank1_share_pct=share,
        total_counts=total,
        n_rank1=n_rank1,
    )


def compare_experiments(
    corpus: Mapping[str, Sequence[SemanticPoint]],
    params_1: tuple[str, ClusterParams],
    params_2: tuple[str, ClusterParams],
) -> SensitivityReport:
    """Cluster the same enriched corpus under two parameter sets.

    corpus maps user_id to that user's semantic points; results summarize
    the rank-1 dominant-class shares and per-landuse cluster counts.
    """
    results = []
    for name, params in (params_1, params_2):
        clusters: list[VisitCluster] = []
        for uid in sorted(corpus):
            user_clusters, _ = cluster_user(corpus[uid], params)
            clusters.extend(user_clusters)
        results.append(experiment_result(name, clusters))
    return SensitivityReport(first=results[0], second=results[1])
