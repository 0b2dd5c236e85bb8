"""Quantitative evaluation of ranked suggestions: precision@k and its area,
final-click fractions, pooled volume-vs-precision, path-position buckets,
per-path mention statistics, and false-negative histogram counts.

Everything here is pure over immutable inputs; aggregation is an ordered
reduction so results do not depend on worker scheduling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import LinkGraph, MentionIndex
from .errors import IneligibleEvaluationError, RankingError
from .groundtruth import HumanLabel
from .ranking import RankedSuggestions
from .traces import NavigationPath, TargetIndex

log = logging.getLogger(__name__)

LabelFn = Callable[[int, int], bool]

BUCKET_EDGES = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))
MIN_BUCKET_CLICKS = 5


def labels_from_map(mapping: Mapping[tuple[int, int], bool]) -> LabelFn:
    return lambda s, t: mapping.get((s, t), False)


def precision_at_k(ranked: RankedSuggestions, labels: LabelFn,
                   k_max: int) -> tuple[float, ...] | None:
    """Precision of the top k suggestions for k = 1..k_max; None marks the
    target ineligible (fewer than k_max suggestions)."""
    if len(ranked) < k_max:
        return None
    positives = 0
    curve = []
    for k, entry in enumerate(ranked.entries[:k_max], start=1):
        if labels(entry.candidate.source, entry.candidate.target):
            positives += 1
        curve.append(positives / k)
    return tuple(curve)


@dataclass(frozen=True)
class EvalReport:
    k_max: int
    eligible_targets: tuple[int, ...]
    per_target: Mapping[int, tuple[float, ...]]
    mean_curve: tuple[float, ...]
    auc: float
    metadata: Mapping[str, object] = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "n_eligible_targets": len(self.eligible_targets),
            "eligible_targets": list(self.eligible_targets),
            "mean_precision_at_k": list(self.mean_curve),
            "auc": self.auc,
            "metadata": dict(self.metadata),
        }


def aggregate_report(per_target: Mapping[int, tuple[float, ...] | None],
                     k_max: int,
                     metadata: Mapping[str, object] | None = None) -> EvalReport:
    """Unweighted mean over eligible targets per k; the area under the
    curve is the mean of the aggregate precision@k over k = 1..k_max."""
    eligible = tuple(sorted(t for t, curve in per_target.items() if curve is not None))
    if not eligible:
        raise IneligibleEvaluationError(
            f"no target has at least {k_max} ranked suggestions")
    mean_curve = tuple(
        sum(per_target[t][i] for t in eligible) / len(eligible)
        for i in range(k_max)
    )
    return EvalReport(
        k_max=k_max,
        eligible_targets=eligible,
        per_target={t: per_target[t] for t in eligible},
        mean_curve=mean_curve,
        auc=sum(mean_curve) / k_max,
        metadata=dict(metadata or {}),
    )


def evaluate_rankings(rankings: Iterable[RankedSuggestions], labels: LabelFn,
                      k_max: int,
                      metadata: Mapping[str, object] | None = None) -> EvalReport:
    per_target = {r.target: precision_at_k(r, labels, k_max) for r in rankings}
    return aggregate_report(per_target, k_max, metadata)


def final_click_curve(rankings: Sequence[RankedSuggestions],
                      k_max: int) -> tuple[float, ...]:
    """Per rank k, the fraction of suggestions (across eligible targets)
    whose source was the penultimate page on at least one contributing path."""
    eligible = [r for r in rankings if len(r) >= k_max]
    if not eligible:
        raise IneligibleEvaluationError(
            f"no target has at least {k_max} ranked suggestions")
    curve = []
    for k in range(k_max):
        hits = 0
        for ranked in eligible:
            entry = ranked.entries[k]
            if entry.candidate.mean_rel_position is None:
                raise RankingError("final-click analysis needs path statistics; "
                                   "rank with path-based selection")
            if entry.candidate.penultimate_count >= 1:
                hits += 1
        curve.append(hits / len(eligible))
    return tuple(curve)


def volume_precision_curve(rankings: Iterable[RankedSuggestions], labels: LabelFn,
                           grid: Sequence[int] | None = None,
                           graph: LinkGraph | None = None
                           ) -> tuple[tuple[int, float], ...]:
    """Cumulative precision of the top n suggestions pooled across all
    targets, ordered by score (ties: path frequency, then source title via
    the graph when given, then ids).  The default grid is every n."""
    pool = []
    for ranked in rankings:
        for entry in ranked.entries:
            c = entry.candidate
            title = graph.title_of(c.source) if graph is not None else str(c.source)
            pool.append((-entry.score, -c.path_frequency, title, c.target, c.source))
    pool.sort()
    flags = [labels(source, target) for _, _, _, target, source in pool]
    ns = list(grid) if grid is not None else list(range(1, len(flags) + 1))
    curve = []
    positives = np.cumsum(flags) if flags else np.array([], dtype=int)
    for n in ns:
        if n < 1 or n > len(flags):
            continue
        curve.append((n, float(positives[n - 1]) / n))
    return tuple(curve)


@dataclass(frozen=True)
class BucketRow:
    lo: float
    hi: float
    n_pages: int
    n_mentioning: int
    n_not_linking: int
    n_candidate: int                # mention and no link
    n_positive: Mapping[float, int]  # per alpha, among candidate pages

    @property
    def mention_fraction(self) -> float:
        return self.n_mentioning / self.n_pages if self.n_pages else 0.0

    @property
    def candidate_fraction(self) -> float:
        """Mentioning fraction among pages that do not link to the target."""
        return self.n_candidate / self.n_not_linking if self.n_not_linking else 0.0

    def positive_fraction(self, alpha: float) -> float:
        return self.n_positive[alpha] / self.n_candidate if self.n_candidate else 0.0


def bucket_analysis(paths: Iterable[NavigationPath], mention: MentionIndex,
                    graph: LinkGraph, link_rate_fn: Callable[[int, int], float],
                    alphas: Sequence[float] = (0.3,)) -> tuple[BucketRow, ...]:
    """Mention/candidate fractions per relative-position bucket.

    Only paths of at least five clicks contribute, so every path reaches
    each of the five buckets and the page just before the target always
    falls into the last one.  Every interior page visit is one observation.
    """
    n_buckets = len(BUCKET_EDGES)
    pages = [0] * n_buckets
    mentioning = [0] * n_buckets
    not_linking = [0] * n_buckets
    candidate = [0] * n_buckets
    positive = [{a: 0 for a in alphas} for _ in range(n_buckets)]
    for path in paths:
        if path.n < MIN_BUCKET_CLICKS:
            continue
        for i in path.interior_indices():
            pos = path.rel_position(i)
            bucket = min(int(pos * n_buckets), n_buckets - 1)
            page = path.pages[i]
            pages[bucket] += 1
            mentions = mention.mentions(page, path.target)
            links = graph.has_edge(page, path.target)
            if mentions:
                mentioning[bucket] += 1
            if not links:
                not_linking[bucket] += 1
                if mentions:
                    candidate[bucket] += 1
                    rate = link_rate_fn(page, path.target)
                    for a in alphas:
                        if rate > a:
                            positive[bucket][a] += 1
    return tuple(
        BucketRow(lo, hi, pages[b], mentioning[b], not_linking[b], candidate[b],
                  dict(positive[b]))
        for b, (lo, hi) in enumerate(BUCKET_EDGES)
    )


@dataclass(frozen=True)
class PathMentionStats:
    n_paths: int
    mean_mentioning_pages_per_path: float
    n_mentioning_page_visits: int
    linking_fraction: float
    non_linking_fraction: float


def corpus_path_stats(paths: Iterable[NavigationPath], mention: MentionIndex,
                      graph: LinkGraph) -> PathMentionStats:
    """Mean number of distinct interior pages per path that mention the
    target, and the linking/non-linking split among those pages."""
    n_paths = 0
    total_mentioning = 0
    linking = 0
    non_linking = 0
    for path in paths:
        n_paths += 1
        seen: set[int] = set()
        for i in path.interior_indices():
            page = path.pages[i]
            if page in seen:
                continue
            seen.add(page)
            if mention.mentions(page, path.target):
                total_mentioning += 1
                if graph.has_edge(page, path.target):
                    linking += 1
                else:
                    non_linking += 1
    mentioning_visits = linking + non_linking
    return PathMentionStats(
        n_paths=n_paths,
        mean_mentioning_pages_per_path=(total_mentioning / n_paths) if n_paths else 0.0,
        n_mentioning_page_visits=mentioning_visits,
        linking_fraction=(linking / mentioning_visits) if mentioning_visits else 0.0,
        non_linking_fraction=(non_linking / mentioning_visits) if mentioning_visits else 0.0,
    )


def false_negative_histogram(auto_labels: Mapping[tuple[int, int], bool],
                             human_labels: Mapping[tuple[int, int], HumanLabel],
                             bins: int = 10) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Histogram of mean human labels over the candidates the automatic
    ground truth called negative; errors when the label sets do not meet."""
    shared = [pair for pair in auto_labels if pair in human_labels]
    if not shared:
        raise IneligibleEvaluationError("automatic and human labels share no candidates")
    values = [human_labels[pair].mean for pair in shared if not auto_labels[pair]]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return tuple(int(c) for c in counts), tuple(float(e) for e in edges)
