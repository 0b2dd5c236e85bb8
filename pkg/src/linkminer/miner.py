"""Candidate generation and filtering: turn per-target path statistics into
source candidates, or take every mentioning non-linking article as the
no-selection baseline."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import LinkGraph, MentionIndex
from .errors import CorpusFormatError
from .traces import PairStats, TargetIndex

log = logging.getLogger(__name__)

POSITION_THRESHOLD = Fraction(1, 2)

CANDIDATE_CSV_FIELDS = ("target", "source", "path_frequency", "mean_rel_position",
                        "penultimate_count", "n_paths_through")


@dataclass(frozen=True)
class SourceCandidate:
    """A filtered (source, target) pair; mean_rel_position is None for
    baseline candidates without path statistics."""

    source: int
    target: int
    path_frequency: Fraction
    mean_rel_position: Fraction | None
    penultimate_count: int
    n_paths_through: int


@dataclass(frozen=True)
class CandidateSet:
    target: int
    candidates: tuple[SourceCandidate, ...]
    n_paths_total: int
    rejections: Mapping[str, int] = field(default_factory=dict, compare=False)

    @property
    def has_path_stats(self) -> bool:
        return all(c.mean_rel_position is not None for c in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


def generate_pairs(target: int, index: TargetIndex) -> dict[int, PairStats]:
    """Union of (p_i, target) pairs over all paths for the target, start
    pages exempt; no paths yields an empty set."""
    return {s: index.pair_stats(s, target) for s in index.sources_for(target)}


def filter_candidates(target: int, pairs: Mapping[int, PairStats],
                      n_paths_total: int, graph: LinkGraph, mention: MentionIndex,
                      position_threshold: Fraction | float = POSITION_THRESHOLD,
                      min_support: int = 1) -> CandidateSet:
    """Keep (s, t) iff the snapshot has no such edge, s mentions t, and the
    mean relative path position is strictly above the threshold."""
    threshold = Fraction(position_threshold)
    rejections: Counter = Counter()
    kept: list[SourceCandidate] = []
    for source in sorted(pairs):
        stats = pairs[source]
        if source == target:
            rejections["is-target"] += 1
            continue
        if stats.n_paths_through < min_support:
            rejections["below-min-support"] += 1
            continue
        if graph.has_edge(source, target):
            rejections["link-exists"] += 1
            continue
        if not mention.mentions(source, target):
            rejections["no-mention"] += 1
            continue
        if stats.mean_rel_position <= threshold:
            rejections["early-position"] += 1
            continue
        kept.append(SourceCandidate(
            source=source,
            target=target,
            path_frequency=Fraction(stats.n_paths_through, n_paths_total),
            mean_rel_position=stats.mean_rel_position,
            penultimate_count=stats.penultimate_count,
            n_paths_through=stats.n_paths_through,
        ))
    return CandidateSet(target, tuple(kept), n_paths_total, dict(rejections))


def mine_target(target: int, index: TargetIndex, graph: LinkGraph,
                mention: MentionIndex, *,
                position_threshold: Fraction | float = POSITION_THRESHOLD,
                min_support: int = 1) -> CandidateSet:
    """Pair generation followed by the three filters, candidates ordered by
    source id.  A target without paths yields an empty set."""
    graph.title_of(target)  # raises UnknownArticleError for bad ids
    pairs = generate_pairs(target, index)
    return filter_candidates(target, pairs, index.n_paths(target), graph, mention,
                             position_threshold=position_threshold,
                             min_support=min_support)


def baseline_all_mentions(target: int, graph: LinkGraph, mention: MentionIndex,
                          index: TargetIndex | None = None) -> CandidateSet:
    """Every article that mentions the target but does not link to it.

    Path statistics are attached when an index is supplied (so the same
    ranking code applies to both selection modes); otherwise frequency is
    0 and the mean position is unset.
    """
    kept: list[SourceCandidate] = []
    n_paths_total = index.n_paths(target) if index is not None else 0
    for source in sorted(mention.mentioning_sources(target)):
        if source == target or graph.has_edge(source, target):
            continue
        stats = index.pair_stats(source, target) if index is not None else None
        if stats is not None and n_paths_total > 0:
            kept.append(SourceCandidate(
                source=source, target=target,
                path_frequency=Fraction(stats.n_paths_through, n_paths_total),
                mean_rel_position=stats.mean_rel_position,
                penultimate_count=stats.penultimate_count,
                n_paths_through=stats.n_paths_through,
            ))
        else:
            kept.append(SourceCandidate(
                source=source, target=target,
                path_frequency=Fraction(0),
                mean_rel_position=None,
                penultimate_count=0,
                n_paths_through=0,
            ))
    return CandidateSet(target, tuple(kept), n_paths_total)


def write_candidates_csv(sets: Iterable[CandidateSet], graph: LinkGraph,
                         file: str | Path, metadata: Iterable[str] = ()) -> None:
    with open(file, "w", encoding="utf-8", newline="") as fh:
        for line in metadata:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(CANDIDATE_CSV_FIELDS)
        for cset in sets:
            for c in cset.candidates:
                writer.writerow([
                    graph.title_of(c.target),
                    graph.title_of(c.source),
                    repr(float(c.path_frequency)),
                    "" if c.mean_rel_position is None else repr(float(c.mean_rel_position)),
                    c.penultimate_count,
                    c.n_paths_through,
                ])


def read_candidates_csv(file: str | Path, graph: LinkGraph) -> list[CandidateSet]:
    """Rebuild candidate sets from a dump, ordered by target id then source id."""
    rows_by_target: dict[int, list[SourceCandidate]] = {}
    with open(file, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CANDIDATE_CSV_FIELDS:
        raise CorpusFormatError(f"unexpected candidate CSV header in {file}")
    for row in reader:
        target = graph.id_of(row["target"])
        source = graph.id_of(row["source"])
        mean_pos = row["mean_rel_position"]
        rows_by_target.setdefault(target, []).append(SourceCandidate(
            source=source,
            target=target,
            path_frequency=Fraction(float(row["path_frequency"])),
            mean_rel_position=None if mean_pos == "" else Fraction(float(mean_pos)),
            penultimate_count=int(row["penultimate_count"]),
            n_paths_through=int(row["n_paths_through"]),
        ))
    sets = []
    for target in sorted(rows_by_target):
        cands = sorted(rows_by_target[target], key=lambda c: c.source)
        n_total = 0
        for c in cands:
            if c.path_frequency > 0:
                n_total = round(c.n_paths_through / c.path_frequency)
                break
        sets.append(CandidateSet(target, tuple(cands), n_total))
    return sets
