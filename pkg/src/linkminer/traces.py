"""Navigation-game log parsing, back-click resolution, and target indexing.

Two ingestion formats produce the same record type:

  * Wikispeedia TSV: ``session<TAB>timestamp<TAB>duration<TAB>path<TAB>rating``
    with the path semicolon-separated and ``<`` marking a back-click; the
    unfinished-paths variant carries the declared target in the fifth
    column instead of a rating.
  * generic JSON lines with fields ``start``, ``target``, ``clicks``
    (ordered titles after the start page), ``finished``.

The built index is immutable and safe for concurrent reads.
"""

from __future__ import annotations

import json
import logging
import statistics
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import LinkGraph, normalize_title
from .errors import TraceFormatError, UnknownArticleError

log = logging.getLogger(__name__)

BACK_CLICK = "<"


@dataclass(frozen=True)
class RawPathRecord:
    """One game record as parsed from disk, titles unresolved."""

    session_id: str
    timestamp: int
    duration: float
    click_tokens: tuple[str, ...]
    declared_target: str | None
    finished: bool


@dataclass
class ParseResult:
    records: list[RawPathRecord]
    n_skipped: int


def parse_wikispeedia(file: str | Path, finished: bool = True) -> ParseResult:
    """Parse a Wikispeedia-style TSV path file.

    Malformed lines are skipped with a counted warning; a missing file is
    a hard error.  The rating column of finished-path files is ignored.
    """
    path = Path(file)
    if not path.exists():
        raise TraceFormatError(f"trace file not found: {path}")
    records: list[RawPathRecord] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 5:
                log.warning("%s:%d: expected 5 fields, got %d", path, lineno, len(parts))
                skipped += 1
                continue
            tokens = tuple(tok for tok in parts[3].split(";") if tok)
            if not tokens or tokens[0] == BACK_CLICK:
                log.warning("%s:%d: empty path or leading back-click", path, lineno)
                skipped += 1
                continue
            try:
                timestamp = int(parts[1])
                duration = float(parts[2])
            except ValueError:
                log.warning("%s:%d: bad timestamp/duration", path, lineno)
                skipped += 1
                continue
            records.append(RawPathRecord(
                session_id=parts[0],
                timestamp=timestamp,
                duration=duration,
                click_tokens=tokens,
                declared_target=parts[4] if not finished else None,
                finished=finished,
            ))
    return ParseResult(records, skipped)


def parse_generic(file: str | Path) -> ParseResult:
    """Parse JSON-lines records with fields start/target/clicks/finished."""
    path = Path(file)
    if not path.exists():
        raise TraceFormatError(f"trace file not found: {path}")
    records: list[RawPathRecord] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
                start = str(obj["start"])
                clicks = [str(c) for c in obj["clicks"]]
                finished = bool(obj["finished"])
                target = obj.get("target")
            except (json.JSONDecodeError, KeyError, TypeError):
                log.warning("%s:%d: malformed record", path, lineno)
                skipped += 1
                continue
            records.append(RawPathRecord(
                session_id=str(obj.get("session", f"line{lineno}")),
                timestamp=int(obj.get("timestamp", 0)),
                duration=float(obj.get("duration", 0.0)),
                click_tokens=tuple([start] + clicks),
                declared_target=str(target) if target is not None else None,
                finished=finished,
            ))
    return ParseResult(records, skipped)


def resolve_backclicks(tokens: Sequence[str], keep_detours: bool = False) -> list[str]:
    """Turn a click token stream with ``<`` back-click markers into a page list.

    With ``keep_detours=False`` each ``<`` pops the implicit stack and the
    abandoned branch is dropped; with ``keep_detours=True`` the full visit
    sequence is returned, including the page each back-click returns to.
    A back-click without a predecessor to return to rejects the record.
    """
    stack: list[str] = []
    visits: list[str] = []
    for tok in tokens:
        if tok == BACK_CLICK:
            if len(stack) < 2:
                raise TraceFormatError("back-click with no page to return to")
            stack.pop()
            visits.append(stack[-1])
        else:
            stack.append(tok)
            visits.append(tok)
    return visits if keep_detours else stack


@dataclass(frozen=True)
class NavigationPath:
    """One normalized game path.

    For finished paths ``pages`` ends with the target and the click count
    is ``len(pages) - 1``.  Unfinished paths never reach the target; their
    click count treats the target as one (virtual) click past the last
    visited page, so every visited page has a relative position below 1.
    """

    start: int
    target: int
    pages: tuple[int, ...]
    finished: bool = True

    def __post_init__(self):
        if not self.pages or self.pages[0] != self.start:
            raise TraceFormatError("path must begin at its start page")
        if self.finished:
            if len(self.pages) < 2:
                raise TraceFormatError("finished path needs at least one click")
            if self.pages[-1] != self.target:
                raise TraceFormatError("finished path must end at its target")
            if self.pages.count(self.target) != 1:
                raise TraceFormatError("target must appear exactly once")
        elif self.target in self.pages:
            raise TraceFormatError("unfinished path must not visit its target")

    @property
    def n(self) -> int:
        """Click count; the denominator of relative positions."""
        return len(self.pages) - 1 if self.finished else len(self.pages)

    def rel_position(self, i: int) -> Fraction:
        return Fraction(i, self.n)

    def interior_indices(self) -> range:
        """Indices eligible for pair generation: everything after the start
        page and before the target."""
        return range(1, self.n)


def normalize_path(record: RawPathRecord, graph: LinkGraph, *,
                   target_override: int | None = None,
                   keep_detours: bool = False,
                   include_unfinished: bool = False) -> NavigationPath | None:
    """Resolve and normalize one record; None means filtered out."""
    path, _ = _normalize(record, graph, target_override=target_override,
                         keep_detours=keep_detours,
                         include_unfinished=include_unfinished)
    return path


def _normalize(record: RawPathRecord, graph: LinkGraph, *,
               target_override: int | None,
               keep_detours: bool,
               include_unfinished: bool) -> tuple[NavigationPath | None, str | None]:
    if not record.finished and not include_unfinished:
        return None, "unfinished-excluded"
    try:
        titles = resolve_backclicks(record.click_tokens, keep_detours=keep_detours)
    except TraceFormatError:
        return None, "backclick-underflow"
    try:
        pages = [graph.id_of(t) for t in titles]
    except UnknownArticleError:
        return None, "unresolvable-title"

    if record.finished:
        if target_override is not None:
            target = target_override
        else:
            target = pages[-1]
        try:
            cut = pages.index(target)
        except ValueError:
            return None, "target-not-on-path"
        pages = pages[:cut + 1]
        if len(pages) < 2:
            return None, "degenerate-path"
        return NavigationPath(pages[0], target, tuple(pages), finished=True), None

    if target_override is not None:
        target = target_override
    elif record.declared_target is not None:
        try:
            target = graph.id_of(record.declared_target)
        except UnknownArticleError:
            return None, "unresolvable-title"
    else:
        return None, "missing-target"
    if target in pages:
        return None, "target-on-unfinished-path"
    return NavigationPath(pages[0], target, tuple(pages), finished=False), None


def normalize_paths(records: Iterable[RawPathRecord], graph: LinkGraph, *,
                    target_override: int | None = None,
                    keep_detours: bool = False,
                    include_unfinished: bool = False
                    ) -> tuple[list[NavigationPath], Counter]:
    """Normalize a batch, counting each rejection reason."""
    paths: list[NavigationPath] = []
    reasons: Counter = Counter()
    for record in records:
        path, reason = _normalize(record, graph, target_override=target_override,
                                  keep_detours=keep_detours,
                                  include_unfinished=include_unfinished)
        if path is not None:
            paths.append(path)
        else:
            reasons[reason] += 1
    return paths, reasons


@dataclass(frozen=True)
class PairStats:
    """Per (source, target) path statistics.

    A page occurring several times in one path counts once per path, at
    its first interior occurrence; the page at index 0 is exempt, but a
    later revisit of the start page counts as a normal intermediate page.
    """

    n_paths_through: int
    position_sum: Fraction
    penultimate_count: int

    @property
    def mean_rel_position(self) -> Fraction:
        return self.position_sum / self.n_paths_through


class TargetIndex:
    """Navigation paths grouped by target, with per-(source, target) statistics."""

    def __init__(self, paths: Iterable[NavigationPath]):
        by_target: dict[int, list[NavigationPath]] = {}
        pair: dict[tuple[int, int], list] = {}
        for path in paths:
            by_target.setdefault(path.target, []).append(path)
            seen: dict[int, int] = {}
            for i in path.interior_indices():
                seen.setdefault(path.pages[i], i)
            for page, first in seen.items():
                entry = pair.setdefault((page, path.target), [0, Fraction(0), 0])
                entry[0] += 1
                entry[1] += path.rel_position(first)
            if path.finished and path.n >= 2:
                penultimate = path.pages[path.n - 1]
                pair[(penultimate, path.target)][2] += 1
        self._by_target = {t: tuple(ps) for t, ps in sorted(by_target.items())}
        self._pair = {key: PairStats(*entry) for key, entry in sorted(pair.items(),
                      key=lambda kv: (kv[0][1], kv[0][0]))}

    def targets(self) -> tuple[int, ...]:
        return tuple(self._by_target.keys())

    def paths_for(self, target: int) -> tuple[NavigationPath, ...]:
        return self._by_target.get(target, ())

    def n_paths(self, target: int) -> int:
        return len(self._by_target.get(target, ()))

    @property
    def n_paths_total(self) -> int:
        return sum(len(ps) for ps in self._by_target.values())

    def pair_stats(self, source: int, target: int) -> PairStats | None:
        return self._pair.get((source, target))

    def sources_for(self, target: int) -> list[int]:
        return sorted(s for (s, t) in self._pair if t == target)

    def save(self, file: str | Path, graph: LinkGraph) -> None:
        """Serialize as normalized-path TSV; reload with :meth:`load`."""
        with open(file, "w", encoding="utf-8") as fh:
            fh.write("# finished<TAB>target<TAB>pages(;-separated)\n")
            for target in self.targets():
                for path in self.paths_for(target):
                    pages = ";".join(graph.title_of(p) for p in path.pages)
                    fh.write(f"{int(path.finished)}\t{graph.title_of(target)}\t{pages}\n")

    @classmethod
    def load(cls, file: str | Path, graph: LinkGraph) -> "TargetIndex":
        paths: list[NavigationPath] = []
        with open(file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise TraceFormatError(f"{file}:{lineno}: expected 3 fields")
                finished = parts[0] == "1"
                target = graph.id_of(parts[1])
                pages = tuple(graph.id_of(t) for t in parts[2].split(";"))
                paths.append(NavigationPath(pages[0], target, pages, finished=finished))
        return cls(paths)


def build_target_index(paths: Iterable[NavigationPath]) -> TargetIndex:
    return TargetIndex(paths)


@dataclass(frozen=True)
class DatasetStats:
    n_paths: int
    n_missions: int
    n_targets: int
    mean_paths_per_target: float
    median_paths_per_target: float
    n_targets_min_100: int
    n_targets_min_500: int


def dataset_stats(index: TargetIndex) -> DatasetStats:
    counts = [index.n_paths(t) for t in index.targets()]
    missions = {(p.start, p.target) for t in index.targets() for p in index.paths_for(t)}
    if not counts:
        return DatasetStats(0, 0, 0, 0.0, 0.0, 0, 0)
    return DatasetStats(
        n_paths=sum(counts),
        n_missions=len(missions),
        n_targets=len(counts),
        mean_paths_per_target=sum(counts) / len(counts),
        median_paths_per_target=float(statistics.median(counts)),
        n_targets_min_100=sum(1 for c in counts if c >= 100),
        n_targets_min_500=sum(1 for c in counts if c >= 500),
    )
