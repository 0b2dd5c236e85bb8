"""Automatic (weak) labels from link edit history, the stricter
static-snapshot labels, and optional human rater labels.

History is keyed by normalized title pairs and immutable after load; all
label queries are pure.

File formats (timestamps are integer seconds since epoch):
  * history file: ``source<TAB>target<TAB>begin_ts<TAB>end_ts``, an empty
    end_ts meaning the link is still present;
  * creation file: ``title<TAB>creation_ts``;
  * human labels CSV: ``source,target,n_positive_raters,n_raters``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

from .corpus import normalize_title
from .errors import CorpusFormatError, GroundTruthError

log = logging.getLogger(__name__)

Interval = tuple[int, int | None]  # [begin, end); None = still present

DEFAULT_ALPHA = 0.30


def merge_intervals(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    """Union of half-open intervals: disjoint, sorted, order-independent."""
    norm = []
    for begin, end in intervals:
        if end is not None and end <= begin:
            continue
        norm.append((begin, end))
    norm.sort(key=lambda iv: (iv[0], iv[1] is not None, iv[1] if iv[1] is not None else 0))
    merged: list[list] = []
    for begin, end in norm:
        if merged and (merged[-1][1] is None or begin <= merged[-1][1]):
            if merged[-1][1] is not None:
                if end is None:
                    merged[-1][1] = None
                else:
                    merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([begin, end])
    return tuple((b, e) for b, e in merged)


def _clipped_length(intervals: Sequence[Interval], lo: int, hi: int) -> int:
    total = 0
    for begin, end in intervals:
        e = hi if end is None else min(end, hi)
        b = max(begin, lo)
        if e > b:
            total += e - b
    return total


@dataclass(frozen=True)
class LabelConfig:
    """Labeling parameters; strict mode additionally needs the static
    snapshot time, which must precede the reference time."""

    reference_time: int
    alpha: float = DEFAULT_ALPHA
    mode: Literal["standard", "strict"] = "standard"
    static_snapshot_time: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise GroundTruthError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.mode == "strict":
            if self.static_snapshot_time is None:
                raise GroundTruthError("strict mode requires static_snapshot_time")
            if not self.static_snapshot_time < self.reference_time:
                raise GroundTruthError("static snapshot must precede the reference time")


class LinkHistory:
    """Presence intervals per (source, target) plus article creation times."""

    def __init__(self, intervals: Mapping[tuple[str, str], Iterable[Interval]],
                 creation: Mapping[str, int]):
        self._creation = {normalize_title(k): v for k, v in creation.items()}
        self._intervals: dict[tuple[str, str], tuple[Interval, ...]] = {}
        n_clipped = 0
        for (src, dst), ivs in intervals.items():
            key = (normalize_title(src), normalize_title(dst))
            merged = merge_intervals(ivs)
            created = self._creation.get(key[0])
            if created is not None:
                clipped = []
                for begin, end in merged:
                    if begin < created:
                        n_clipped += 1
                        begin = created
                    if end is None or end > begin:
                        clipped.append((begin, end))
                merged = tuple(clipped)
            self._intervals[key] = merged
        if n_clipped:
            log.warning("%d presence intervals began before their source's creation; clipped",
                        n_clipped)

    @classmethod
    def load(cls, history_file: str | Path, creation_file: str | Path) -> "LinkHistory":
        creation: dict[str, int] = {}
        with open(creation_file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise CorpusFormatError(f"{creation_file}:{lineno}: expected 2 fields")
                creation[normalize_title(parts[0])] = int(parts[1])
        raw: dict[tuple[str, str], list[Interval]] = {}
        with open(history_file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise CorpusFormatError(f"{history_file}:{lineno}: expected 4 fields")
                begin = int(parts[2])
                end = None if parts[3] == "" else int(parts[3])
                key = (normalize_title(parts[0]), normalize_title(parts[1]))
                raw.setdefault(key, []).append((begin, end))
        return cls(raw, creation)

    def creation_time(self, title: str) -> int:
        try:
            return self._creation[normalize_title(title)]
        except KeyError:
            raise GroundTruthError(f"no creation time for article {title!r}") from None

    def intervals(self, source: str, target: str) -> tuple[Interval, ...]:
        return self._intervals.get(
            (normalize_title(source), normalize_title(target)), ())

    def pairs(self) -> Iterable[tuple[str, str]]:
        return self._intervals.keys()


def link_rate(source: str, target: str, history: LinkHistory,
              reference_time: int) -> float:
    """Fraction of the source's lifetime up to the reference time during
    which the link was present; unknown pairs score 0."""
    created = history.creation_time(source)
    if created >= reference_time:
        raise GroundTruthError(
            f"article {source!r} created at or after the reference time")
    present = _clipped_length(history.intervals(source, target), created, reference_time)
    return present / (reference_time - created)


def label_candidate(source: str, target: str, history: LinkHistory,
                    config: LabelConfig) -> bool:
    """Standard weak label: positive iff the link rate strictly exceeds alpha."""
    return link_rate(source, target, history, config.reference_time) > config.alpha


def strict_label_candidate(source: str, target: str, history: LinkHistory,
                           config: LabelConfig) -> bool:
    """Strict label over the post-snapshot window.

    Only pairs absent from the static snapshot qualify: a link whose
    presence covers the snapshot instant is an error.  Positive iff the
    presence fraction within [snapshot, reference) strictly exceeds alpha.
    """
    if config.mode != "strict" or config.static_snapshot_time is None:
        raise GroundTruthError("strict labeling requires a strict-mode config")
    snap = config.static_snapshot_time
    intervals = history.intervals(source, target)
    for begin, end in intervals:
        if begin <= snap and (end is None or end > snap):
            raise GroundTruthError(
                f"({source!r}, {target!r}) was present in the static snapshot and "
                "cannot be suggested under strict candidacy")
    present = _clipped_length(intervals, snap, config.reference_time)
    return present / (config.reference_time - snap) > config.alpha


@dataclass(frozen=True)
class HumanLabel:
    n_positive: int
    n_raters: int

    @property
    def positive(self) -> bool:
        """Positive iff over half of the raters said so (strict majority)."""
        return self.n_positive * 2 > self.n_raters

    @property
    def mean(self) -> float:
        return self.n_positive / self.n_raters if self.n_raters else 0.0


def load_human_labels(file: str | Path) -> dict[tuple[str, str], HumanLabel]:
    """Load rater counts; any malformed row is a hard error."""
    labels: dict[tuple[str, str], HumanLabel] = {}
    with open(file, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[:2] == ["source", "target"]:
                continue
            if len(row) != 4:
                raise CorpusFormatError(f"{file}:{lineno}: expected 4 columns")
            try:
                n_pos, n_raters = int(row[2]), int(row[3])
            except ValueError:
                raise CorpusFormatError(f"{file}:{lineno}: non-integer rater count") from None
            if n_pos < 0 or n_raters <= 0 or n_pos > n_raters:
                raise CorpusFormatError(f"{file}:{lineno}: inconsistent rater counts")
            key = (normalize_title(row[0]), normalize_title(row[1]))
            labels[key] = HumanLabel(n_pos, n_raters)
    return labels
