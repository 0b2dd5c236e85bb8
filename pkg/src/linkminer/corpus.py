"""Reference-snapshot ingestion: link graph, article texts, anchor statistics.

Everything built here is immutable afterwards and safe for concurrent reads.

File formats:
  * links file: UTF-8, one ``source_title<TAB>target_title`` per line,
    lines starting with ``#`` skipped;
  * titles file: one normalized title per line, line number - 1 = article id;
  * anchor occurrences file:
    ``source_title<TAB>phrase<TAB>target_title<TAB>count``;
  * texts: directory of plain-text files named ``<normalized_title>.txt``.
"""

from __future__ import annotations

import hashlib
import logging
import re
import urllib.parse
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import scipy.sparse as sp

from .errors import CorpusFormatError, UnknownArticleError

log = logging.getLogger(__name__)

# Anchor-set membership floors: a phrase must be used as a link anchor at
# least 6.5% of the times it occurs in text, and must point at the given
# target in at least 1% of its anchored uses.  Both boundaries are
# inclusive keep-conditions.
LINK_PROBABILITY_FLOOR = Fraction(13, 200)
TARGET_SHARE_FLOOR = Fraction(1, 100)

_SEPARATOR_RUN = re.compile(r"[\s_]+")
_TOKEN = re.compile(r"[0-9A-Za-z]+")


def normalize_title(raw: str) -> str:
    """Canonical title form used to join link, trace, and text files.

    Percent-decodes to a fixed point (so the function is idempotent),
    collapses whitespace/underscore runs to a single underscore, trims,
    and uppercases the first character.
    """
    s = raw
    while True:
        decoded = urllib.parse.unquote(s)
        if decoded == s:
            break
        s = decoded
    s = _SEPARATOR_RUN.sub("_", s).strip("_")
    return s[:1].upper() + s[1:]


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercased alphanumeric tokens; everything else is a boundary."""
    return tuple(m.group(0).lower() for m in _TOKEN.finditer(text))


class LinkGraph:
    """Immutable directed page graph of the reference snapshot.

    Article ids are dense integers 0..n-1 in bijection with normalized
    titles.  No self-edges, no duplicate edges; the inlink and outlink
    views are consistent by construction.
    """

    def __init__(self, titles: Sequence[str], edges: Iterable[tuple[int, int]],
                 snapshot_time: int):
        self._titles = tuple(titles)
        self._ids: dict[str, int] = {}
        for i, title in enumerate(self._titles):
            if not title:
                raise CorpusFormatError(f"empty title at id {i}")
            if title in self._ids:
                raise CorpusFormatError(f"duplicate title after normalization: {title!r}")
            self._ids[title] = i
        n = len(self._titles)
        out: list[set[int]] = [set() for _ in range(n)]
        inn: list[set[int]] = [set() for _ in range(n)]
        for s, t in edges:
            if not (0 <= s < n and 0 <= t < n):
                raise CorpusFormatError(f"edge endpoint out of range: ({s}, {t})")
            if s == t:
                continue
            out[s].add(t)
            inn[t].add(s)
        self._out = tuple(frozenset(x) for x in out)
        self._in = tuple(frozenset(x) for x in inn)
        self._n_edges = sum(len(x) for x in self._out)
        self.snapshot_time = snapshot_time
        self._adjacency: sp.csr_matrix | None = None

    @property
    def n_articles(self) -> int:
        return len(self._titles)

    @property
    def n_edges(self) -> int:
        return self._n_edges

    def title_of(self, article: int) -> str:
        self._check(article)
        return self._titles[article]

    def id_of(self, title: str) -> int:
        """Resolve a raw or normalized title to its article id."""
        norm = normalize_title(title)
        try:
            return self._ids[norm]
        except KeyError:
            raise UnknownArticleError(f"unknown article title: {title!r}") from None

    def __contains__(self, title: str) -> bool:
        return normalize_title(title) in self._ids

    def has_edge(self, s: int, t: int) -> bool:
        self._check(s)
        self._check(t)
        return t in self._out[s]

    def outlinks(self, s: int) -> frozenset[int]:
        self._check(s)
        return self._out[s]

    def inlinks(self, t: int) -> frozenset[int]:
        self._check(t)
        return self._in[t]

    def edges(self) -> Iterator[tuple[int, int]]:
        for s in range(self.n_articles):
            for t in sorted(self._out[s]):
                yield (s, t)

    def adjacency(self) -> sp.csr_matrix:
        """Binary adjacency matrix, rows = sources, cols = targets."""
        if self._adjacency is None:
            n = self.n_articles
            rows, cols = [], []
            for s, t in self.edges():
                rows.append(s)
                cols.append(t)
            data = [1.0] * len(rows)
            self._adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._adjacency

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n_articles};{self.snapshot_time};".encode())
        for s, t in self.edges():
            h.update(f"{s},{t};".encode())
        return h.hexdigest()

    def _check(self, article: int) -> None:
        if not (0 <= article < len(self._titles)):
            raise UnknownArticleError(f"unknown article id: {article}")


def build_link_graph(links_file: str | Path, titles_file: str | Path,
                     snapshot_time: int) -> LinkGraph:
    """Read the snapshot link graph, deduplicating edges and dropping self-loops.

    Unresolvable edge endpoints and duplicate titles are hard errors
    (reported with their line number); the inputs are expected to be the
    product of a dump-extraction step.
    """
    titles: list[str] = []
    for line in Path(titles_file).read_text(encoding="utf-8").splitlines():
        titles.append(normalize_title(line))
    ids: dict[str, int] = {}
    for i, title in enumerate(titles):
        if title in ids:
            raise CorpusFormatError(
                f"{titles_file}:{i + 1}: duplicate title after normalization: {title!r}")
        if not title:
            raise CorpusFormatError(f"{titles_file}:{i + 1}: empty title")
        ids[title] = i

    edges: set[tuple[int, int]] = set()
    with open(links_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise CorpusFormatError(f"{links_file}:{lineno}: expected two tab-separated titles")
            src, dst = normalize_title(parts[0]), normalize_title(parts[1])
            try:
                edges.add((ids[src], ids[dst]))
            except KeyError as exc:
                raise CorpusFormatError(
                    f"{links_file}:{lineno}: unresolvable title {exc.args[0]!r}") from None
    return LinkGraph(titles, edges, snapshot_time)


class TextIndex:
    """Tokenized article texts with per-article token position maps."""

    def __init__(self, tokens_by_article: Sequence[tuple[str, ...]]):
        self._tokens = tuple(tokens_by_article)
        positions: list[dict[str, list[int]]] = []
        for toks in self._tokens:
            pos: dict[str, list[int]] = {}
            for i, tok in enumerate(toks):
                pos.setdefault(tok, []).append(i)
            positions.append(pos)
        self._positions = tuple(positions)

    @classmethod
    def from_dir(cls, texts_dir: str | Path, graph: LinkGraph) -> "TextIndex":
        """Load ``<normalized_title>.txt`` files; missing files mean empty text."""
        texts_dir = Path(texts_dir)
        tokens: list[tuple[str, ...]] = []
        for i in range(graph.n_articles):
            path = texts_dir / f"{graph.title_of(i)}.txt"
            if path.exists():
                tokens.append(tokenize(path.read_text(encoding="utf-8")))
            else:
                tokens.append(())
        return cls(tokens)

    @property
    def n_articles(self) -> int:
        return len(self._tokens)

    def tokens(self, article: int) -> tuple[str, ...]:
        return self._tokens[article]

    def contains(self, article: int, phrase: tuple[str, ...]) -> bool:
        return self._first_match(article, phrase, 0) >= 0

    def count_occurrences(self, article: int, phrase: tuple[str, ...]) -> int:
        """Non-overlapping occurrences of the phrase token sequence."""
        count = 0
        start = 0
        while True:
            hit = self._first_match(article, phrase, start)
            if hit < 0:
                return count
            count += 1
            start = hit + len(phrase)

    def _first_match(self, article: int, phrase: tuple[str, ...], start: int) -> int:
        if not phrase:
            return -1
        toks = self._tokens[article]
        for i in self._positions[article].get(phrase[0], ()):
            if i < start:
                continue
            if toks[i:i + len(phrase)] == phrase:
                return i
        return -1


@dataclass(frozen=True)
class PhraseStats:
    """Aggregate statistics for one anchor phrase (keyed by token form)."""

    display: str
    anchor_count: int
    occurrence_count: int
    per_target: Mapping[int, int]

    @property
    def link_probability(self) -> Fraction:
        if self.occurrence_count == 0:
            return Fraction(1) if self.anchor_count > 0 else Fraction(0)
        return Fraction(min(self.anchor_count, self.occurrence_count), self.occurrence_count)

    def target_share(self, target: int) -> Fraction:
        if self.anchor_count == 0:
            return Fraction(0)
        return Fraction(self.per_target.get(target, 0), self.anchor_count)


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(Decimal(str(x)))
    return Fraction(x)


class AnchorDictionary:
    """Phrase -> target anchor statistics defining the mention relation.

    A phrase belongs to a target's anchor set iff its overall link
    probability and its share of anchored uses pointing at that target
    both clear the configured floors.  Phrases failing either floor stay
    in the raw statistics but are excluded from every anchor set.
    """

    def __init__(self, stats: Mapping[tuple[str, ...], PhraseStats],
                 link_probability_floor=LINK_PROBABILITY_FLOOR,
                 target_share_floor=TARGET_SHARE_FLOOR):
        self._stats = dict(stats)
        self.link_probability_floor = _to_fraction(link_probability_floor)
        self.target_share_floor = _to_fraction(target_share_floor)
        anchor_sets: dict[int, set[tuple[str, ...]]] = {}
        for key, ps in self._stats.items():
            if ps.link_probability < self.link_probability_floor:
                continue
            for target in ps.per_target:
                if ps.target_share(target) >= self.target_share_floor:
                    anchor_sets.setdefault(target, set()).add(key)
        self._anchor_sets = {t: frozenset(s) for t, s in anchor_sets.items()}

    def phrase_stats(self, phrase: str) -> PhraseStats | None:
        return self._stats.get(tokenize(phrase))

    def phrases(self) -> Iterator[tuple[tuple[str, ...], PhraseStats]]:
        return iter(self._stats.items())

    def anchor_set(self, target: int) -> frozenset[tuple[str, ...]]:
        """All phrase keys admissible as link anchors for the target."""
        return self._anchor_sets.get(target, frozenset())

    def is_anchor_phrase(self, phrase: str, target: int) -> bool:
        return tokenize(phrase) in self.anchor_set(target)

    def targets_with_anchors(self) -> Iterable[int]:
        return self._anchor_sets.keys()


def build_anchor_dictionary(anchor_occurrences: str | Path,
                            texts: str | Path | TextIndex,
                            graph: LinkGraph,
                            link_probability_floor=LINK_PROBABILITY_FLOOR,
                            target_share_floor=TARGET_SHARE_FLOOR) -> AnchorDictionary:
    """Aggregate the anchor occurrences file against the article texts.

    Text occurrence counting is boundary-respecting and non-overlapping
    and includes occurrences inside existing anchors.  A phrase with
    anchored uses but zero text occurrences gets its link probability
    clamped to 1 with a warning (data inconsistency).

    Anchor lines whose target title is not in the corpus contribute to the
    phrase totals but carry no per-target share.
    """
    text_index = texts if isinstance(texts, TextIndex) else TextIndex.from_dir(texts, graph)

    display: dict[tuple[str, ...], str] = {}
    anchor_counts: dict[tuple[str, ...], int] = {}
    per_target: dict[tuple[str, ...], dict[int, int]] = {}
    with open(anchor_occurrences, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 4:
                raise CorpusFormatError(
                    f"{anchor_occurrences}:{lineno}: expected 4 tab-separated fields")
            _, phrase, target_title, count_s = parts[0], parts[1], parts[2], parts[3]
            try:
                count = int(count_s)
            except ValueError:
                raise CorpusFormatError(
                    f"{anchor_occurrences}:{lineno}: bad count {count_s!r}") from None
            key = tokenize(phrase)
            if not key:
                continue
            display.setdefault(key, phrase)
            anchor_counts[key] = anchor_counts.get(key, 0) + count
            norm = normalize_title(target_title)
            if norm in graph:
                tid = graph.id_of(norm)
                shares = per_target.setdefault(key, {})
                shares[tid] = shares.get(tid, 0) + count

    stats: dict[tuple[str, ...], PhraseStats] = {}
    for key, anchors in anchor_counts.items():
        occurrences = sum(text_index.count_occurrences(a, key)
                          for a in range(text_index.n_articles))
        if occurrences == 0 and anchors > 0:
            log.warning("phrase %r anchored %d times but never found in texts; "
                        "clamping link probability to 1", display[key], anchors)
        stats[key] = PhraseStats(
            display=display[key],
            anchor_count=anchors,
            occurrence_count=occurrences,
            per_target=dict(per_target.get(key, {})),
        )
    return AnchorDictionary(stats, link_probability_floor, target_share_floor)


class MentionIndex:
    """Queryable mention relation: does the text of s contain an anchor phrase of t?"""

    def __init__(self, graph: LinkGraph, dictionary: AnchorDictionary,
                 text_index: TextIndex):
        if text_index.n_articles != graph.n_articles:
            raise CorpusFormatError("text index does not cover the corpus")
        self._graph = graph
        self.dictionary = dictionary

        by_first_token: dict[str, list[tuple[str, ...]]] = {}
        for key, _ in dictionary.phrases():
            by_first_token.setdefault(key[0], []).append(key)

        phrases_in: list[frozenset[tuple[str, ...]]] = []
        for a in range(graph.n_articles):
            present: set[tuple[str, ...]] = set()
            for tok in set(text_index.tokens(a)):
                for key in by_first_token.get(tok, ()):
                    if key in present:
                        continue
                    if text_index.contains(a, key):
                        present.add(key)
            phrases_in.append(frozenset(present))
        self._phrases_in = tuple(phrases_in)

        sources: dict[int, set[int]] = {}
        targets_of_phrase: dict[tuple[str, ...], list[int]] = {}
        for t in dictionary.targets_with_anchors():
            for key in dictionary.anchor_set(t):
                targets_of_phrase.setdefault(key, []).append(t)
        for a in range(graph.n_articles):
            for key in self._phrases_in[a]:
                for t in targets_of_phrase.get(key, ()):
                    sources.setdefault(t, set()).add(a)
        self._mentioning = {t: frozenset(s) for t, s in sources.items()}

    def mentions(self, s: int, t: int) -> bool:
        self._graph._check(s)
        self._graph._check(t)
        return not self.dictionary.anchor_set(t).isdisjoint(self._phrases_in[s])

    def mentioning_sources(self, t: int) -> frozenset[int]:
        self._graph._check(t)
        return self._mentioning.get(t, frozenset())

    def phrases_in(self, article: int) -> frozenset[tuple[str, ...]]:
        self._graph._check(article)
        return self._phrases_in[article]


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
