"""Synthetic corpora, link histories, and navigation traces with planted
missing links; the end-to-end oracle harness for desk-scale testing.

Articles live on a low-dimensional unit sphere; link probability increases
with angular closeness, which is the simplest geometry that makes greedy
navigation meaningful.  Texts are bags of target-title phrases, which is
all the mention machinery needs.  Generation is single-threaded per seed
so a fixed seed yields byte-identical files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleConfigError

log = logging.getLogger(__name__)

SNAPSHOT_TIME = 1_000_000
TRACE_TIME_BASE = 1_400_000_000

# Planted links stay present for 70% of the source's lifetime, comfortably
# above the default 30% link-rate threshold; noise links get 5%.
PLANTED_PRESENCE = (0.05, 0.75)
NOISE_PRESENCE = (0.93, 0.98)

N_RANDOM_LINKS = 2          # long-range links per article, for reachability
N_MENTION_EXTRAS = 12       # mentioned-but-unlinked related articles per article
MENTION_BAND_WIDTH = 36     # closeness ranks past the link cutoff to draw them from
PATHS_PER_TARGET = 120      # sizing for the simulated target pool


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_articles: int = 300
    latent_dim: int = 8
    link_density: float = 0.02
    removal_fraction: float = 0.05
    greediness_noise: float = 0.1   # probability of a uniform random click
    n_paths: int = 5000
    max_path_length: int = 20

    def __post_init__(self):
        if self.n_articles < 10:
            raise InfeasibleConfigError("need at least 10 articles")
        for name in ("link_density", "removal_fraction", "greediness_noise"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InfeasibleConfigError(f"{name} must be in [0, 1], got {value}")
        if self.latent_dim < 1 or self.n_paths < 0 or self.max_path_length < 2:
            raise InfeasibleConfigError("invalid latent_dim / n_paths / max_path_length")


@dataclass(frozen=True)
class PlantedLink:
    source: int
    target: int
    begin: int
    end: int


@dataclass(frozen=True)
class PlantedTruth:
    links: tuple[PlantedLink, ...]

    def pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset((pl.source, pl.target) for pl in self.links)


@dataclass
class SyntheticWorld:
    config: SynthConfig
    out_dir: Path
    titles: tuple[str, ...]
    relatedness: np.ndarray          # (n, n) cosine similarities
    outlinks: tuple[tuple[int, ...], ...]
    planted: PlantedTruth
    snapshot_time: int = SNAPSHOT_TIME

    @property
    def files(self) -> dict[str, Path]:
        d = self.out_dir
        return {
            "titles": d / "titles.txt",
            "links": d / "links.tsv",
            "texts": d / "texts",
            "anchors": d / "anchors.tsv",
            "history": d / "history.tsv",
            "creation": d / "creation.tsv",
            "planted": d / "planted.csv",
            "paths_finished": d / "paths_finished.tsv",
            "paths_unfinished": d / "paths_unfinished.tsv",
        }


def _title(i: int) -> str:
    return f"Topic{i:05d}"


def generate_world(config: SynthConfig, out_dir: str | Path) -> SyntheticWorld:
    """Emit snapshot, texts, anchor statistics, and link history with a
    fraction of high-relatedness links removed from the snapshot but
    present in the history (the recoverable positives)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "texts").mkdir(exist_ok=True)
    n = config.n_articles
    rng = np.random.default_rng([config.seed, 0])

    positions = rng.standard_normal((n, config.latent_dim))
    positions /= np.linalg.norm(positions, axis=1, keepdims=True)
    relatedness = positions @ positions.T

    n_related = max(2, round(config.link_density * (n - 1)))
    ranked_by_closeness = []
    outlinks: list[set[int]] = []
    for s in range(n):
        order = np.argsort(-relatedness[s])
        order = order[order != s]
        ranked_by_closeness.append(order)
        links = set(order[:n_related].tolist())
        for v in rng.integers(0, n, size=4 * N_RANDOM_LINKS):
            if len(links) >= n_related + N_RANDOM_LINKS:
                break
            if v != s:
                links.add(int(v))
        outlinks.append(links)

    inlink_count = [0] * n
    for s in range(n):
        for t in outlinks[s]:
            inlink_count[t] += 1

    edges = [(s, t) for s in range(n) for t in sorted(outlinks[s])]
    n_planted_wanted = round(config.removal_fraction * len(edges))
    if config.removal_fraction > 0 and config.link_density * n * n < n_planted_wanted:
        raise InfeasibleConfigError("link density too low for the requested removals")

    creation = rng.integers(0, SNAPSHOT_TIME // 10, size=n)

    by_relatedness = sorted(edges, key=lambda e: (-relatedness[e[0], e[1]], e))
    planted: list[PlantedLink] = []
    for s, t in by_relatedness:
        if len(planted) >= n_planted_wanted:
            break
        if inlink_count[t] < 2 or len(outlinks[s]) < 2:
            continue
        outlinks[s].remove(t)
        inlink_count[t] -= 1
        lifetime = SNAPSHOT_TIME - int(creation[s])
        planted.append(PlantedLink(
            source=s, target=t,
            begin=int(creation[s]) + round(PLANTED_PRESENCE[0] * lifetime),
            end=int(creation[s]) + round(PLANTED_PRESENCE[1] * lifetime),
        ))
    if len(planted) < n_planted_wanted:
        raise InfeasibleConfigError(
            f"only {len(planted)} of {n_planted_wanted} requested removals are "
            "possible without disconnecting articles")
    planted.sort(key=lambda pl: (pl.source, pl.target))

    planted_by_source: dict[int, list[int]] = {}
    for pl in planted:
        planted_by_source.setdefault(pl.source, []).append(pl.target)

    # Mentions: current outlinks, removed outlinks, and a sample of related
    # articles from the closeness band past the link cutoff (talked about,
    # not linked, and mostly off the navigation corridors).
    mentioned: list[list[int]] = []
    for s in range(n):
        band = [int(v) for v in ranked_by_closeness[s][:n_related + MENTION_BAND_WIDTH]
                if int(v) not in outlinks[s] and int(v) not in planted_by_source.get(s, ())]
        if len(band) > N_MENTION_EXTRAS:
            picks = rng.choice(len(band), size=N_MENTION_EXTRAS, replace=False)
            extras = [band[i] for i in sorted(picks)]
        else:
            extras = band
        mentioned.append(sorted(set(outlinks[s]) | set(planted_by_source.get(s, ()))
                                | set(extras)))

    titles = tuple(_title(i) for i in range(n))
    world = SyntheticWorld(
        config=config, out_dir=out_dir, titles=titles, relatedness=relatedness,
        outlinks=tuple(tuple(sorted(o)) for o in outlinks),
        planted=PlantedTruth(tuple(planted)),
    )
    files = world.files

    files["titles"].write_text("".join(f"{t}\n" for t in titles), encoding="utf-8")

    with open(files["links"], "w", encoding="utf-8") as fh:
        fh.write("# source<TAB>target\n")
        for s in range(n):
            for t in world.outlinks[s]:
                fh.write(f"{titles[s]}\t{titles[t]}\n")

    for s in range(n):
        text = " ".join(titles[v] for v in mentioned[s])
        (files["texts"] / f"{titles[s]}.txt").write_text(text + "\n", encoding="utf-8")

    with open(files["anchors"], "w", encoding="utf-8") as fh:
        fh.write("# source<TAB>phrase<TAB>target<TAB>count\n")
        for s in range(n):
            for t in world.outlinks[s]:
                fh.write(f"{titles[s]}\t{titles[t]}\t{titles[t]}\t1\n")

    with open(files["creation"], "w", encoding="utf-8") as fh:
        for i in range(n):
            fh.write(f"{titles[i]}\t{int(creation[i])}\n")

    noise_pairs = _noise_pairs(mentioned, world, len(planted) // 2, rng)
    with open(files["history"], "w", encoding="utf-8") as fh:
        fh.write("# source<TAB>target<TAB>begin<TAB>end(empty=open)\n")
        for s in range(n):
            for t in world.outlinks[s]:
                fh.write(f"{titles[s]}\t{titles[t]}\t{int(creation[s])}\t\n")
        for pl in world.planted.links:
            fh.write(f"{titles[pl.source]}\t{titles[pl.target]}\t{pl.begin}\t{pl.end}\n")
        for s, t in noise_pairs:
            lifetime = SNAPSHOT_TIME - int(creation[s])
            begin = int(creation[s]) + round(NOISE_PRESENCE[0] * lifetime)
            end = int(creation[s]) + round(NOISE_PRESENCE[1] * lifetime)
            fh.write(f"{titles[s]}\t{titles[t]}\t{begin}\t{end}\n")

    with open(files["planted"], "w", encoding="utf-8") as fh:
        fh.write("source,target,begin,end\n")
        for pl in world.planted.links:
            fh.write(f"{titles[pl.source]},{titles[pl.target]},{pl.begin},{pl.end}\n")

    return world


def _noise_pairs(mentioned: list[list[int]], world: SyntheticWorld, n_noise: int,
                 rng: np.random.Generator) -> list[tuple[int, int]]:
    """Short-lived historical links over mentioned-but-unlinked pairs."""
    planted_pairs = world.planted.pairs()
    eligible = []
    linked = [set(o) for o in world.outlinks]
    for s, targets in enumerate(mentioned):
        for t in targets:
            if t not in linked[s] and (s, t) not in planted_pairs:
                eligible.append((s, t))
    if not eligible or n_noise <= 0:
        return []
    picks = rng.choice(len(eligible), size=min(n_noise, len(eligible)), replace=False)
    return sorted(eligible[i] for i in picks)


@dataclass(frozen=True)
class PathSimStats:
    n_finished: int
    n_unfinished: int
    n_skipped: int


def simulate_paths(world: SyntheticWorld, config: SynthConfig | None = None) -> PathSimStats:
    """Simulate navigation games over the snapshot graph.

    Each path has a uniformly random start and a fixed target drawn from a
    pool of planted-link targets.  At every step the navigator takes the
    outlink closest to the target in latent space (preferring unvisited
    pages) with probability 1 - noise, otherwise a uniform random outlink;
    a path that hits the length cap is emitted as unfinished.
    """
    config = config or world.config
    rng = np.random.default_rng([config.seed, 1])
    n = config.n_articles
    titles = world.titles
    outlinks = world.outlinks

    planted_in: dict[int, int] = {}
    for pl in world.planted.links:
        planted_in[pl.target] = planted_in.get(pl.target, 0) + 1
    pool = sorted(planted_in, key=lambda t: (-planted_in[t], t))
    if not pool:
        pool = list(range(min(n, 10)))
    n_pool = max(1, min(len(pool), config.n_paths // PATHS_PER_TARGET or 1))
    pool = pool[:n_pool]

    files = world.files
    n_finished = n_unfinished = n_skipped = 0
    with open(files["paths_finished"], "w", encoding="utf-8") as fin, \
            open(files["paths_unfinished"], "w", encoding="utf-8") as fun:
        fin.write("# session\ttimestamp\tduration\tpath\trating\n")
        fun.write("# session\ttimestamp\tduration\tpath\ttarget\ttype\n")
        for i in range(config.n_paths):
            target = pool[i % len(pool)]
            start = -1
            for _ in range(10):
                candidate = int(rng.integers(0, n))
                if candidate != target and outlinks[candidate]:
                    start = candidate
                    break
            if start < 0:
                log.warning("no usable start page for target %s; path skipped",
                            titles[target])
                n_skipped += 1
                continue
            pages = _walk(start, target, world, config, rng)
            path_str = ";".join(titles[p] for p in pages)
            session = f"s{i:06d}"
            timestamp = TRACE_TIME_BASE + i
            duration = 15 * (len(pages) - 1)
            if pages[-1] == target:
                fin.write(f"{session}\t{timestamp}\t{duration}\t{path_str}\tNULL\n")
                n_finished += 1
            else:
                fun.write(f"{session}\t{timestamp}\t{duration}\t{path_str}\t"
                          f"{titles[target]}\ttimeout\n")
                n_unfinished += 1
    return PathSimStats(n_finished, n_unfinished, n_skipped)


def _walk(start: int, target: int, world: SyntheticWorld, config: SynthConfig,
          rng: np.random.Generator) -> list[int]:
    relatedness = world.relatedness
    outlinks = world.outlinks
    pages = [start]
    visited = {start}
    current = start
    for _ in range(config.max_path_length):
        outs = outlinks[current]
        if not outs:
            break
        if rng.random() < config.greediness_noise:
            nxt = outs[int(rng.integers(0, len(outs)))]
        elif target in outs:
            nxt = target
        else:
            fresh = [v for v in outs if v not in visited]
            candidates = fresh if fresh else list(outs)
            scores = relatedness[candidates, target]
            nxt = candidates[int(np.argmax(scores))]
        pages.append(nxt)
        visited.add(nxt)
        current = nxt
        if nxt == target:
            break
    return pages
