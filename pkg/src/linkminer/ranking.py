"""Scoring and ordering of candidate sources per target.

Three methods: inlink-overlap relatedness (Milne-Witten style), the
residual of a rank-k adjacency reconstruction, and raw path frequency.
Scoring is pure and concurrently callable; a fixed seed gives bitwise
identical factorizations across runs on the same platform.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .corpus import LinkGraph
from .errors import ConvergenceError, RankingError, UnknownArticleError
from .miner import CandidateSet, SourceCandidate
from .traces import TargetIndex

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

RankMethod = Literal["mw", "svd", "freq"]


def milne_witten(s: int, t: int, graph: LinkGraph) -> float:
    """Inlink-overlap relatedness of two articles, clamped to [0, 1].

    One minus the normalized negative log probability of drawing a shared
    inlink from the larger of the two inlink sets.  Degenerate cases (an
    empty inlink set or no shared inlinks) score 0; the log base cancels,
    natural log is used.
    """
    inlinks_s = graph.inlinks(s)
    inlinks_t = graph.inlinks(t)
    if not inlinks_s or not inlinks_t:
        return 0.0
    shared = len(inlinks_s & inlinks_t)
    if shared == 0:
        return 0.0
    larger = max(len(inlinks_s), len(inlinks_t))
    smaller = min(len(inlinks_s), len(inlinks_t))
    numerator = math.log(larger) - math.log(shared)
    denominator = math.log(graph.n_articles) - math.log(smaller)
    if denominator <= 0.0:
        return 1.0 if numerator <= 0.0 else 0.0
    return min(1.0, max(0.0, 1.0 - numerator / denominator))


@dataclass(frozen=True)
class SvdModel:
    """Rank-k factorization of the binary adjacency matrix.

    Evaluation of a reconstructed entry is deterministic given
    (graph, k, seed, tolerance).
    """

    k: int
    seed: int
    tolerance: float
    u: np.ndarray           # (n, k)
    sigma: np.ndarray       # (k,), non-negative, non-increasing
    vt: np.ndarray          # (k, n)
    graph_checksum: str
    n_iterations: int

    def low_rank_entry(self, s: int, t: int) -> float:
        n = self.u.shape[0]
        if not (0 <= s < n and 0 <= t < self.vt.shape[1]):
            raise UnknownArticleError(f"id out of range for model: ({s}, {t})")
        return float((self.u[s] * self.sigma) @ self.vt[:, t])

    def low_rank_row(self, s: int) -> np.ndarray:
        if not (0 <= s < self.u.shape[0]):
            raise UnknownArticleError(f"id out of range for model: {s}")
        return (self.u[s] * self.sigma) @ self.vt


def truncated_svd(matrix, k: int, seed: int = 0, tolerance: float = 1e-9,
                  max_iterations: int = 2000, oversampling: int = 10
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Rank-k factors of a (sparse or dense) matrix via seeded randomized
    subspace iteration with oversampling.

    Power steps repeat until the rank-k projector stops moving (drift
    between sweeps at most ``tolerance``); raises ConvergenceError with the
    last residual when the iteration budget runs out.
    """
    n_rows, n_cols = matrix.shape
    if not (1 <= k <= min(n_rows, n_cols)):
        raise RankingError(f"rank k={k} out of range for a {n_rows}x{n_cols} matrix")
    if sp.issparse(matrix) and max(n_rows, n_cols) <= 2000:
        matrix = matrix.toarray()

    rng = np.random.default_rng(seed)
    p = min(k + oversampling, min(n_rows, n_cols))
    q_basis, _ = np.linalg.qr(matrix @ rng.standard_normal((n_cols, p)))
    top_k_basis = None
    sigma = vt = u_small = None
    drift = math.inf
    for iteration in range(1, max_iterations + 1):
        z, _ = np.linalg.qr(matrix.T @ q_basis)
        q_basis, _ = np.linalg.qr(matrix @ z)
        b = q_basis.T @ matrix
        u_small, sigma, vt = np.linalg.svd(b, full_matrices=False)
        new_top_k = q_basis @ u_small[:, :k]
        if top_k_basis is not None:
            overlap = top_k_basis.T @ new_top_k
            drift = math.sqrt(max(0.0, 2.0 * k - 2.0 * float(np.sum(overlap * overlap))))
            if drift <= tolerance * math.sqrt(k):
                top_k_basis = new_top_k
                break
        top_k_basis = new_top_k
    else:
        raise ConvergenceError(
            f"subspace iteration did not converge within {max_iterations} sweeps "
            f"(projector drift {drift:.3e})", residual=drift)
    return (np.ascontiguousarray(top_k_basis), np.ascontiguousarray(sigma[:k]),
            np.ascontiguousarray(vt[:k]), iteration)


def build_svd_model(graph: LinkGraph, k: int, seed: int = 0,
                    tolerance: float = 1e-9, max_iterations: int = 2000,
                    oversampling: int = 10) -> SvdModel:
    """Truncated SVD of the snapshot's binary adjacency matrix."""
    u, sigma, vt, n_iterations = truncated_svd(
        graph.adjacency(), k, seed=seed, tolerance=tolerance,
        max_iterations=max_iterations, oversampling=oversampling)
    return SvdModel(k=k, seed=seed, tolerance=tolerance, u=u, sigma=sigma, vt=vt,
                    graph_checksum=graph.checksum(), n_iterations=n_iterations)


def svd_score(s: int, t: int, model: SvdModel, graph: LinkGraph) -> float:
    """Rank-k reconstruction residual: reconstructed entry minus the actual
    0/1 adjacency entry."""
    return model.low_rank_entry(s, t) - (1.0 if graph.has_edge(s, t) else 0.0)


def save_svd_model(model: SvdModel, file: str | Path) -> None:
    header = json.dumps({
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "seed": model.seed,
        "tolerance": model.tolerance,
        "graph_checksum": model.graph_checksum,
        "n_iterations": model.n_iterations,
    }, sort_keys=True)
    with open(file, "wb") as fh:
        np.savez(fh, header=np.frombuffer(header.encode(), dtype=np.uint8),
                 u=model.u, sigma=model.sigma, vt=model.vt)


def load_svd_model(file: str | Path, graph: LinkGraph | None = None) -> SvdModel:
    with np.load(file) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format_version") != MODEL_FORMAT_VERSION:
            raise RankingError(f"unsupported model format in {file}")
        model = SvdModel(
            k=int(header["k"]), seed=int(header["seed"]),
            tolerance=float(header["tolerance"]),
            u=data["u"], sigma=data["sigma"], vt=data["vt"],
            graph_checksum=str(header["graph_checksum"]),
            n_iterations=int(header["n_iterations"]),
        )
    if graph is not None and model.graph_checksum != graph.checksum():
        raise RankingError("model was built on a different graph (checksum mismatch)")
    return model


def path_frequency(s: int, t: int, index: TargetIndex) -> Fraction:
    """Fraction of paths with target t that pass through s."""
    total = index.n_paths(t)
    if total == 0:
        raise RankingError(f"no paths for target {t}")
    stats = index.pair_stats(s, t)
    return Fraction(stats.n_paths_through if stats else 0, total)


@dataclass(frozen=True)
class RankedEntry:
    candidate: SourceCandidate
    score: float


@dataclass(frozen=True)
class RankedSuggestions:
    """Deterministically ordered suggestions: score descending, ties broken
    by path frequency descending, then source title ascending."""

    target: int
    method: RankMethod
    entries: tuple[RankedEntry, ...]

    def sources(self) -> tuple[int, ...]:
        return tuple(e.candidate.source for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def rank_candidates(candidate_set: CandidateSet, method: RankMethod, *,
                    graph: LinkGraph | None = None,
                    model: SvdModel | None = None) -> RankedSuggestions:
    if method == "freq" and not candidate_set.has_path_stats:
        raise RankingError("frequency ranking needs path statistics, "
                           "but the candidate set lacks them")
    if graph is None:
        raise RankingError("ranking needs the snapshot graph for titles and scores")

    def score(c: SourceCandidate) -> float:
        if method == "mw":
            return milne_witten(c.source, c.target, graph)
        if method == "svd":
            if model is None:
                raise RankingError("svd ranking needs a built model")
            return svd_score(c.source, c.target, model, graph)
        if method == "freq":
            return float(c.path_frequency)
        raise RankingError(f"unknown ranking method: {method!r}")

    scored = [RankedEntry(c, score(c)) for c in candidate_set.candidates]
    scored.sort(key=lambda e: (-e.score, -e.candidate.path_frequency,
                               graph.title_of(e.candidate.source)))
    return RankedSuggestions(candidate_set.target, method, tuple(scored))
