import math
import random
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from linkminer.corpus import LinkGraph
from linkminer.errors import RankingError, UnknownArticleError
from linkminer.miner import CandidateSet, SourceCandidate
from linkminer.ranking import (build_svd_model, load_svd_model, milne_witten,
                               path_frequency, rank_candidates, save_svd_model,
                               svd_score, truncated_svd)
from linkminer.traces import NavigationPath, build_target_index


def graph_from_edges(n, edges, snapshot_time=0):
    return LinkGraph([f"N{i}" for i in range(n)], edges, snapshot_time)


# ------------------------------------------------------------- relatedness

def test_milne_witten_identical_inlink_sets():
    # Both articles drawn from the same three inlinkers: relatedness 1.
    edges = [(0, 4), (1, 4), (2, 4), (0, 5), (1, 5), (2, 5)]
    graph = graph_from_edges(8, edges)
    assert milne_witten(4, 5, graph) == 1.0


def test_milne_witten_hand_computed():
    # N=100, |S|=10, |T|=8, intersection 4:
    # 1 - (ln 10 - ln 4) / (ln 100 - ln 8)
    edges = [(i, 98) for i in range(10, 20)]
    edges += [(i, 99) for i in range(16, 20)] + [(i, 99) for i in range(30, 34)]
    graph = graph_from_edges(100, edges)
    expected = 1 - (math.log(10) - math.log(4)) / (math.log(100) - math.log(8))
    assert milne_witten(98, 99, graph) == pytest.approx(expected, abs=1e-12)
    assert milne_witten(98, 99, graph) == pytest.approx(0.637, abs=1e-3)


def test_milne_witten_disjoint_inlinks():
    edges = [(0, 3), (1, 4)]
    graph = graph_from_edges(5, edges)
    assert milne_witten(3, 4, graph) == 0.0


def test_milne_witten_empty_inlinks():
    graph = graph_from_edges(4, [(0, 1)])
    assert milne_witten(1, 2, graph) == 0.0


def test_milne_witten_unknown_article():
    graph = graph_from_edges(3, [])
    with pytest.raises(UnknownArticleError):
        milne_witten(0, 7, graph)


def _brute_force_mw(s, t, edge_list, n):
    inl_s = {a for a, b in edge_list if b == s}
    inl_t = {a for a, b in edge_list if b == t}
    if not inl_s or not inl_t:
        return 0.0
    inter = len(inl_s & inl_t)
    if inter == 0:
        return 0.0
    num = math.log(max(len(inl_s), len(inl_t))) - math.log(inter)
    den = math.log(n) - math.log(min(len(inl_s), len(inl_t)))
    if den <= 0:
        return 1.0 if num <= 0 else 0.0
    return min(1.0, max(0.0, 1 - num / den))


def test_milne_witten_properties_random_graphs():
    rng = random.Random(1234)
    for _ in range(25):
        n = rng.randrange(4, 40)
        edges = sorted({(rng.randrange(n), rng.randrange(n)) for _ in range(3 * n)})
        edges = [(s, t) for s, t in edges if s != t]
        graph = graph_from_edges(n, edges)
        for _ in range(40):
            s, t = rng.randrange(n), rng.randrange(n)
            value = milne_witten(s, t, graph)
            assert value == pytest.approx(_brute_force_mw(s, t, edges, n), abs=1e-12)
            assert value == pytest.approx(milne_witten(t, s, graph), abs=1e-15)
            assert 0.0 <= value <= 1.0
        for s in range(n):
            if graph.inlinks(s) and len(graph.inlinks(s)) < n:
                assert milne_witten(s, s, graph) == 1.0


def test_milne_witten_monotone_in_intersection():
    # For fixed |S| and |T|, relatedness grows with the overlap.
    n = 60
    values = []
    for inter in (1, 2, 4, 8):
        edges = [(i, 58) for i in range(10, 20)]
        edges += [(i, 59) for i in range(20 - inter, 20)]
        edges += [(i, 59) for i in range(30, 40 - inter)]
        graph = graph_from_edges(n, edges)
        assert len(graph.inlinks(58)) == 10 and len(graph.inlinks(59)) == 10
        values.append(milne_witten(58, 59, graph))
    assert values == sorted(values)


# --------------------------------------------------------------------- svd

def test_svd_zero_matrix():
    graph = graph_from_edges(6, [])
    model = build_svd_model(graph, k=3)
    assert np.allclose(model.sigma, 0)
    for s in range(6):
        assert np.allclose(model.low_rank_row(s), 0)


def test_svd_full_rank_permutation():
    # 5-cycle permutation matrix at k=5 reconstructs exactly.
    edges = [(i, (i + 1) % 5) for i in range(5)]
    graph = graph_from_edges(5, edges)
    model = build_svd_model(graph, k=5)
    dense = graph.adjacency().toarray()
    reconstructed = (model.u * model.sigma) @ model.vt
    assert np.max(np.abs(reconstructed - dense)) < 1e-10


def test_svd_matches_dense_oracle_40x40():
    rng = np.random.default_rng(99)
    dense = (rng.random((40, 40)) < 0.15).astype(float)
    np.fill_diagonal(dense, 0)
    edges = [(int(s), int(t)) for s, t in zip(*np.nonzero(dense))]
    graph = graph_from_edges(40, edges)
    k = 5
    model = build_svd_model(graph, k=k, tolerance=1e-12, max_iterations=5000)
    approx = (model.u * model.sigma) @ model.vt
    err = np.linalg.norm(dense - approx)
    u, s, vt = np.linalg.svd(dense)
    optimal = np.linalg.norm(dense - (u[:, :k] * s[:k]) @ vt[:k])
    assert err <= optimal + 1e-6
    # singular values non-negative and non-increasing
    assert np.all(model.sigma >= 0)
    assert np.all(np.diff(model.sigma) <= 1e-12)


def test_svd_k_out_of_range():
    graph = graph_from_edges(4, [(0, 1)])
    with pytest.raises(RankingError):
        build_svd_model(graph, k=0)
    with pytest.raises(RankingError):
        build_svd_model(graph, k=5)


def test_svd_deterministic_given_seed():
    rng = np.random.default_rng(5)
    dense = (rng.random((20, 20)) < 0.2).astype(float)
    np.fill_diagonal(dense, 0)
    edges = [(int(s), int(t)) for s, t in zip(*np.nonzero(dense))]
    graph = graph_from_edges(20, edges)
    m1 = build_svd_model(graph, k=3, seed=17)
    m2 = build_svd_model(graph, k=3, seed=17)
    assert np.array_equal(m1.u, m2.u)
    assert np.array_equal(m1.sigma, m2.sigma)
    assert np.array_equal(m1.vt, m2.vt)


def test_svd_score_full_rank_is_zero():
    edges = [(i, (i + 1) % 5) for i in range(5)]
    graph = graph_from_edges(5, edges)
    model = build_svd_model(graph, k=5)
    for s in range(5):
        for t in range(5):
            assert svd_score(s, t, model, graph) == pytest.approx(0.0, abs=1e-10)


def test_svd_score_non_edge_equals_reconstruction():
    edges = [(0, 1), (1, 2), (2, 0), (0, 2)]
    graph = graph_from_edges(4, edges)
    model = build_svd_model(graph, k=2)
    assert not graph.has_edge(1, 0)
    assert svd_score(1, 0, model, graph) == pytest.approx(model.low_rank_entry(1, 0))
    assert svd_score(0, 1, model, graph) == pytest.approx(model.low_rank_entry(0, 1) - 1.0)


def test_truncated_svd_3x3_example_matches_dense_oracle():
    dense = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    u, sigma, vt, _ = truncated_svd(sp.csr_matrix(dense), k=1, tolerance=1e-13)
    approx = (u * sigma) @ vt
    du, ds, dvt = np.linalg.svd(dense)
    oracle = (du[:, :1] * ds[:1]) @ dvt[:1]
    assert approx[0, 2] == pytest.approx(oracle[0, 2], abs=1e-9)
    assert np.max(np.abs(approx - oracle)) < 1e-9


def test_model_persistence_round_trip(tmp_path):
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]
    graph = graph_from_edges(5, edges)
    model = build_svd_model(graph, k=2, seed=3)
    path = tmp_path / "model.npz"
    save_svd_model(model, path)
    loaded = load_svd_model(path, graph)
    assert loaded.k == model.k and loaded.seed == model.seed
    assert np.array_equal(loaded.u, model.u)
    assert np.array_equal(loaded.sigma, model.sigma)
    assert np.array_equal(loaded.vt, model.vt)
    other = graph_from_edges(5, edges[:-1])
    with pytest.raises(RankingError, match="checksum"):
        load_svd_model(path, other)


# ---------------------------------------------------------- path frequency

def test_path_frequency_examples():
    graph = make_graph(["S", "Infection", "Other", "Inflammation"], [])
    s, infection, other, t = (graph.id_of(x) for x in
                              ("S", "Infection", "Other", "Inflammation"))
    paths = [NavigationPath(s, t, (s, infection, t)) for _ in range(17)]
    paths += [NavigationPath(s, t, (s, other, t)) for _ in range(83)]
    index = build_target_index(paths)
    assert path_frequency(infection, t, index) == Fraction(17, 100)
    assert path_frequency(other, t, index) == Fraction(83, 100)
    assert path_frequency(s, t, index) == Fraction(0)  # start pages are exempt
    with pytest.raises(RankingError):
        path_frequency(infection, other, index)  # no paths for that target


def test_path_frequency_all_paths():
    graph = make_graph(["S", "Mid", "T"], [])
    s, mid, t = (graph.id_of(x) for x in ("S", "Mid", "T"))
    index = build_target_index([NavigationPath(s, t, (s, mid, t)) for _ in range(5)])
    assert path_frequency(mid, t, index) == Fraction(1)


# ----------------------------------------------------------------- ranking

def _candidate(graph, source, target, freq, mean_pos=Fraction(3, 4)):
    return SourceCandidate(source=source, target=target,
                           path_frequency=Fraction(freq) if not isinstance(freq, Fraction) else freq,
                           mean_rel_position=mean_pos,
                           penultimate_count=0, n_paths_through=1)


def test_rank_candidates_tie_break():
    graph = make_graph(["A", "B", "C", "T"], [])
    t = graph.id_of("T")
    cands = CandidateSet(t, (
        _candidate(graph, graph.id_of("A"), t, Fraction(1, 10)),
        _candidate(graph, graph.id_of("B"), t, Fraction(2, 10)),
        _candidate(graph, graph.id_of("C"), t, Fraction(3, 10)),
    ), n_paths_total=10)
    scores = {graph.id_of("A"): 0.9, graph.id_of("B"): 0.2, graph.id_of("C"): 0.9}

    import linkminer.ranking as ranking_mod
    original = ranking_mod.milne_witten
    ranking_mod.milne_witten = lambda s, t_, g: scores[s]
    try:
        ranked = rank_candidates(cands, "mw", graph=graph)
    finally:
        ranking_mod.milne_witten = original
    assert [graph.title_of(c) for c in ranked.sources()] == ["C", "A", "B"]


def test_rank_candidates_empty():
    graph = make_graph(["T"], [])
    ranked = rank_candidates(CandidateSet(0, (), 0), "mw", graph=graph)
    assert len(ranked) == 0


def test_rank_freq_requires_path_stats():
    graph = make_graph(["A", "T"], [])
    baseline_candidate = SourceCandidate(
        source=0, target=1, path_frequency=Fraction(0),
        mean_rel_position=None, penultimate_count=0, n_paths_through=0)
    cands = CandidateSet(1, (baseline_candidate,), 0)
    with pytest.raises(RankingError):
        rank_candidates(cands, "freq", graph=graph)


def test_rank_freq_matches_sort_oracle():
    rng = random.Random(21)
    titles = [f"P{i}" for i in range(12)] + ["T"]
    graph = make_graph(titles, [])
    t = graph.id_of("T")
    freqs = {i: Fraction(rng.randrange(1, 30), 30) for i in range(12)}
    cands = CandidateSet(t, tuple(
        _candidate(graph, i, t, freqs[i]) for i in range(12)), 30)
    ranked = rank_candidates(cands, "freq", graph=graph)
    expected = sorted(range(12),
                      key=lambda i: (-freqs[i], graph.title_of(i)))
    assert list(ranked.sources()) == expected


@given(st.lists(st.integers(min_value=-50, max_value=50), min_size=1, max_size=10,
                unique=True),
       st.integers(min_value=1, max_value=9),
       st.integers(min_value=-20, max_value=20))
@settings(max_examples=60, deadline=None)
def test_rank_order_invariant_under_affine_transform(scores, a, b):
    titles = [f"P{i}" for i in range(len(scores))] + ["T"]
    graph = make_graph(titles, [])
    t = graph.id_of("T")
    cands = CandidateSet(t, tuple(
        _candidate(graph, i, t, Fraction(1, 2)) for i in range(len(scores))), 2)

    import linkminer.ranking as ranking_mod
    original = ranking_mod.milne_witten

    def ranked_with(score_map):
        ranking_mod.milne_witten = lambda s, t_, g: float(score_map[s])
        try:
            return list(rank_candidates(cands, "mw", graph=graph).sources())
        finally:
            ranking_mod.milne_witten = original

    base = ranked_with({i: v for i, v in enumerate(scores)})
    transformed = ranked_with({i: a * v + b for i, v in enumerate(scores)})
    assert base == transformed
