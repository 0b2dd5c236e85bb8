import pytest

from linkminer.corpus import (AnchorDictionary, LinkGraph, MentionIndex, PhraseStats,
                              TextIndex, tokenize)


def make_graph(titles, edges, snapshot_time=1000):
    """Graph from title pairs, for hand-built fixtures."""
    ids = {t: i for i, t in enumerate(titles)}
    return LinkGraph(titles, [(ids[s], ids[t]) for s, t in edges], snapshot_time)


def make_dictionary(graph, phrase_stats):
    """AnchorDictionary from ``phrase -> (anchors, occurrences, {target: count})``.

    Counts are taken at face value so threshold cases can be pinned exactly.
    """
    stats = {}
    for phrase, (anchors, occurrences, per_target) in phrase_stats.items():
        stats[tokenize(phrase)] = PhraseStats(
            phrase, anchors, occurrences,
            {graph.id_of(t): c for t, c in per_target.items()})
    return AnchorDictionary(stats)


def make_text_index(graph, texts_by_title):
    tokens = [tokenize(texts_by_title.get(graph.title_of(i), ""))
              for i in range(graph.n_articles)]
    return TextIndex(tokens)


def make_mention_index(graph, texts_by_title, phrase_stats):
    return MentionIndex(graph, make_dictionary(graph, phrase_stats),
                        make_text_index(graph, texts_by_title))


@pytest.fixture
def tiny_graph():
    titles = ["Alpha", "Beta", "Gamma", "Delta"]
    edges = [("Alpha", "Beta"), ("Beta", "Gamma"), ("Gamma", "Alpha")]
    return make_graph(titles, edges)
