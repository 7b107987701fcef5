import numpy as np
import pytest

from rotapath.kg import KnowledgeGraph, add_inverse_relations
from rotapath.paths import PathFinder, RelationPath, enumerate_shortest_paths


def brute_force_shortest(kg, h, c, max_len):
    """Oracle: enumerate every walk from h up to max_len by recursion, keep
    the relation sequences of minimal length that end at c."""
    walks = []

    def rec(u, seq):
        if len(seq) >= 1 and u == c:
            walks.append(tuple(seq))
        if len(seq) >= max_len:
            return
        rels, nbrs = kg.out_edges(u)
        for r, v in zip(rels.tolist(), nbrs.tolist()):
            rec(v, seq + [r])

    if h != c:
        rec(h, [])
    if not walks:
        return set()
    shortest = min(len(w) for w in walks)
    return {w for w in walks if len(w) == shortest}


def random_kg(seed, n_nodes=10, n_rels=3, n_edges=18):
    rng = np.random.default_rng(seed)
    triples = set()
    while len(triples) < n_edges:
        h, t = rng.integers(n_nodes, size=2)
        if h != t:
            triples.add((int(h), int(rng.integers(n_rels)), int(t)))
    return KnowledgeGraph([f"n{i}" for i in range(n_nodes)],
                          [f"r{i}" for i in range(n_rels)], sorted(triples))


class TestEnumeration:
    def test_direct_edge_single_path(self):
        kg = KnowledgeGraph(["h", "c"], ["r"], [(0, 0, 1)])
        out = enumerate_shortest_paths(kg, 0, 1, 3, 32)
        assert [p.steps for p in out] == [(0,)]

    def test_parallel_edges_all_returned(self):
        kg = KnowledgeGraph(["h", "c"], ["r", "s"], [(0, 0, 1), (0, 1, 1)])
        out = enumerate_shortest_paths(kg, 0, 1, 3, 32)
        assert [p.steps for p in out] == [(0,), (1,)]

    def test_diamond_two_paths(self):
        # h->a->c and h->b->c with distinct relations; oracle cross-check
        kg = KnowledgeGraph(
            ["h", "a", "b", "c"], ["r1", "r2", "r3", "r4"],
            [(0, 0, 1), (1, 1, 3), (0, 2, 2), (2, 3, 3)],
        )
        got = {p.steps for p in enumerate_shortest_paths(kg, 0, 3, 3, 32)}
        assert got == brute_force_shortest(kg, 0, 3, 3) == {(0, 1), (2, 3)}

    def test_unreachable_empty(self):
        kg = KnowledgeGraph(["a", "b", "c"], ["r"], [(0, 0, 1)])
        assert enumerate_shortest_paths(kg, 0, 2, 3, 32) == []

    def test_self_pair_empty(self):
        kg = KnowledgeGraph(["a", "b"], ["r"], [(0, 0, 1), (1, 0, 0)])
        assert enumerate_shortest_paths(kg, 0, 0, 3, 32) == []

    def test_longer_than_cap_empty(self):
        kg = KnowledgeGraph(
            ["a", "b", "c", "d", "e"], ["r"],
            [(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4)],
        )
        assert enumerate_shortest_paths(kg, 0, 4, 3, 32) == []
        assert len(enumerate_shortest_paths(kg, 0, 4, 4, 32)) == 1

    def test_invalid_ids(self):
        kg = KnowledgeGraph(["a", "b"], ["r"], [(0, 0, 1)])
        with pytest.raises(ValueError):
            enumerate_shortest_paths(kg, 0, 9, 3, 32)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_brute_force_on_random_graphs(self, seed):
        kg = random_kg(seed, n_nodes=int(np.random.default_rng(seed).integers(5, 13)))
        rng = np.random.default_rng(seed + 1000)
        for _ in range(6):
            h, c = rng.integers(kg.n_entities, size=2)
            got = enumerate_shortest_paths(kg, int(h), int(c), 3, 10_000)
            want = brute_force_shortest(kg, int(h), int(c), 3)
            assert {p.steps for p in got} == want
            lengths = {len(p) for p in got}
            assert len(lengths) <= 1  # all shortest, equal length

    def test_lexicographic_order_and_cap(self):
        # same first relation through different nodes; smaller second
        # relation goes through the later-explored node
        kg = KnowledgeGraph(
            ["h", "a", "b", "c"], ["r0", "r1", "r2"],
            [(0, 0, 1), (0, 0, 2), (1, 2, 3), (2, 1, 3)],
        )
        out = [p.steps for p in enumerate_shortest_paths(kg, 0, 3, 3, 32)]
        assert out == [(0, 1), (0, 2)]
        capped = [p.steps for p in enumerate_shortest_paths(kg, 0, 3, 3, 1)]
        assert capped == [(0, 1)]

    def test_augmented_graph_reaches_upstream(self):
        base = KnowledgeGraph(["child", "parent"], ["parent_of"], [(1, 0, 0)])
        aug = add_inverse_relations(base)
        out = enumerate_shortest_paths(aug, 0, 1, 3, 32)
        assert [p.steps for p in out] == [(1,)]  # the reversed relation


class TestRelationPath:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            RelationPath(())

    def test_len(self):
        assert len(RelationPath((1, 2, 3))) == 3


class TestPathFinder:
    def test_cache_hits(self):
        kg = random_kg(0)
        finder = PathFinder(kg, 3, 32)
        a = finder.shortest_paths(0, 5)
        b = finder.shortest_paths(0, 5)
        assert a is b
        assert finder.lookups == 2 and finder.misses == 1

    def test_fingerprint_tracks_graph(self):
        kg = random_kg(1)
        finder = PathFinder(kg, 3, 32)
        assert finder.fingerprint == kg.fingerprint

    def test_bundle(self):
        kg = KnowledgeGraph(["h", "c"], ["r"], [(0, 0, 1)])
        bundle = PathFinder(kg, 3, 32).bundle(0, 1)
        assert bundle.source == 0 and bundle.target == 1
        assert [p.steps for p in bundle.paths] == [(0,)]
