"""Shortest relation-path enumeration between entity pairs.

Operates on an inverse-augmented graph so reversed edges are walkable. Paths
are identified by their relation-id sequences: all distinct sequences at the
BFS distance are returned in lexicographic order, capped at max_paths.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from rotapath.kg import KnowledgeGraph


@dataclass(frozen=True)
class RelationPath:
    """Ordered relation ids realizing a walk from a source to a target."""

    steps: tuple[int, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a relation path has at least one step")

    def __len__(self):
        return len(self.steps)


@dataclass
class PathBundle:
    """All shortest paths for one (source, target) pair, plus the per-path
    representations filled in by the model (aligned lists)."""

    source: int
    target: int
    paths: list[RelationPath]
    textual_reps: list | None = None
    hybrid_reps: list | None = None


def _bfs_distances(kg, start, max_len, reverse=False):
    dist = {start: 0}
    frontier = deque([start])
    while frontier:
        u = frontier.popleft()
        du = dist[u]
        if du >= max_len:
            continue
        _, nbrs = kg.in_edges(u) if reverse else kg.out_edges(u)
        for v in nbrs.tolist():
            if v not in dist:
                dist[v] = du + 1
                frontier.append(v)
    return dist


def enumerate_shortest_paths(kg: KnowledgeGraph, h: int, c: int,
                             max_len: int = 3, max_paths: int = 32) -> list[RelationPath]:
    """Distinct relation-label walks of minimal length from h to c.

    Returns [] for unreachable pairs (within max_len) and for h == c.
    Ordering is lexicographic on relation-id sequences; at most max_paths.
    """
    for e in (h, c):
        if not 0 <= e < kg.n_entities:
            raise ValueError(f"entity id {e} out of bounds")
    if max_len < 1 or max_paths < 1:
        raise ValueError("max_len and max_paths must be positive")
    if h == c:
        return []

    dist_h = _bfs_distances(kg, h, max_len)
    if c not in dist_h:
        return []
    dist_c = _bfs_distances(kg, c, dist_h[c], reverse=True)
    return _walk_sequences(kg, h, c, dist_h, dist_c, dist_h[c], max_paths)


def _walk_sequences(kg, h, c, dist_h, dist_c, length, max_paths):
    """DFS over relation-sequence prefixes (not walks): each prefix carries
    the set of shortest-path-DAG nodes it can reach, so every distinct
    sequence is visited exactly once and in lexicographic order."""
    found: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def walk(nodes, depth):
        if depth == length:
            found.append(tuple(prefix))
            return
        remaining = length - depth - 1
        successors: dict[int, set[int]] = {}
        for u in nodes:
            rels, nbrs = kg.out_edges(u)
            for r, v in zip(rels.tolist(), nbrs.tolist()):
                if dist_h.get(v) == depth + 1 and dist_c.get(v, length + 1) <= remaining:
                    successors.setdefault(r, set()).add(v)
        for r in sorted(successors):
            if len(found) >= max_paths:
                return
            prefix.append(r)
            walk(successors[r], depth + 1)
            prefix.pop()

    walk({h}, 0)
    return [RelationPath(seq) for seq in found[:max_paths]]


class PathFinder:
    """Memoizing wrapper: shortest paths are cached per (source, target) for
    one graph version (keyed by the graph's content fingerprint). Distance
    maps are cached per endpoint, so scoring many candidates against one
    topic entity pays for the topic's BFS once."""

    def __init__(self, kg: KnowledgeGraph, max_len: int = 3, max_paths: int = 32):
        self.kg = kg
        self.max_len = max_len
        self.max_paths = max_paths
        self.fingerprint = kg.fingerprint
        self._cache: dict[tuple[int, int], list[RelationPath]] = {}
        self._dist_from: dict[int, dict[int, int]] = {}
        self._dist_to: dict[int, dict[int, int]] = {}
        self.lookups = 0
        self.misses = 0

    def _distances(self, cache, node, reverse):
        d = cache.get(node)
        if d is None:
            d = _bfs_distances(self.kg, node, self.max_len, reverse=reverse)
            cache[node] = d
        return d

    def shortest_paths(self, h: int, c: int) -> list[RelationPath]:
        self.lookups += 1
        key = (h, c)
        hit = self._cache.get(key)
        if hit is None:
            self.misses += 1
            if h == c:
                hit = []
            else:
                dist_h = self._distances(self._dist_from, h, reverse=False)
                if c not in dist_h:
                    hit = []
                else:
                    dist_c = self._distances(self._dist_to, c, reverse=True)
                    hit = _walk_sequences(self.kg, h, c, dist_h, dist_c,
                                          dist_h[c], self.max_paths)
            self._cache[key] = hit
        return hit

    def bundle(self, h: int, c: int) -> PathBundle:
        return PathBundle(h, c, self.shortest_paths(h, c))
