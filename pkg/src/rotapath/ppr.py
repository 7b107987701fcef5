"""Personalized-PageRank subgraph retrieval around topic entities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rotapath.kg import KnowledgeGraph


@dataclass(frozen=True)
class Subgraph:
    """Question-specific candidate entity set (sorted dense ids)."""

    entity_ids: np.ndarray
    recall_flag: bool | None = None

    def __post_init__(self):
        ids = np.asarray(self.entity_ids, dtype=np.int64)
        object.__setattr__(self, "entity_ids", ids)

    def __len__(self):
        return self.entity_ids.shape[0]

    def __contains__(self, entity_id):
        i = np.searchsorted(self.entity_ids, entity_id)
        return i < len(self.entity_ids) and self.entity_ids[i] == entity_id


def ppr_scores(kg: KnowledgeGraph, seeds, restart_prob, iterations, on_iteration=None):
    """Power iteration of personalized PageRank over the undirected adjacency.

    Restart mass is uniform on the seeds; mass on degree-0 nodes is routed back
    to the restart distribution, so the score vector sums to 1 after every
    step. `on_iteration(step, scores)` is called after each update.
    """
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ValueError("seed set must be non-empty")
    if any(s < 0 or s >= kg.n_entities for s in seeds):
        raise ValueError("seed entity id out of bounds")
    if not 0.0 <= restart_prob <= 1.0:
        raise ValueError("restart_prob must be in [0, 1]")

    n = kg.n_entities
    src = np.concatenate([kg.triples[:, 0], kg.triples[:, 2]])
    dst = np.concatenate([kg.triples[:, 2], kg.triples[:, 0]])
    deg = np.bincount(src, minlength=n).astype(np.float64)
    dangling = deg == 0
    inv_deg = np.zeros(n)
    inv_deg[~dangling] = 1.0 / deg[~dangling]

    restart = np.zeros(n)
    restart[seeds] = 1.0 / len(seeds)
    x = restart.copy()
    for step in range(iterations):
        spread = np.bincount(dst, weights=x[src] * inv_deg[src], minlength=n)
        lost = x[dangling].sum()
        x = restart_prob * restart + (1.0 - restart_prob) * (spread + lost * restart)
        total = x.sum()
        if abs(total - 1.0) > 1e-9:
            raise AssertionError(f"PPR mass not conserved at step {step}: {total}")
        if on_iteration is not None:
            on_iteration(step, x)
    return x


def ppr_subgraph(
    kg: KnowledgeGraph,
    seeds,
    restart_prob: float = 0.8,
    max_entities: int = 2000,
    iterations: int = 20,
    answers=None,
) -> Subgraph:
    """Top `max_entities` entities by PPR score; seeds always included, ties
    broken by ascending entity id. `answers` (optional) sets recall_flag."""
    if max_entities < 1:
        raise ValueError("max_entities must be positive")
    scores = ppr_scores(kg, seeds, restart_prob, iterations)
    seeds = sorted(set(int(s) for s in seeds))
    # stable top-k: by descending score then ascending id
    order = np.lexsort((np.arange(kg.n_entities), -scores))
    top = order[:max_entities].tolist()
    chosen = set(top)
    missing = [s for s in seeds if s not in chosen]
    if missing:
        # evict the lowest-ranked non-seed entries to make room for seeds
        seed_set = set(seeds)
        keep = [e for e in top if e not in seed_set]
        keep = keep[: max_entities - len(seed_set)]
        chosen = seed_set | set(keep)
    ids = np.array(sorted(chosen), dtype=np.int64)
    recall = None
    if answers is not None:
        answer_set = set(int(a) for a in answers)
        recall = answer_set.issubset(set(ids.tolist()))
    return Subgraph(ids, recall)
