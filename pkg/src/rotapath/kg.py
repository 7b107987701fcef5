"""Knowledge-graph storage, dataset ingestion, and edge-dropping.

Triples are (head, relation, tail) over dense integer vocabularies assigned in
first-appearance order. Adjacency is kept in CSR-style arrays sorted by
(node, relation, neighbor), which makes every traversal deterministic.
A KnowledgeGraph is immutable after construction.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

INVERSE_SUFFIX = " (reversed)"


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class KnowledgeGraph:
    """Immutable directed multigraph with label vocabularies."""

    def __init__(self, entity_labels, relation_labels, triples, n_base_relations=None):
        self.entity_labels = list(entity_labels)
        self.relation_labels = list(relation_labels)
        self.entity_ids = {lab: i for i, lab in enumerate(self.entity_labels)}
        self.relation_ids = {lab: i for i, lab in enumerate(self.relation_labels)}
        if len(self.entity_ids) != len(self.entity_labels):
            raise ValueError("duplicate entity labels")
        if len(self.relation_ids) != len(self.relation_labels):
            raise ValueError("duplicate relation labels")

        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triples = triples
        self.n_entities = len(self.entity_labels)
        self.n_relations = len(self.relation_labels)
        self.n_base_relations = (
            self.n_relations if n_base_relations is None else n_base_relations
        )

        if triples.shape[0]:
            if triples[:, [0, 2]].min() < 0 or triples[:, [0, 2]].max() >= self.n_entities:
                raise ValueError("entity id out of vocabulary bounds")
            if triples[:, 1].min() < 0 or triples[:, 1].max() >= self.n_relations:
                raise ValueError("relation id out of vocabulary bounds")
            if len(np.unique(triples, axis=0)) != triples.shape[0]:
                raise ValueError("duplicate triples")

        self._out = _csr(triples[:, 0], triples[:, 1], triples[:, 2], self.n_entities)
        self._in = _csr(triples[:, 2], triples[:, 1], triples[:, 0], self.n_entities)
        self.fingerprint = hashlib.blake2b(
            triples.tobytes() + f"{self.n_entities}:{self.n_relations}".encode(),
            digest_size=16,
        ).hexdigest()

    # -- adjacency ----------------------------------------------------------

    def out_edges(self, h):
        """(relation ids, tail ids) leaving h, sorted by (relation, tail)."""
        ptr, rel, dst = self._out
        return rel[ptr[h] : ptr[h + 1]], dst[ptr[h] : ptr[h + 1]]

    def in_edges(self, t):
        """(relation ids, head ids) entering t, sorted by (relation, head)."""
        ptr, rel, src = self._in
        return rel[ptr[t] : ptr[t + 1]], src[ptr[t] : ptr[t + 1]]

    def out_adj(self, h):
        rels, tails = self.out_edges(h)
        return list(zip(rels.tolist(), tails.tolist()))

    def in_adj(self, t):
        rels, heads = self.in_edges(t)
        return list(zip(rels.tolist(), heads.tolist()))

    def undirected_neighbors(self, e):
        """Distinct neighbor ids reachable ignoring direction."""
        return np.unique(np.concatenate([self.out_edges(e)[1], self.in_edges(e)[1]]))

    # -- inverse-relation bookkeeping ----------------------------------------

    @property
    def is_augmented(self):
        return self.n_relations == 2 * self.n_base_relations and any(
            lab.endswith(INVERSE_SUFFIX) for lab in self.relation_labels
        )

    def is_inverse(self, rel_id):
        return rel_id >= self.n_base_relations

    def inverse_of(self, rel_id):
        if not self.is_augmented:
            raise ValueError("graph has no inverse relations")
        return rel_id - self.n_base_relations if self.is_inverse(rel_id) else rel_id + self.n_base_relations

    def relation_text(self, rel_id):
        """Human-readable relation name with underscores split into words."""
        return self.relation_labels[rel_id].replace("_", " ")


def _csr(nodes, rels, others, n):
    order = np.lexsort((others, rels, nodes))
    nodes, rels, others = nodes[order], rels[order], others[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, nodes + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, np.ascontiguousarray(rels), np.ascontiguousarray(others)


def load_triples(path) -> KnowledgeGraph:
    """Read a tab-separated triples file; vocabularies in first-appearance
    order, duplicate lines dropped."""
    entity_labels, entity_ids = [], {}
    relation_labels, relation_ids = [], {}
    triples = []
    seen = set()

    def ent(label):
        if label not in entity_ids:
            entity_ids[label] = len(entity_labels)
            entity_labels.append(label)
        return entity_ids[label]

    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise ParseError(path, line_no, f"expected head<TAB>relation<TAB>tail, got {line!r}")
            h, r, t = parts
            hid = ent(h)
            if r not in relation_ids:
                relation_ids[r] = len(relation_labels)
                relation_labels.append(r)
            rid = relation_ids[r]
            tid = ent(t)
            if (hid, rid, tid) not in seen:
                seen.add((hid, rid, tid))
                triples.append((hid, rid, tid))

    if not triples:
        raise ParseError(path, 0, "no triples found")
    return KnowledgeGraph(entity_labels, relation_labels, triples)


def add_inverse_relations(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Add a reversed twin for every relation so any undirected path becomes
    a directed one. Original ids are unchanged; inverse of r is r + |R|."""
    if kg.is_augmented:
        raise ValueError("graph already has inverse relations")
    n = kg.n_relations
    inv_labels = [lab + INVERSE_SUFFIX for lab in kg.relation_labels]
    inv_triples = kg.triples[:, [2, 1, 0]].copy()
    inv_triples[:, 1] += n
    return KnowledgeGraph(
        kg.entity_labels,
        kg.relation_labels + inv_labels,
        np.concatenate([kg.triples, inv_triples]),
        n_base_relations=n,
    )


def drop_edges(kg: KnowledgeGraph, fraction: float, seed: int) -> KnowledgeGraph:
    """Remove round(fraction * |triples|) triples uniformly at random.
    Vocabularies are preserved; remaining triples keep their order."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n = kg.triples.shape[0]
    k = int(round(fraction * n))
    rng = np.random.default_rng(seed)
    removed = rng.choice(n, size=k, replace=False)
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    return KnowledgeGraph(
        kg.entity_labels,
        kg.relation_labels,
        kg.triples[keep],
        n_base_relations=kg.n_base_relations,
    )


@dataclass
class QuestionInstance:
    text: str
    topic_entities: frozenset[int]
    answers: frozenset[int]
    hop_annotation: int | None = None
    tokens: list[int] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.topic_entities:
            raise ValueError("topic_entities must be non-empty")
        if not self.answers:
            raise ValueError("answers must be non-empty")


_BRACKET = re.compile(r"\[([^\[\]]+)\]")


def load_qa(path, kg: KnowledgeGraph):
    """Read question<TAB>answer1|answer2[<TAB>hop] lines with topic entities
    marked in square brackets. Returns (instances, skipped_count); instances
    with unresolvable topics or empty answer sets are skipped and counted.
    """
    instances = []
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(path, line_no, f"expected 2 or 3 tab-separated fields, got {len(parts)}")
            text, answer_field = parts[0], parts[1]
            hop = int(parts[2]) if len(parts) == 3 else None
            topics = {
                kg.entity_ids[m] for m in _BRACKET.findall(text) if m in kg.entity_ids
            }
            answers = {
                kg.entity_ids[a]
                for a in answer_field.split("|")
                if a and a in kg.entity_ids
            }
            if not topics or not answers:
                skipped += 1
                continue
            instances.append(
                QuestionInstance(text, frozenset(topics), frozenset(answers), hop)
            )
    if not instances:
        raise ParseError(path, 0, "no parsable QA instances")
    if skipped:
        log.warning("load_qa skipped %d unresolvable instances from %s", skipped, path)
    return instances, skipped


def load_qa_explicit(path, kg: KnowledgeGraph):
    """Loader for non-bracketed datasets:
    question<TAB>topic_id1|topic_id2<TAB>answer1|answer2[<TAB>hop]."""
    instances = []
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise ParseError(path, line_no, f"expected 3 or 4 tab-separated fields, got {len(parts)}")
            text, topic_field, answer_field = parts[0], parts[1], parts[2]
            hop = int(parts[3]) if len(parts) == 4 else None
            try:
                topics = {int(t) for t in topic_field.split("|") if t}
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad topic id: {exc}") from exc
            answers = {
                kg.entity_ids[a]
                for a in answer_field.split("|")
                if a and a in kg.entity_ids
            }
            if not topics or not answers or any(t >= kg.n_entities or t < 0 for t in topics):
                skipped += 1
                continue
            instances.append(
                QuestionInstance(text, frozenset(topics), frozenset(answers), hop)
            )
    if not instances:
        raise ParseError(path, 0, "no parsable QA instances")
    return instances, skipped


def save_triples(kg: KnowledgeGraph, path):
    """Write the triples back out in the tab-separated file format."""
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in kg.triples:
            f.write(
                f"{kg.entity_labels[h]}\t{kg.relation_labels[r]}\t{kg.entity_labels[t]}\n"
            )
