"""Native training of rotation (RotatE-style) and complex-bilinear (ComplEx)
entity/relation embeddings via negative sampling, plus relation composition.

Rotation relations are stored as phase vectors, so the unit-modulus constraint
holds by construction after every optimizer step. Inverse relations (ids >=
n_base_relations on an augmented graph) are tied to the conjugates of their
forward relations: they share parameters and compose/cancel exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rotapath import autodiff as ad
from rotapath import complexops as cx
from rotapath import kernels
from rotapath.kg import KnowledgeGraph
from rotapath.optim import Adam

ROTATE = "rotate"
COMPLEX = "complex"


@dataclass
class KgeTrainConfig:
    d: int = 64
    epochs: int = 200
    learning_rate: float = 1e-2
    negatives_per_positive: int = 8
    batch_size: int = 1024
    adversarial_temperature: float = 0.0
    seed: int = 0
    norm: str = cx.L1
    margin: float = 6.0

    def validate(self):
        if self.d <= 0:
            raise ValueError("d must be positive")
        if self.negatives_per_positive <= 0:
            raise ValueError("negatives_per_positive must be positive")
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size, learning_rate must be positive")
        if self.adversarial_temperature < 0:
            raise ValueError("adversarial_temperature must be >= 0")
        cx.norm_code(self.norm)


class EmbeddingTable:
    """Entity/relation embeddings over complex dimension d.

    ent_re/ent_im: (n_entities, d). For the rotation model rel_phase holds
    (n_base_relations, d) phases; for the complex model rel_re/rel_im hold
    free complex vectors. Lookups for inverse relation ids conjugate the
    forward relation.
    """

    def __init__(self, model_kind, d, ent_re, ent_im, rel_params, n_relations,
                 n_base_relations, frozen=False):
        if model_kind not in (ROTATE, COMPLEX):
            raise ValueError(f"unknown model kind {model_kind!r}")
        self.model_kind = model_kind
        self.d = d
        self.ent_re = np.ascontiguousarray(ent_re, dtype=np.float64)
        self.ent_im = np.ascontiguousarray(ent_im, dtype=np.float64)
        if model_kind == ROTATE:
            self.rel_phase = np.ascontiguousarray(rel_params, dtype=np.float64)
        else:
            self.rel_re = np.ascontiguousarray(rel_params[0], dtype=np.float64)
            self.rel_im = np.ascontiguousarray(rel_params[1], dtype=np.float64)
        self.n_entities = self.ent_re.shape[0]
        self.n_relations = n_relations
        self.n_base_relations = n_base_relations
        self.frozen = frozen

    def _base_and_sign(self, rel_ids):
        """Map (possibly inverse) relation ids to base ids and conjugation sign."""
        rel_ids = np.asarray(rel_ids, dtype=np.int64)
        if rel_ids.size and (rel_ids.min() < 0 or rel_ids.max() >= self.n_relations):
            raise ValueError("relation id out of bounds")
        inverse = rel_ids >= self.n_base_relations
        return np.where(inverse, rel_ids - self.n_base_relations, rel_ids), np.where(inverse, -1.0, 1.0)

    def relation_rows(self, rel_ids):
        """(re, im) arrays for the given relation ids, conjugating inverses."""
        base, sign = self._base_and_sign(rel_ids)
        if self.model_kind == ROTATE:
            phase = self.rel_phase[base] * sign[:, None]
            return np.cos(phase), np.sin(phase)
        return self.rel_re[base], self.rel_im[base] * sign[:, None]

    def entity_vec(self, entity_id) -> cx.ComplexVec:
        return cx.ComplexVec(self.ent_re[entity_id], self.ent_im[entity_id])

    def relation_vec(self, rel_id) -> cx.ComplexVec:
        re, im = self.relation_rows(np.array([rel_id]))
        return cx.ComplexVec(re[0], im[0])


def init_embeddings(kg: KnowledgeGraph, config: KgeTrainConfig) -> EmbeddingTable:
    """Entity components uniform in [-a, a] with a = 6/sqrt(2d); relation
    phases uniform in (-pi, pi] (unit modulus by construction)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    a = 6.0 / np.sqrt(2 * config.d)
    ent_re = rng.uniform(-a, a, size=(kg.n_entities, config.d))
    ent_im = rng.uniform(-a, a, size=(kg.n_entities, config.d))
    n_base = kg.n_base_relations
    phases = -rng.uniform(-np.pi, np.pi, size=(n_base, config.d))  # (-pi, pi]
    return EmbeddingTable(
        ROTATE, config.d, ent_re, ent_im, phases, kg.n_relations, n_base
    )


def init_complex_embeddings(kg: KnowledgeGraph, config: KgeTrainConfig) -> EmbeddingTable:
    config.validate()
    rng = np.random.default_rng(config.seed)
    a = 6.0 / np.sqrt(2 * config.d)
    ent_re = rng.uniform(-a, a, size=(kg.n_entities, config.d))
    ent_im = rng.uniform(-a, a, size=(kg.n_entities, config.d))
    n_base = kg.n_base_relations
    rel_re = rng.uniform(-a, a, size=(n_base, config.d))
    rel_im = rng.uniform(-a, a, size=(n_base, config.d))
    return EmbeddingTable(
        COMPLEX, config.d, ent_re, ent_im, (rel_re, rel_im), kg.n_relations, n_base
    )


def rotate_score(e_h: cx.ComplexVec, e_r: cx.ComplexVec, e_t: cx.ComplexVec,
                 norm: str = cx.L1) -> float:
    """Negated distance between the rotated head and the tail; always <= 0."""
    return -cx.distance(cx.hadamard(e_h, e_r), e_t, norm)


def complex_score(e_h: cx.ComplexVec, e_r: cx.ComplexVec, e_t: cx.ComplexVec) -> float:
    """Real part of the trilinear form <e_h, e_r, conj(e_t)>."""
    hr = cx.hadamard(e_h, e_r)
    return float(np.dot(hr.re, e_t.re) + np.dot(hr.im, e_t.im))


def compose_relations(relation_ids, table: EmbeddingTable) -> cx.ComplexVec:
    """Left-to-right Hadamard product of relation embeddings along a path."""
    if table.model_kind != ROTATE:
        raise ValueError("relation composition requires the rotation model")
    ids = list(relation_ids)
    if not ids:
        raise ValueError("relation path must be non-empty")
    re, im = table.relation_rows(np.asarray(ids))
    out = cx.ComplexVec(re[0], im[0])
    for k in range(1, len(ids)):
        out = cx.hadamard(out, cx.ComplexVec(re[k], im[k]))
    return out


# -- training ----------------------------------------------------------------


@dataclass
class _KgeParams:
    ent_re: ad.Tensor
    ent_im: ad.Tensor
    rel: dict = field(default_factory=dict)  # "phase" or "re"/"im"

    def as_dict(self):
        out = {"ent_re": self.ent_re, "ent_im": self.ent_im}
        out.update({f"rel_{k}": v for k, v in self.rel.items()})
        return out


def _relation_tensors(params: _KgeParams, model_kind, rel_ids, n_base):
    """Autodiff (re, im) rows for relation ids, conjugating inverse ids."""
    rel_ids = np.asarray(rel_ids, dtype=np.int64)
    inverse = rel_ids >= n_base
    base = np.where(inverse, rel_ids - n_base, rel_ids)
    sign = np.where(inverse, -1.0, 1.0)[:, None]
    if model_kind == ROTATE:
        phase = ad.mul(ad.gather_rows(params.rel["phase"], base), sign)
        return ad.cos(phase), ad.sin(phase)
    re = ad.gather_rows(params.rel["re"], base)
    im = ad.mul(ad.gather_rows(params.rel["im"], base), sign)
    return re, im


def _triple_scores(params, model_kind, h_idx, r_idx, t_idx, n_base, norm_flag):
    """Scores of (h, r, t) batches as an autodiff tensor."""
    h_re = ad.gather_rows(params.ent_re, h_idx)
    h_im = ad.gather_rows(params.ent_im, h_idx)
    t_re = ad.gather_rows(params.ent_re, t_idx)
    t_im = ad.gather_rows(params.ent_im, t_idx)
    r_re, r_im = _relation_tensors(params, model_kind, r_idx, n_base)
    hr_re, hr_im = ad.complex_mul(h_re, h_im, r_re, r_im)
    if model_kind == ROTATE:
        return ad.score_pairs(hr_re, hr_im, t_re, t_im, norm_flag)
    # Re<h, r, conj(t)> = sum(hr_re * t_re + hr_im * t_im), row-wise
    prod = ad.add(ad.mul(hr_re, t_re), ad.mul(hr_im, t_im))
    return ad.matmul(prod, ad.Tensor(np.ones(prod.data.shape[1])))


def negative_sampling_loss(params: _KgeParams, model_kind, pos, negs, config,
                           n_base, negative_weights=None) -> ad.Tensor:
    """-log sig(margin + s_pos) - sum_i w_i log sig(-margin - s_neg_i),
    averaged over the batch. Negative weights are uniform at temperature 0,
    otherwise a softmax of the negative scores treated as constants
    (stop-gradient); pass negative_weights to pin them explicitly."""
    norm_flag = cx.norm_code(config.norm)
    h, r, t = pos
    nh, nr, nt = negs  # each (B*K,)
    b = h.shape[0]
    k = nh.shape[0] // b

    s_pos = _triple_scores(params, model_kind, h, r, t, n_base, norm_flag)
    s_neg = _triple_scores(params, model_kind, nh, nr, nt, n_base, norm_flag)

    if negative_weights is not None:
        weights = np.asarray(negative_weights, dtype=np.float64)
    elif config.adversarial_temperature > 0:
        logits = (config.adversarial_temperature * s_neg.data).reshape(b, k)
        logits = logits - logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        weights = w.reshape(-1)
    else:
        weights = np.full(b * k, 1.0 / k)

    pos_term = ad.total(ad.logsigmoid(ad.add(s_pos, config.margin)))
    neg_ll = ad.logsigmoid(ad.scale(ad.add(s_neg, config.margin), -1.0))
    neg_term = ad.total(ad.mul(neg_ll, weights))
    return ad.scale(ad.add(pos_term, neg_term), -1.0 / b)


def train_kge(kg: KnowledgeGraph, config: KgeTrainConfig,
              model_kind: str = ROTATE, log_epoch=None) -> EmbeddingTable:
    """Train embeddings on the graph's triples by negative sampling."""
    config.validate()
    if kg.triples.shape[0] == 0:
        raise ValueError("cannot train on an empty graph")
    table = init_embeddings(kg, config) if model_kind == ROTATE \
        else init_complex_embeddings(kg, config)
    rng = np.random.default_rng(config.seed + 1)

    params = _KgeParams(
        ad.Tensor(table.ent_re, requires_grad=True),
        ad.Tensor(table.ent_im, requires_grad=True),
    )
    if model_kind == ROTATE:
        params.rel["phase"] = ad.Tensor(table.rel_phase, requires_grad=True)
    else:
        params.rel["re"] = ad.Tensor(table.rel_re, requires_grad=True)
        params.rel["im"] = ad.Tensor(table.rel_im, requires_grad=True)
    opt = Adam(params.as_dict(), lr=config.learning_rate)

    triples = kg.triples
    n_t = triples.shape[0]
    k = config.negatives_per_positive
    for epoch in range(config.epochs):
        order = rng.permutation(n_t)
        epoch_loss = 0.0
        for start in range(0, n_t, config.batch_size):
            batch = triples[order[start : start + config.batch_size]]
            b = batch.shape[0]
            h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
            corrupt = rng.integers(0, kg.n_entities, size=(b, k))
            corrupt_head = rng.random((b, k)) < 0.5
            nh = np.where(corrupt_head, corrupt, h[:, None]).reshape(-1)
            nt = np.where(corrupt_head, t[:, None], corrupt).reshape(-1)
            nr = np.repeat(r, k)
            loss = negative_sampling_loss(
                params, model_kind, (h, r, t), (nh, nr, nt), config, kg.n_base_relations
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data) * b
        if log_epoch is not None:
            log_epoch(epoch, epoch_loss / n_t)

    ent_re, ent_im = params.ent_re.data, params.ent_im.data
    if model_kind == ROTATE:
        return EmbeddingTable(ROTATE, config.d, ent_re, ent_im,
                              params.rel["phase"].data, kg.n_relations,
                              kg.n_base_relations)
    return EmbeddingTable(COMPLEX, config.d, ent_re, ent_im,
                          (params.rel["re"].data, params.rel["im"].data),
                          kg.n_relations, kg.n_base_relations)


def score_all_tails(table: EmbeddingTable, h: int, r: int, norm: str = cx.L1) -> np.ndarray:
    """Score (h, r, t) for every entity t at once."""
    r_re, r_im = table.relation_rows(np.array([r]))
    h_re, h_im = table.ent_re[h], table.ent_im[h]
    hr_re = h_re * r_re[0] - h_im * r_im[0]
    hr_im = h_re * r_im[0] + h_im * r_re[0]
    if table.model_kind == ROTATE:
        return kernels.score_candidates(hr_re, hr_im, table.ent_re, table.ent_im,
                                        cx.norm_code(norm))
    return table.ent_re @ hr_re + table.ent_im @ hr_im


def filtered_tail_ranks(table: EmbeddingTable, kg: KnowledgeGraph,
                        norm: str = cx.L1) -> np.ndarray:
    """Rank of each true tail among all entities, filtering the other known
    tails of the same (h, r). Rank 1 is best; ties count pessimistically."""
    true_tails = {}
    for h, r, t in kg.triples:
        true_tails.setdefault((h, r), set()).add(t)
    ranks = []
    for h, r, t in kg.triples:
        scores = score_all_tails(table, h, r, norm)
        others = true_tails[(h, r)] - {t}
        if others:
            scores = scores.copy()
            scores[list(others)] = -np.inf
        ranks.append(int((scores >= scores[t]).sum()))
    return np.array(ranks)
