"""The question/path scoring model.

Both views follow the same recipe: encode to a d_text vector, map it through
two independent feed-forward heads to per-component rotation angles theta and
scaling factors m, assemble the complex relation representation m*cos(theta) +
i*m*sin(theta), rotate-and-scale the topic entity with it, and score
candidates by negated distance. Path representations additionally fuse the
path's text encoding with the composed relation embeddings, and a scaled
dot-product attention (queries/keys from the textual side, values from the
hybrid side) picks among multiple shortest paths.

Match kinds: "rotate_scale" (full model), "rotate" (m clamped to ones), and
"complex" (a single head emits a free complex vector, scored by the trilinear
form instead of distance).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rotapath import autodiff as ad
from rotapath import complexops as cx
from rotapath.kge import COMPLEX, ROTATE, EmbeddingTable
from rotapath.text import SEP, TextEncoder, Tokenizer, Vocab, relation_name_tokens

ROTATE_SCALE = "rotate_scale"
ROTATE_ONLY = "rotate"
COMPLEX_MATCH = "complex"
MATCH_KINDS = (ROTATE_SCALE, ROTATE_ONLY, COMPLEX_MATCH)

FEATURES_BOTH = "both"
FEATURES_TEXTUAL = "textual"
FEATURES_STRUCTURAL = "structural"
FEATURE_MODES = (FEATURES_BOTH, FEATURES_TEXTUAL, FEATURES_STRUCTURAL)


@dataclass
class QaModelConfig:
    d_text: int | None = None  # defaults to 2d, the real width of the complex space
    d_att: int | None = None  # defaults to d_text
    match_kind: str = ROTATE_SCALE
    use_path: bool = True
    path_features: str = FEATURES_BOTH
    norm: str = cx.L1
    freeze_embeddings: bool = True
    seed: int = 0

    def validate(self):
        if self.match_kind not in MATCH_KINDS:
            raise ValueError(f"unknown match kind {self.match_kind!r}")
        if self.path_features not in FEATURE_MODES:
            raise ValueError(f"unknown path feature mode {self.path_features!r}")
        cx.norm_code(self.norm)


class RotateScaleHead:
    """Two independent FFNs mapping a view vector to angles and scales.

    Output layers start at zero weights with theta bias 0 and m bias 1: every
    head begins at the identity rotation, so the question and path views open
    with identical, entity-scaled scores -||e_h - e_c|| and neither view can
    drift to an incomparable score scale before training couples them. A unit
    m also keeps the theta gradient alive (at m = 0 it would vanish).
    """

    def __init__(self, d_in, d_out, rng, scale_enabled=True):
        hidden = 2 * d_in
        self.theta_ffn = ad.Ffn(d_in, hidden, d_out, rng)
        self.theta_ffn.lin2.w.data[:] = 0.0
        self.m_ffn = ad.Ffn(d_in, hidden, d_out, rng) if scale_enabled else None
        if self.m_ffn is not None:
            self.m_ffn.lin2.w.data[:] = 0.0
            self.m_ffn.lin2.b.data[:] = 1.0
        self.d_out = d_out

    def angles_and_scales(self, view: ad.Tensor):
        theta = self.theta_ffn(view)
        if self.m_ffn is None:
            m = ad.Tensor(np.ones(theta.data.shape))
        else:
            m = self.m_ffn(view)
        return theta, m

    def complex_rep(self, view: ad.Tensor):
        theta, m = self.angles_and_scales(view)
        return ad.mul(m, ad.cos(theta)), ad.mul(m, ad.sin(theta))

    def params(self, prefix):
        out = self.theta_ffn.params(prefix + ".theta")
        if self.m_ffn is not None:
            out.update(self.m_ffn.params(prefix + ".m"))
        return out


@dataclass(frozen=True)
class RotateScaleRep:
    """Angles, scales, and the assembled complex representation."""

    theta: np.ndarray
    m: np.ndarray
    rep: cx.ComplexVec = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rep", cx.from_polar(self.m, self.theta))


def project(view_vector: np.ndarray, head: RotateScaleHead) -> RotateScaleRep:
    """Map one view vector to its rotate-and-scale representation."""
    view = np.asarray(view_vector, dtype=np.float64)
    if view.shape != (head.theta_ffn.lin1.w.data.shape[0],):
        raise ValueError(
            f"view width {view.shape} does not match head input "
            f"{head.theta_ffn.lin1.w.data.shape[0]}"
        )
    with ad.no_grad():
        theta, m = head.angles_and_scales(ad.Tensor(view))
    return RotateScaleRep(theta.data, m.data)


def score_view(e_h: cx.ComplexVec, rep, e_c: cx.ComplexVec, norm: str = cx.L1) -> float:
    """Negated distance between the transformed head and a candidate (<= 0)."""
    r = rep.rep if isinstance(rep, RotateScaleRep) else rep
    return -cx.distance(cx.hadamard(e_h, r), e_c, norm)


def combine(s_q: float, s_p, lam: float) -> float:
    """(1 - lambda) * s_q + lambda * s_p; falls back to s_q when the path
    view is unavailable (s_p is None)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if s_p is None:
        return s_q
    return (1.0 - lam) * s_q + lam * s_p


def sample_candidates(subgraph, answers, n: int, seed: int):
    """One gold answer (uniformly chosen, placed first) plus uniform negatives
    without replacement from the subgraph, excluding every gold answer."""
    if n < 1:
        raise ValueError("candidate count must be >= 1")
    ids = subgraph.entity_ids if hasattr(subgraph, "entity_ids") else np.asarray(subgraph)
    if ids.shape[0] == 0:
        raise ValueError("empty subgraph")
    answers = sorted(set(int(a) for a in answers))
    rng = np.random.default_rng(seed)
    in_graph = [a for a in answers if a in set(ids.tolist())]
    if not in_graph:
        raise ValueError("no gold answer inside the subgraph")
    gold = int(in_graph[rng.integers(len(in_graph))])
    pool = np.setdiff1d(ids, np.asarray(answers, dtype=np.int64), assume_unique=False)
    take = min(n - 1, pool.shape[0])
    negatives = rng.choice(pool, size=take, replace=False) if take else np.empty(0, np.int64)
    return [gold] + [int(x) for x in negatives]


def qa_loss(sq_scores, sp_scores, target_index: int):
    """Cross-entropy of the question view plus cross-entropy of the path view
    against the same target; the path term is omitted when sp_scores is None.

    Accepts plain arrays or autodiff tensors; returns an autodiff scalar.
    """
    sq = sq_scores if isinstance(sq_scores, ad.Tensor) else ad.Tensor(np.asarray(sq_scores, dtype=np.float64))
    if not 0 <= target_index < sq.data.shape[0]:
        raise ValueError("target index out of range")
    loss = ad.softmax_cross_entropy(sq, target_index)
    if sp_scores is not None:
        sp = sp_scores if isinstance(sp_scores, ad.Tensor) else ad.Tensor(np.asarray(sp_scores, dtype=np.float64))
        if sp.data.shape != sq.data.shape:
            raise ValueError("score vectors must have equal length")
        loss = ad.add(loss, ad.softmax_cross_entropy(sp, target_index))
    return loss


def fuse_path(p_t, p_l: cx.ComplexVec, fuse_ffn: ad.Ffn) -> np.ndarray:
    """Hybrid path representation: FFN over [text rep, re(p_l), im(p_l)]."""
    x = np.concatenate([np.asarray(p_t, dtype=np.float64), p_l.re, p_l.im])
    if x.shape[0] != fuse_ffn.lin1.w.data.shape[0]:
        raise ValueError("fusion input width mismatch")
    with ad.no_grad():
        return fuse_ffn(ad.Tensor(x)).data


def attend_paths(q, bundle, w1, w2) -> np.ndarray:
    """Scaled dot-product attention over one bundle's paths: queries/keys from
    the textual reps, values from the hybrid reps."""
    if not bundle.paths:
        raise ValueError("bundle has no paths")
    if bundle.textual_reps is None or bundle.hybrid_reps is None:
        raise ValueError("bundle representations not populated")
    w1 = w1.data if isinstance(w1, ad.Tensor) else np.asarray(w1)
    w2 = w2.data if isinstance(w2, ad.Tensor) else np.asarray(w2)
    texts = np.stack([np.asarray(t) for t in bundle.textual_reps])
    hybrids = np.stack([np.asarray(h) for h in bundle.hybrid_reps])
    d_att = w1.shape[1]
    logits = (texts @ w2) @ (np.asarray(q) @ w1) / np.sqrt(d_att)
    e = np.exp(logits - logits.max())
    weights = e / e.sum()
    return weights @ hybrids


class QaModel:
    """All trainable state plus the batched forward passes for both views."""

    def __init__(self, table: EmbeddingTable, vocab: Vocab, config: QaModelConfig):
        config.validate()
        self.table = table
        self.vocab = vocab
        self.tokenizer = Tokenizer(vocab)
        self.config = config
        self.d = table.d
        self.d_text = config.d_text or 2 * table.d
        self.d_att = config.d_att or self.d_text
        if config.match_kind == COMPLEX_MATCH and table.model_kind != COMPLEX:
            raise ValueError("complex matching needs a complex embedding table")
        if config.match_kind != COMPLEX_MATCH and table.model_kind != ROTATE:
            raise ValueError("rotation matching needs a rotation embedding table")

        rng = np.random.default_rng(config.seed)
        self.encoder = TextEncoder(len(vocab), self.d_text, rng)
        self.fuse_ffn = ad.Ffn(self.d_text + 2 * self.d, 2 * self.d_text, self.d_text, rng)
        bound = np.sqrt(6.0 / (self.d_text + self.d_att))
        self.attn_w1 = ad.Tensor(rng.uniform(-bound, bound, (self.d_text, self.d_att)),
                                 requires_grad=True)
        self.attn_w2 = ad.Tensor(rng.uniform(-bound, bound, (self.d_text, self.d_att)),
                                 requires_grad=True)
        if config.match_kind == COMPLEX_MATCH:
            self.q_proj = ad.Ffn(self.d_text, 2 * self.d_text, 2 * self.d, rng)
            self.p_proj = ad.Ffn(self.d_text, 2 * self.d_text, 2 * self.d, rng)
            for proj in (self.q_proj, self.p_proj):
                # same anchoring as the rotation heads: start at r = 1 + 0i
                proj.lin2.w.data[:] = 0.0
                proj.lin2.b.data[: self.d] = 1.0
                proj.lin2.b.data[self.d :] = 0.0
            self.q_head = self.p_head = None
        else:
            scale_enabled = config.match_kind == ROTATE_SCALE
            self.q_head = RotateScaleHead(self.d_text, self.d, rng, scale_enabled)
            self.p_head = RotateScaleHead(self.d_text, self.d, rng, scale_enabled)
            self.q_proj = self.p_proj = None

        trainable = not config.freeze_embeddings
        self.ent_re = ad.Tensor(table.ent_re, requires_grad=trainable)
        self.ent_im = ad.Tensor(table.ent_im, requires_grad=trainable)
        if table.model_kind == ROTATE:
            self.rel_phase = ad.Tensor(table.rel_phase, requires_grad=trainable)
        else:
            self.rel_phase = None
        self.relation_texts: list[str] | None = None
        self._rel_token_cache: dict[int, list[int]] = {}

    # -- parameters ----------------------------------------------------------

    def params(self):
        out = self.encoder.params()
        out.update(self.fuse_ffn.params("fuse"))
        out["attn.w1"] = self.attn_w1
        out["attn.w2"] = self.attn_w2
        if self.q_head is not None:
            out.update(self.q_head.params("q_head"))
            out.update(self.p_head.params("p_head"))
        else:
            out.update(self.q_proj.params("q_proj"))
            out.update(self.p_proj.params("p_proj"))
        if not self.config.freeze_embeddings:
            out["kge.ent_re"] = self.ent_re
            out["kge.ent_im"] = self.ent_im
            if self.rel_phase is not None:
                out["kge.rel_phase"] = self.rel_phase
        return out

    def state_arrays(self):
        """Every parameter (always including the embeddings) for checkpoints."""
        out = {k: v.data for k, v in self.params().items()}
        out.setdefault("kge.ent_re", self.ent_re.data)
        out.setdefault("kge.ent_im", self.ent_im.data)
        if self.rel_phase is not None:
            out.setdefault("kge.rel_phase", self.rel_phase.data)
        else:
            out.setdefault("kge.rel_re", self.table.rel_re)
            out.setdefault("kge.rel_im", self.table.rel_im)
        return out

    def load_state(self, arrays):
        targets = self.params()
        targets.setdefault("kge.ent_re", self.ent_re)
        targets.setdefault("kge.ent_im", self.ent_im)
        if self.rel_phase is not None:
            targets.setdefault("kge.rel_phase", self.rel_phase)
        for key, tensor in targets.items():
            if key not in arrays:
                raise ValueError(f"checkpoint missing parameter {key}")
            arr = np.asarray(arrays[key], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise ValueError(f"shape mismatch for {key}")
            tensor.data = arr.copy()

    # -- embedding access ----------------------------------------------------

    def entity_rows(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if self.config.freeze_embeddings:
            return ad.Tensor(self.ent_re.data[ids]), ad.Tensor(self.ent_im.data[ids])
        return ad.gather_rows(self.ent_re, ids), ad.gather_rows(self.ent_im, ids)

    def entity_row(self, entity_id):
        re, im = self.entity_rows(np.array([entity_id]))
        return ad.reshape(re, (self.d,)), ad.reshape(im, (self.d,))

    def relation_rows_t(self, rel_ids):
        """Autodiff (re, im) rows for relation ids (conjugating inverses)."""
        rel_ids = np.asarray(rel_ids, dtype=np.int64)
        n_base = self.table.n_base_relations
        inverse = rel_ids >= n_base
        base = np.where(inverse, rel_ids - n_base, rel_ids)
        sign = np.where(inverse, -1.0, 1.0)[:, None]
        if self.rel_phase is None:
            re = self.table.rel_re[base]
            im = self.table.rel_im[base] * sign
            return ad.Tensor(re), ad.Tensor(im)
        if self.config.freeze_embeddings:
            phase = self.rel_phase.data[base] * sign
            return ad.Tensor(np.cos(phase)), ad.Tensor(np.sin(phase))
        phase = ad.mul(ad.gather_rows(self.rel_phase, base), sign)
        return ad.cos(phase), ad.sin(phase)

    # -- encoding ------------------------------------------------------------

    def encode_question(self, token_ids) -> ad.Tensor:
        return self.encoder.encode(token_ids)

    def relation_token_ids(self, rel_id):
        cached = self._rel_token_cache.get(rel_id)
        if cached is None:
            if self.relation_texts is None:
                raise RuntimeError("call set_relation_texts(kg) before path encoding")
            cached = relation_name_tokens(self.tokenizer, self.relation_texts[rel_id])
            self._rel_token_cache[rel_id] = cached
        return cached

    def set_relation_texts(self, kg):
        """Install the relation name texts (the model itself only sees the
        embedding table, not the graph)."""
        self.relation_texts = [kg.relation_text(r) for r in range(kg.n_relations)]
        self._rel_token_cache.clear()

    # -- question view -------------------------------------------------------

    def question_rep(self, q_vec: ad.Tensor):
        """Complex relation representation (re, im) for the question view."""
        if self.q_head is not None:
            return self.q_head.complex_rep(q_vec)
        vec = self.q_proj(q_vec)
        return ad.narrow(vec, 0, self.d), ad.narrow(vec, self.d, 2 * self.d)

    def question_scores(self, rep, h_id, cand_ids, counters=None) -> ad.Tensor:
        """s_q of one topic entity against a candidate id array."""
        rep_re, rep_im = rep
        h_re, h_im = self.entity_row(h_id)
        hr_re, hr_im = ad.complex_mul(h_re, h_im, rep_re, rep_im)
        c_re, c_im = self.entity_rows(cand_ids)
        if counters is not None:
            counters.score_view_calls += len(cand_ids)
        if self.config.match_kind == COMPLEX_MATCH:
            return ad.add(ad.matmul(c_re, hr_re), ad.matmul(c_im, hr_im))
        return ad.score_candidates(hr_re, hr_im, c_re, c_im, cx.norm_code(self.config.norm))

    # -- path view -----------------------------------------------------------

    def path_scores(self, question_ids, q_vec, h_id, cand_ids, finder, counters=None):
        """s_p for the candidates that have paths from h_id.

        Returns (scores tensor (S,), kept positions into cand_ids); (None, [])
        when no candidate has a path.
        """
        path_lists = []
        kept = []
        for pos, c in enumerate(cand_ids):
            if counters is not None:
                counters.path_bundles += 1
            paths = finder.shortest_paths(h_id, int(c))
            if paths:
                path_lists.append(paths)
                kept.append(pos)
        if not kept:
            return None, []

        flat_paths = [p for pl in path_lists for p in pl]
        cand_offsets = np.zeros(len(path_lists) + 1, dtype=np.int64)
        cand_offsets[1:] = np.cumsum([len(pl) for pl in path_lists])

        p_t = self._textual_reps(question_ids, flat_paths)
        p_l_re, p_l_im = self._structural_reps(flat_paths)
        hybrid = self._fuse(p_t, p_l_re, p_l_im)

        # attention: queries/keys from textual reps, values from hybrid reps
        qk = ad.matmul(q_vec, self.attn_w1)
        keys = ad.matmul(p_t, self.attn_w2)
        logits = ad.scale(ad.matmul(keys, qk), 1.0 / np.sqrt(self.d_att))
        weights = ad.segment_softmax(logits, cand_offsets)
        attended = ad.segment_weighted_sum(hybrid, weights, cand_offsets)

        if self.p_head is not None:
            rep_re, rep_im = self.p_head.complex_rep(attended)
        else:
            vec = self.p_proj(attended)
            rep_re = ad.narrow(vec, 0, self.d)
            rep_im = ad.narrow(vec, self.d, 2 * self.d)

        h_re, h_im = self.entity_row(h_id)
        hr_re, hr_im = ad.complex_mul(h_re, h_im, rep_re, rep_im)
        kept_ids = np.asarray(cand_ids, dtype=np.int64)[kept]
        c_re, c_im = self.entity_rows(kept_ids)
        if counters is not None:
            counters.score_view_calls += len(kept)
        if self.config.match_kind == COMPLEX_MATCH:
            prod = ad.add(ad.mul(hr_re, c_re), ad.mul(hr_im, c_im))
            scores = ad.matmul(prod, ad.Tensor(np.ones(self.d)))
        else:
            scores = ad.score_pairs(hr_re, hr_im, c_re, c_im,
                                    cx.norm_code(self.config.norm))
        return scores, kept

    def _textual_reps(self, question_ids, flat_paths) -> ad.Tensor:
        if self.config.path_features == FEATURES_STRUCTURAL:
            return ad.Tensor(np.zeros((len(flat_paths), self.d_text)))
        sep = [self.vocab.id_of(SEP)]
        flat_ids = []
        offsets = [0]
        for path in flat_paths:
            ids = list(question_ids) + sep
            for r in path.steps:
                ids.extend(self.relation_token_ids(r))
            flat_ids.extend(ids)
            offsets.append(len(flat_ids))
        return self.encoder.encode_many(
            np.asarray(flat_ids, dtype=np.int64), np.asarray(offsets, dtype=np.int64)
        )

    def _structural_reps(self, flat_paths):
        """Composed relation embeddings per path (unit modulus for rotation
        tables). Zeroed for textual-only mode and for the complex matcher,
        which has no relation composition."""
        m = len(flat_paths)
        if (
            self.config.path_features == FEATURES_TEXTUAL
            or self.config.match_kind == COMPLEX_MATCH
        ):
            zero = ad.Tensor(np.zeros((m, self.d)))
            return zero, zero
        by_len: dict[int, list[int]] = {}
        for i, p in enumerate(flat_paths):
            by_len.setdefault(len(p), []).append(i)
        re_parts, im_parts, order = [], [], []
        for length, idxs in sorted(by_len.items()):
            steps = np.array([flat_paths[i].steps for i in idxs], dtype=np.int64)
            re, im = self.relation_rows_t(steps[:, 0])
            for k in range(1, length):
                rk_re, rk_im = self.relation_rows_t(steps[:, k])
                re, im = ad.complex_mul(re, im, rk_re, rk_im)
            re_parts.append(re)
            im_parts.append(im)
            order.extend(idxs)
        re_all = re_parts[0] if len(re_parts) == 1 else ad.concat(re_parts, axis=0)
        im_all = im_parts[0] if len(im_parts) == 1 else ad.concat(im_parts, axis=0)
        # restore original path order
        inv = np.empty(m, dtype=np.int64)
        inv[np.asarray(order)] = np.arange(m)
        return ad.gather_rows(re_all, inv), ad.gather_rows(im_all, inv)

    def _fuse(self, p_t, p_l_re, p_l_im) -> ad.Tensor:
        return self.fuse_ffn(ad.concat([p_t, p_l_re, p_l_im], axis=1))
