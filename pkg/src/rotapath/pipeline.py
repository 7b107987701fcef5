"""End-to-end QA training, two-stage inference, evaluation, and the
experiment harness (lambda sweep, ablation grid).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from rotapath import autodiff as ad
from rotapath import complexops as cx
from rotapath.config import PipelineConfig
from rotapath.kg import KnowledgeGraph, QuestionInstance
from rotapath.kge import COMPLEX, ROTATE, EmbeddingTable, KgeTrainConfig, train_kge
from rotapath.model import (
    COMPLEX_MATCH,
    FEATURES_BOTH,
    QaModel,
    QaModelConfig,
)
from rotapath.optim import Adam
from rotapath.paths import PathFinder
from rotapath.ppr import Subgraph, ppr_subgraph
from rotapath.text import Tokenizer, Vocab

log = logging.getLogger(__name__)


@dataclass
class InferenceConfig:
    lam: float = 0.6
    stage1_k: int = 15
    max_path_length: int = 3
    max_paths: int = 32

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.stage1_k < 1:
            raise ValueError("stage1_k must be >= 1")
        return self


@dataclass
class Counters:
    """Auditable work counters (wall-clock-free speed-up evidence)."""

    path_bundles: int = 0
    score_view_calls: int = 0


@dataclass(frozen=True)
class ScoredCandidate:
    entity_id: int
    s_q: float
    s_p: float | None
    s: float


@dataclass
class EvalReport:
    hits_at_1: float
    bucket_hits: dict[str, float]
    bucket_counts: dict[str, int]
    n_questions: int
    predictions: list[tuple[int, int, bool, str]]  # (question idx, top entity, correct, bucket)
    counters: Counters

    def summary(self) -> str:
        lines = [f"questions\t{self.n_questions}", f"hits@1\t{self.hits_at_1:.4f}"]
        for bucket in sorted(self.bucket_hits):
            lines.append(
                f"hits@1[{bucket}]\t{self.bucket_hits[bucket]:.4f}"
                f"\t(n={self.bucket_counts[bucket]})"
            )
        lines.append(f"path_bundles\t{self.counters.path_bundles}")
        lines.append(f"score_view_calls\t{self.counters.score_view_calls}")
        return "\n".join(lines)

    def to_tsv(self) -> str:
        rows = ["question\tpredicted_entity\tcorrect\tbucket"]
        for idx, ent, ok, bucket in self.predictions:
            rows.append(f"{idx}\t{ent}\t{int(ok)}\t{bucket}")
        return "\n".join(rows)


# -- dataset preparation ------------------------------------------------------


@dataclass
class PreparedData:
    kg: KnowledgeGraph  # inverse-augmented
    vocab: Vocab
    splits: dict[str, list[QuestionInstance]]
    subgraphs: dict[str, list[Subgraph]]
    config: PipelineConfig
    skipped: dict[str, int] = field(default_factory=dict)


def prepare_data(kg: KnowledgeGraph, splits: dict[str, list[QuestionInstance]],
                 cfg: PipelineConfig) -> PreparedData:
    """Tokenize questions, build the vocabulary from the training split plus
    relation names, and retrieve one PPR subgraph per question."""
    if not kg.is_augmented:
        raise ValueError("prepare_data expects an inverse-augmented graph")
    train_texts = [q.text for q in splits.get("train", [])]
    relation_names = [kg.relation_text(r) for r in range(kg.n_relations)]
    vocab = Vocab.build(train_texts, relation_names)
    tokenizer = Tokenizer(vocab)
    subgraphs: dict[str, list[Subgraph]] = {}
    cache: dict[frozenset, Subgraph] = {}
    for split, instances in splits.items():
        graphs = []
        for inst in instances:
            inst.tokens = tokenizer.tokenize(inst.text)
            key = inst.topic_entities
            sub = cache.get(key)
            if sub is None:
                sub = ppr_subgraph(
                    kg, sorted(key),
                    restart_prob=cfg.ppr_restart_prob,
                    max_entities=cfg.max_subgraph_entities,
                    iterations=cfg.ppr_iterations,
                )
                cache[key] = sub
            graphs.append(
                Subgraph(sub.entity_ids, set(inst.answers) <= set(sub.entity_ids.tolist()))
            )
        subgraphs[split] = graphs
    return PreparedData(kg, vocab, splits, subgraphs, cfg)


# -- training -----------------------------------------------------------------


def _training_examples(data: PreparedData, rng):
    """One example per (instance, topic entity, gold answer); negatives come
    from the instance's subgraph, excluding every gold."""
    cfg = data.config
    examples = []
    skipped = 0
    for inst, sub in zip(data.splits["train"], data.subgraphs["train"]):
        in_sub = set(sub.entity_ids.tolist())
        golds = sorted(a for a in inst.answers if a in in_sub)
        if not golds:
            skipped += 1
            continue
        pool = np.setdiff1d(sub.entity_ids, np.array(sorted(inst.answers), dtype=np.int64))
        n_neg = min(cfg.qa_candidates - 1, pool.shape[0])
        for topic in sorted(inst.topic_entities):
            for gold in golds:
                negs = rng.choice(pool, size=n_neg, replace=False) if n_neg else np.empty(0, np.int64)
                cands = np.concatenate([[gold], negs]).astype(np.int64)
                examples.append((inst, topic, cands))
    if skipped:
        log.warning("train_qa: %d instances had no gold answer in their subgraph", skipped)
    return examples


def example_loss(model: QaModel, tokens, topic, cands, finder, cfg: PipelineConfig,
                 counters=None):
    """Question-view CE plus path-view CE for a single training example; the
    target is candidate 0.

    The path-view score vector spans all candidates, with s_q filling the
    path-less entries: that is exactly the per-candidate fallback the
    inference-time combination applies, and training against it calibrates
    the absolute scale of s_p to the question view (softmax alone is
    shift-invariant and would let the two views drift apart). A path-less
    target keeps its fallback entry, which teaches spurious paths to score
    below it; the term is omitted only when no candidate has a path.
    """
    q_vec = model.encode_question(tokens)
    rep = model.question_rep(q_vec)
    sq = model.question_scores(rep, topic, cands, counters)
    w_q, w_p = 1.0, 1.0
    if cfg.lambda_in_loss:
        w_q, w_p = 1.0 - cfg.infer_lambda, cfg.infer_lambda
    loss = ad.scale(ad.softmax_cross_entropy(sq, 0), w_q)
    if model.config.use_path:
        sp, kept = model.path_scores(tokens, q_vec, topic, cands, finder, counters)
        if sp is not None:
            sp_full = ad.splice(sq, np.asarray(kept, dtype=np.int64), sp)
            loss = ad.add(loss, ad.scale(ad.softmax_cross_entropy(sp_full, 0), w_p))
    return loss


def train_qa(data: PreparedData, table: EmbeddingTable,
             model_cfg: QaModelConfig | None = None, log_epoch=None,
             finder: PathFinder | None = None):
    """Train the QA heads (and optionally the embeddings) on the train split.

    Returns (model, per-epoch mean losses).
    """
    cfg = data.config.validate()
    if not data.splits.get("train"):
        raise ValueError("training split is empty")
    if model_cfg is None:
        model_cfg = QaModelConfig(
            match_kind=cfg.match_kind,
            use_path=cfg.use_path,
            path_features=cfg.path_features,
            freeze_embeddings=cfg.freeze_embeddings,
            seed=cfg.seed,
        )
    model = QaModel(table, data.vocab, model_cfg)
    model.set_relation_texts(data.kg)
    if finder is None:
        finder = PathFinder(data.kg, cfg.max_path_length, cfg.max_paths)

    rng = np.random.default_rng(cfg.seed)
    examples = _training_examples(data, rng)
    if not examples:
        raise ValueError("no trainable examples (no gold answers inside subgraphs)")
    opt = Adam(model.params(), lr=cfg.qa_learning_rate, beta2=cfg.qa_beta2)
    history = []
    for epoch in range(cfg.qa_epochs):
        opt.lr = cfg.qa_learning_rate * cfg.qa_lr_decay**epoch
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.qa_batch_size):
            batch = order[start : start + cfg.qa_batch_size]
            opt.zero_grad()
            for i in batch:
                inst, topic, cands = examples[i]
                loss = example_loss(model, inst.tokens, topic, cands, finder, cfg)
                loss.backward()
                epoch_loss += float(loss.data)
            for p in model.params().values():
                if p.grad is not None:
                    p.grad /= len(batch)
            opt.step()
        history.append(epoch_loss / len(examples))
        if log_epoch is not None:
            log_epoch(epoch, history[-1])
    return model, history


# -- inference ----------------------------------------------------------------


def question_view_scores(model: QaModel, inst: QuestionInstance, cand_ids,
                         counters=None) -> np.ndarray:
    """Mean s_q over the instance's topic entities; shape (N,)."""
    with ad.no_grad():
        q_vec = model.encode_question(inst.tokens)
        rep = model.question_rep(q_vec)
        rows = [
            model.question_scores(rep, topic, cand_ids, counters).data
            for topic in sorted(inst.topic_entities)
        ]
    return np.mean(rows, axis=0)


def path_view_scores(model: QaModel, inst: QuestionInstance, cand_ids, finder,
                     counters=None) -> np.ndarray:
    """Mean s_p over topic entities; NaN where no topic has a path."""
    n = len(cand_ids)
    sums = np.zeros(n)
    hits = np.zeros(n)
    with ad.no_grad():
        q_vec = model.encode_question(inst.tokens)
        for topic in sorted(inst.topic_entities):
            sp, kept = model.path_scores(inst.tokens, q_vec, topic, cand_ids,
                                         finder, counters)
            if sp is None:
                continue
            sums[kept] += sp.data
            hits[kept] += 1
    out = np.full(n, np.nan)
    mask = hits > 0
    out[mask] = sums[mask] / hits[mask]
    return out


def aggregate_topics(per_topic_scores):
    """Average (s_q, s_p) pairs across topic entities for one candidate set.

    per_topic_scores: list over topics of (s_q array, s_p array) where s_p may
    hold NaN for path-less entries. Returns (mean_sq, mean_sp) with NaN where
    every topic lacks a path.
    """
    if not per_topic_scores:
        raise ValueError("no topic scores to aggregate")
    sq = np.mean([s for s, _ in per_topic_scores], axis=0)
    sp_stack = np.stack([p for _, p in per_topic_scores])
    present = ~np.isnan(sp_stack)
    counts = present.sum(axis=0)
    sums = np.where(present, sp_stack, 0.0).sum(axis=0)
    sp = np.full(sq.shape, np.nan)
    mask = counts > 0
    sp[mask] = sums[mask] / counts[mask]
    return sq, sp


def combine_scores(sq: np.ndarray, sp: np.ndarray, lam: float) -> np.ndarray:
    """(1-lam)*sq + lam*sp, falling back to sq where sp is NaN."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    out = (1.0 - lam) * sq + lam * np.where(np.isnan(sp), 0.0, sp)
    return np.where(np.isnan(sp), sq, out)


def two_stage_infer(model: QaModel, inst: QuestionInstance, subgraph: Subgraph,
                    icfg: InferenceConfig, finder: PathFinder,
                    counters: Counters | None = None) -> list[ScoredCandidate]:
    """Stage 1 scores every subgraph entity with the question view and keeps
    the top-k; stage 2 adds path-view scores for the survivors only. The
    returned ranking covers the whole subgraph (non-survivors keep s = s_q),
    sorted by combined score, ties by ascending entity id."""
    icfg.validate()
    cand_ids = subgraph.entity_ids  # ascending
    n = cand_ids.shape[0]
    if n == 0:
        raise ValueError("empty subgraph")
    mean_sq = question_view_scores(model, inst, cand_ids, counters)

    k = min(icfg.stage1_k, n)
    top = np.lexsort((cand_ids, -mean_sq))[:k]
    top = np.sort(top)  # ascending candidate order within the selection

    mean_sp = np.full(n, np.nan)
    mean_sp[top] = path_view_scores(model, inst, cand_ids[top], finder, counters)
    combined = combine_scores(mean_sq, mean_sp, icfg.lam)

    order = np.lexsort((cand_ids, -combined))
    return [
        ScoredCandidate(
            int(cand_ids[i]),
            float(mean_sq[i]),
            None if np.isnan(mean_sp[i]) else float(mean_sp[i]),
            float(combined[i]),
        )
        for i in order
    ]


def hits_at_1(predictions, gold_sets) -> float:
    """Fraction of questions whose top-1 entity is in the gold set."""
    if len(predictions) != len(gold_sets):
        raise ValueError("predictions and gold sets must align")
    if not predictions:
        raise ValueError("empty evaluation")
    correct = sum(1 for p, g in zip(predictions, gold_sets) if p in g)
    return correct / len(predictions)


def _bucket(inst: QuestionInstance) -> str:
    return f"{inst.hop_annotation}-hop" if inst.hop_annotation else "unknown"


def evaluate(model: QaModel, instances, subgraphs, icfg: InferenceConfig,
             finder: PathFinder) -> EvalReport:
    counters = Counters()
    predictions = []
    gold_sets = []
    rows = []
    by_bucket: dict[str, list[bool]] = {}
    for idx, (inst, sub) in enumerate(zip(instances, subgraphs)):
        ranked = two_stage_infer(model, inst, sub, icfg, finder, counters)
        top = ranked[0].entity_id
        ok = top in inst.answers
        predictions.append(top)
        gold_sets.append(inst.answers)
        bucket = _bucket(inst)
        by_bucket.setdefault(bucket, []).append(ok)
        rows.append((idx, top, ok, bucket))
    return EvalReport(
        hits_at_1=hits_at_1(predictions, gold_sets),
        bucket_hits={b: float(np.mean(v)) for b, v in by_bucket.items()},
        bucket_counts={b: len(v) for b, v in by_bucket.items()},
        n_questions=len(predictions),
        predictions=rows,
        counters=counters,
    )


def lambda_sweep(model: QaModel, instances, subgraphs, lambdas,
                 icfg: InferenceConfig, finder: PathFinder):
    """Hits@1 per lambda per hop bucket, reusing the stage-1/stage-2 scores
    (the candidate selection does not depend on lambda). Returns rows of
    (lambda, bucket, hits@1) with bucket 'all' included."""
    if not list(lambdas):
        raise ValueError("no lambda values given")
    cached = []
    for inst, sub in zip(instances, subgraphs):
        cand_ids = sub.entity_ids
        counters = Counters()
        mean_sq = question_view_scores(model, inst, cand_ids, counters)
        k = min(icfg.stage1_k, cand_ids.shape[0])
        top = np.sort(np.lexsort((cand_ids, -mean_sq))[:k])
        mean_sp = np.full(cand_ids.shape[0], np.nan)
        mean_sp[top] = path_view_scores(model, inst, cand_ids[top], finder, counters)
        cached.append((inst, cand_ids, mean_sq, mean_sp))
    rows = []
    for lam in lambdas:
        by_bucket: dict[str, list[bool]] = {}
        all_ok = []
        for inst, cand_ids, mean_sq, mean_sp in cached:
            combined = combine_scores(mean_sq, mean_sp, lam)
            best = cand_ids[np.lexsort((cand_ids, -combined))[0]]
            ok = int(best) in inst.answers
            all_ok.append(ok)
            by_bucket.setdefault(_bucket(inst), []).append(ok)
        rows.append((lam, "all", float(np.mean(all_ok))))
        for bucket in sorted(by_bucket):
            rows.append((lam, bucket, float(np.mean(by_bucket[bucket]))))
    return rows


# -- ablation harness ----------------------------------------------------------


ABLATION_VARIANTS = {
    "full": dict(use_path=True, match_kind="rotate_scale", path_features="both"),
    "without_path": dict(use_path=False, match_kind="rotate_scale", path_features="both"),
    "rotate_only": dict(use_path=True, match_kind="rotate", path_features="both"),
    "complex_match": dict(use_path=True, match_kind="complex", path_features="both"),
    "textual_only": dict(use_path=True, match_kind="rotate_scale", path_features="textual"),
    "structural_only": dict(use_path=True, match_kind="rotate_scale", path_features="structural"),
    "without_path_rotate": dict(use_path=False, match_kind="rotate", path_features="both"),
    "without_path_complex": dict(use_path=False, match_kind="complex", path_features="both"),
}


def ablation_run(data: PreparedData, variants, tables: dict[str, EmbeddingTable],
                 eval_split: str = "test", log_variant=None):
    """Train and evaluate each named variant with the shared config/seed.

    `tables` maps embedding model kinds ("rotate", "complex") to trained
    tables; the complex variants require a complex table. Returns rows of
    (variant, bucket, hits@1).
    """
    rows = []
    finder = PathFinder(data.kg, data.config.max_path_length, data.config.max_paths)
    for name in variants:
        if name not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {name!r}")
        spec = ABLATION_VARIANTS[name]
        kind = COMPLEX if spec["match_kind"] == COMPLEX_MATCH else ROTATE
        if kind not in tables:
            raise ValueError(f"variant {name!r} needs a {kind} embedding table")
        model_cfg = QaModelConfig(
            match_kind=spec["match_kind"],
            use_path=spec["use_path"],
            path_features=spec["path_features"],
            freeze_embeddings=data.config.freeze_embeddings,
            seed=data.config.seed,
        )
        model, _ = train_qa(data, tables[kind], model_cfg, finder=finder)
        icfg = InferenceConfig(
            lam=data.config.infer_lambda if spec["use_path"] else 0.0,
            stage1_k=data.config.stage1_k,
        )
        report = evaluate(model, data.splits[eval_split], data.subgraphs[eval_split],
                          icfg, finder)
        rows.append((name, "all", report.hits_at_1))
        for bucket in sorted(report.bucket_hits):
            rows.append((name, bucket, report.bucket_hits[bucket]))
        if log_variant is not None:
            log_variant(name, report)
    return rows


def train_embeddings(kg: KnowledgeGraph, cfg: PipelineConfig,
                     model_kind: str = ROTATE, log_epoch=None) -> EmbeddingTable:
    kcfg = KgeTrainConfig(
        d=cfg.kge_dim,
        epochs=cfg.kge_epochs,
        learning_rate=cfg.kge_learning_rate,
        negatives_per_positive=cfg.kge_negatives,
        batch_size=cfg.kge_batch_size,
        adversarial_temperature=cfg.kge_adversarial_temperature,
        seed=cfg.seed,
        norm=cfg.kge_norm,
        margin=cfg.kge_margin,
    )
    table = train_kge(kg, kcfg, model_kind=model_kind, log_epoch=log_epoch)
    table.frozen = cfg.freeze_embeddings
    return table


def answer_question(model: QaModel, kg: KnowledgeGraph, cfg: PipelineConfig,
                    text: str, topic_labels, top_n: int = 5):
    """Score one free-form question against a PPR subgraph of its topics."""
    topics = []
    for label in topic_labels:
        if label not in kg.entity_ids:
            raise ValueError(f"unknown entity {label!r}")
        topics.append(kg.entity_ids[label])
    tokenizer = Tokenizer(model.vocab)
    inst = QuestionInstance(text, frozenset(topics), frozenset({0}))
    inst.tokens = tokenizer.tokenize(text)
    sub = ppr_subgraph(kg, topics, cfg.ppr_restart_prob,
                       cfg.max_subgraph_entities, cfg.ppr_iterations)
    finder = PathFinder(kg, cfg.max_path_length, cfg.max_paths)
    icfg = InferenceConfig(lam=cfg.infer_lambda, stage1_k=cfg.stage1_k,
                           max_path_length=cfg.max_path_length, max_paths=cfg.max_paths)
    ranked = two_stage_infer(model, inst, sub, icfg, finder)
    return [(kg.entity_labels[c.entity_id], c.s, c.s_q, c.s_p) for c in ranked[:top_n]]
