"""Checkpoint files: single .npz archives that round-trip bit-exactly.

Embedding checkpoints carry the model kind, dimensions, vocabulary sizes and
every parameter array. QA checkpoints additionally embed the text vocabulary,
all head parameters, and the pipeline configuration.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from rotapath.config import PipelineConfig
from rotapath.kge import COMPLEX, ROTATE, EmbeddingTable
from rotapath.model import QaModel, QaModelConfig
from rotapath.text import Vocab


def save_embeddings(table: EmbeddingTable, path):
    meta = {
        "kind": "embeddings",
        "model_kind": table.model_kind,
        "d": table.d,
        "n_entities": table.n_entities,
        "n_relations": table.n_relations,
        "n_base_relations": table.n_base_relations,
        "frozen": table.frozen,
    }
    arrays = {"ent_re": table.ent_re, "ent_im": table.ent_im}
    if table.model_kind == ROTATE:
        arrays["rel_phase"] = table.rel_phase
    else:
        arrays["rel_re"] = table.rel_re
        arrays["rel_im"] = table.rel_im
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def _read_meta(archive):
    return json.loads(bytes(archive["__meta__"].tolist()).decode())


def load_embeddings(path) -> EmbeddingTable:
    with np.load(path) as archive:
        meta = _read_meta(archive)
        if meta.get("kind") != "embeddings":
            raise ValueError(f"{path} is not an embedding checkpoint")
        if meta["model_kind"] == ROTATE:
            rel_params = archive["rel_phase"]
        else:
            rel_params = (archive["rel_re"], archive["rel_im"])
        return EmbeddingTable(
            meta["model_kind"], meta["d"], archive["ent_re"], archive["ent_im"],
            rel_params, meta["n_relations"], meta["n_base_relations"],
            frozen=meta["frozen"],
        )


def save_qa_model(model: QaModel, cfg: PipelineConfig, path):
    meta = {
        "kind": "qa_model",
        "model_kind": model.table.model_kind,
        "d": model.table.d,
        "n_entities": model.table.n_entities,
        "n_relations": model.table.n_relations,
        "n_base_relations": model.table.n_base_relations,
        "model_config": asdict_model(model.config),
        "pipeline_config": asdict(cfg),
        "vocab": model.vocab.tokens,
        "relation_texts": model.relation_texts,
    }
    arrays = {"param/" + k: v for k, v in model.state_arrays().items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def asdict_model(config: QaModelConfig):
    return {
        "d_text": config.d_text,
        "d_att": config.d_att,
        "match_kind": config.match_kind,
        "use_path": config.use_path,
        "path_features": config.path_features,
        "norm": config.norm,
        "freeze_embeddings": config.freeze_embeddings,
        "seed": config.seed,
    }


def load_qa_model(path):
    """Returns (model, pipeline_config). Scores reproduce bit-exactly."""
    with np.load(path) as archive:
        meta = _read_meta(archive)
        if meta.get("kind") != "qa_model":
            raise ValueError(f"{path} is not a QA model checkpoint")
        params = {k[len("param/"):]: archive[k] for k in archive.files
                  if k.startswith("param/")}
    d = meta["d"]
    n_ent, n_rel, n_base = meta["n_entities"], meta["n_relations"], meta["n_base_relations"]
    if meta["model_kind"] == ROTATE:
        table = EmbeddingTable(ROTATE, d, params["kge.ent_re"], params["kge.ent_im"],
                               params["kge.rel_phase"], n_rel, n_base, frozen=True)
    else:
        table = EmbeddingTable(COMPLEX, d, params["kge.ent_re"], params["kge.ent_im"],
                               (params["kge.rel_re"], params["kge.rel_im"]),
                               n_rel, n_base, frozen=True)
    vocab = Vocab(meta["vocab"][4:])  # specials are re-added by the constructor
    model_cfg = QaModelConfig(**meta["model_config"])
    model = QaModel(table, vocab, model_cfg)
    model.relation_texts = meta["relation_texts"]
    model.load_state(params)
    pipeline_cfg = PipelineConfig(**meta["pipeline_config"]).validate()
    return model, pipeline_cfg
