"""Flat key = value configuration covering every tunable default.

One file drives the whole pipeline; unknown keys are rejected so typos fail
loudly. Types are inferred from the defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from rotapath import complexops as cx


@dataclass
class PipelineConfig:
    # KG embedding training
    kge_dim: int = 64
    kge_epochs: int = 200
    kge_learning_rate: float = 0.01
    kge_negatives: int = 8
    kge_batch_size: int = 1024
    kge_adversarial_temperature: float = 0.0
    kge_margin: float = 6.0
    kge_norm: str = cx.L1
    # subgraph retrieval
    ppr_restart_prob: float = 0.8
    ppr_iterations: int = 20
    max_subgraph_entities: int = 2000
    # path enumeration
    max_path_length: int = 3
    max_paths: int = 32
    # QA training
    qa_epochs: int = 20
    qa_learning_rate: float = 3e-5
    qa_lr_decay: float = 1.0
    qa_beta2: float = 0.998
    qa_batch_size: int = 10
    qa_candidates: int = 20000
    freeze_embeddings: bool = True
    lambda_in_loss: bool = False
    match_kind: str = "rotate_scale"
    use_path: bool = True
    path_features: str = "both"
    # inference
    infer_lambda: float = 0.6
    stage1_k: int = 15
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.infer_lambda <= 1.0:
            raise ValueError("infer_lambda must be in [0, 1]")
        if self.stage1_k < 1:
            raise ValueError("stage1_k must be >= 1")
        if self.max_path_length < 1 or self.max_paths < 1:
            raise ValueError("path caps must be positive")
        cx.norm_code(self.kge_norm)
        return self


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    values = asdict(cfg)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in types:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        t = types[key]
        if t is bool:
            if val.lower() not in _BOOL:
                raise ValueError(f"config line {line_no}: bad boolean {val!r}")
            values[key] = _BOOL[val.lower()]
        else:
            values[key] = t(val)
    return PipelineConfig(**values).validate()


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), base)


def write_config(cfg: PipelineConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        for key, val in asdict(cfg).items():
            f.write(f"{key} = {val}\n")


def toy_config() -> PipelineConfig:
    """Desk-scale settings for the synthetic benchmark: from-scratch token
    embeddings need a far larger step size than the fine-tuning default."""
    return PipelineConfig(
        kge_dim=32,
        kge_epochs=300,
        kge_learning_rate=0.02,
        kge_negatives=8,
        kge_batch_size=2048,
        kge_margin=3.0,
        max_subgraph_entities=400,
        max_path_length=2,
        max_paths=6,
        qa_epochs=12,
        qa_learning_rate=3e-3,
        qa_lr_decay=0.95,
        qa_batch_size=10,
        qa_candidates=64,
        stage1_k=15,
    )
