"""Scratch calibration driver (not part of the package)."""

import argparse
import json
import sys
import time

import numpy as np

from rotapath import kg as kgmod
from rotapath.config import toy_config
from rotapath.kge import filtered_tail_ranks
from rotapath.paths import PathFinder
from rotapath.pipeline import (
    InferenceConfig,
    evaluate,
    lambda_sweep,
    prepare_data,
    train_embeddings,
    train_qa,
)
from rotapath.toydata import build_world, write_world

parser = argparse.ArgumentParser()
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--kge-dim", type=int, default=32)
parser.add_argument("--kge-epochs", type=int, default=300)
parser.add_argument("--kge-lr", type=float, default=0.02)
parser.add_argument("--kge-margin", type=float, default=3.0)
parser.add_argument("--kge-adv", type=float, default=0.0)
parser.add_argument("--kge-negs", type=int, default=8)
parser.add_argument("--qa-epochs", type=int, default=12)
parser.add_argument("--qa-lr", type=float, default=3e-3)
parser.add_argument("--qa-decay", type=float, default=0.95)
parser.add_argument("--tune-emb", action="store_true")
parser.add_argument("--qa-candidates", type=int, default=64)
parser.add_argument("--kge-only", action="store_true")
parser.add_argument("--world", default=None)
parser.add_argument("--max-paths", type=int, default=32)
parser.add_argument("--max-len", type=int, default=3)
args = parser.parse_args()

world_dir = args.world or f"/tmp/toy{args.seed}"
write_world(build_world(seed=args.seed), world_dir)
kg = kgmod.add_inverse_relations(kgmod.load_triples(f"{world_dir}/kb.txt"))
cfg = toy_config()
cfg.seed = args.seed
cfg.kge_dim = args.kge_dim
cfg.kge_epochs = args.kge_epochs
cfg.kge_learning_rate = args.kge_lr
cfg.kge_margin = args.kge_margin
cfg.kge_adversarial_temperature = args.kge_adv
cfg.kge_negatives = args.kge_negs
cfg.qa_epochs = args.qa_epochs
cfg.qa_learning_rate = args.qa_lr
cfg.qa_lr_decay = args.qa_decay
if args.tune_emb:
    cfg.freeze_embeddings = False
cfg.qa_candidates = args.qa_candidates
cfg.max_paths = args.max_paths
cfg.max_path_length = args.max_len

t0 = time.time()
table = train_embeddings(kg, cfg, "rotate")
ranks = filtered_tail_ranks(table, kg)
kge_stats = dict(
    kge_s=round(time.time() - t0, 1),
    mean_rank=round(float(ranks.mean()), 2),
    h1=round(float((ranks == 1).mean()), 3),
    h3=round(float((ranks <= 3).mean()), 3),
)
print("KGE", json.dumps(kge_stats), flush=True)
if args.kge_only:
    sys.exit(0)

splits = {}
for split in ("train", "dev", "test"):
    splits[split], _ = kgmod.load_qa(f"{world_dir}/qa_{split}.txt", kg)
data = prepare_data(kg, splits, cfg)

t0 = time.time()
hist = []
model, hist = train_qa(data, table, log_epoch=lambda e, l: hist.append(round(l, 3)))
qa_s = time.time() - t0
print("QA", json.dumps(dict(qa_s=round(qa_s, 1), loss=hist)), flush=True)

finder = PathFinder(kg, cfg.max_path_length, cfg.max_paths)
icfg = InferenceConfig(lam=0.6, stage1_k=40)
rep = evaluate(model, data.splits["test"], data.subgraphs["test"], icfg, finder)
print("EVAL", json.dumps(dict(all=round(rep.hits_at_1, 3),
                              **{k: round(v, 3) for k, v in rep.bucket_hits.items()})),
      flush=True)
for k in (40, 50):
    icfg_k = InferenceConfig(lam=0.6, stage1_k=k)
    rows = lambda_sweep(model, data.splits["test"], data.subgraphs["test"],
                        [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], icfg_k, finder)
    for lam, bucket, hits in rows:
        if bucket in ("all", "1-hop", "2-hop"):
            print(f"SWEEP k={k} {lam} {bucket} {hits:.3f}", flush=True)
