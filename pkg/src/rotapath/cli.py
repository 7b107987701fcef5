"""Command-line interface: dataset generation, embedding/QA training,
evaluation, single-question answering, edge dropping, path inspection, the
lambda sweep, and the ablation grid."""

from __future__ import annotations

import sys

import click

from rotapath import checkpoint
from rotapath import kg as kgmod
from rotapath import kge as kgemod
from rotapath import pipeline, toydata
from rotapath.config import PipelineConfig, load_config, toy_config, write_config
from rotapath.paths import PathFinder
from rotapath.pipeline import InferenceConfig


def _load_augmented(triples_path):
    return kgmod.add_inverse_relations(kgmod.load_triples(triples_path))


def _config(config_path, toy_defaults=False):
    base = toy_config() if toy_defaults else PipelineConfig()
    if config_path:
        return load_config(config_path, base)
    return base


@click.group()
def main():
    """Multi-hop KGQA with hybrid relation-path features."""


@main.command("gen-toy")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--families", default=20, show_default=True)
@click.option("--questions-per-template", default=80, show_default=True)
def gen_toy(out_dir, seed, families, questions_per_template):
    """Synthesize the desk-scale family/affiliation benchmark."""
    world = toydata.build_world(seed=seed, n_families=families,
                                questions_per_template=questions_per_template)
    out = toydata.write_world(world, out_dir)
    write_config(toy_config(), out / "config.txt")
    n_q = {k: len(v) for k, v in world.questions.items()}
    click.echo(f"wrote {len(world.triples)} triples and {n_q} questions to {out}")


@main.command("drop-edges")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fraction", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def drop_edges_cmd(in_path, out_path, fraction, seed):
    """Remove a fraction of triples to simulate an incomplete KG."""
    kg = kgmod.load_triples(in_path)
    reduced = kgmod.drop_edges(kg, fraction, seed)
    kgmod.save_triples(reduced, out_path)
    click.echo(f"kept {reduced.triples.shape[0]} of {kg.triples.shape[0]} triples")


@main.command("train-kge")
@click.option("--triples", required=True, type=click.Path(exists=True))
@click.option("--model", "model_kind", default="rotate", show_default=True,
              type=click.Choice(["rotate", "complex"]))
@click.option("--dim", default=64, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def train_kge_cmd(triples, model_kind, dim, epochs, seed, config_path, out_path):
    """Train entity/relation embeddings by negative sampling."""
    cfg = _config(config_path)
    cfg.kge_dim, cfg.kge_epochs, cfg.seed = dim, epochs, seed
    kg = _load_augmented(triples)
    table = pipeline.train_embeddings(
        kg, cfg, model_kind=model_kind,
        log_epoch=lambda e, l: click.echo(f"epoch {e}: loss {l:.4f}", err=True)
        if (e + 1) % 50 == 0 else None,
    )
    checkpoint.save_embeddings(table, out_path)
    click.echo(f"saved {model_kind} embeddings (d={dim}) to {out_path}")


def _prepare(triples, qa_paths, cfg):
    kg = _load_augmented(triples)
    splits = {}
    for split, path in qa_paths.items():
        if path is None:
            continue
        instances, skipped = kgmod.load_qa(path, kg)
        if skipped:
            click.echo(f"{split}: skipped {skipped} unresolvable instances", err=True)
        splits[split] = instances
    return kg, pipeline.prepare_data(kg, splits, cfg)


@main.command("train-qa")
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--qa", required=True, type=click.Path(exists=True))
@click.option("--kge", "kge_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--toy-defaults", is_flag=True, help="Start from the desk-scale defaults.")
@click.option("--out", "out_path", required=True, type=click.Path())
def train_qa_cmd(triples, qa, kge_path, config_path, toy_defaults, out_path):
    """Train the QA model on bracketed question/answer pairs."""
    cfg = _config(config_path, toy_defaults)
    table = checkpoint.load_embeddings(kge_path)
    _, data = _prepare(triples, {"train": qa}, cfg)
    model, history = pipeline.train_qa(
        data, table,
        log_epoch=lambda e, l: click.echo(f"epoch {e}: loss {l:.4f}", err=True),
    )
    checkpoint.save_qa_model(model, cfg, out_path)
    model.vocab.save(str(out_path) + ".vocab")
    click.echo(f"saved QA model to {out_path} (final loss {history[-1]:.4f})"
               if history else f"saved untrained QA model to {out_path}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--qa", required=True, type=click.Path(exists=True))
@click.option("--lambda", "lam", default=None, type=float)
@click.option("--k", "stage1_k", default=None, type=int)
@click.option("--report", "report_path", type=click.Path())
def eval_cmd(model_path, triples, qa, lam, stage1_k, report_path):
    """Evaluate hits@1 with two-stage inference."""
    model, cfg = checkpoint.load_qa_model(model_path)
    kg, data = _prepare(triples, {"test": qa}, cfg)
    model.set_relation_texts(kg)
    icfg = InferenceConfig(
        lam=cfg.infer_lambda if lam is None else lam,
        stage1_k=cfg.stage1_k if stage1_k is None else stage1_k,
        max_path_length=cfg.max_path_length,
        max_paths=cfg.max_paths,
    )
    finder = PathFinder(kg, cfg.max_path_length, cfg.max_paths)
    report = pipeline.evaluate(model, data.splits["test"], data.subgraphs["test"],
                               icfg, finder)
    click.echo(report.summary())
    if report_path:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report.to_tsv() + "\n")
        click.echo(f"wrote per-question report to {report_path}")


@main.command("answer")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--question", required=True)
@click.option("--topic", "topics", required=True, multiple=True)
@click.option("--top-n", default=5, show_default=True)
def answer_cmd(model_path, triples, question, topics, top_n):
    """Answer a single question given its topic entity label(s)."""
    model, cfg = checkpoint.load_qa_model(model_path)
    kg = _load_augmented(triples)
    model.set_relation_texts(kg)
    results = pipeline.answer_question(model, kg, cfg, question, list(topics), top_n)
    for label, s, s_q, s_p in results:
        sp_txt = "-" if s_p is None else f"{s_p:.3f}"
        click.echo(f"{label}\ts={s:.3f}\ts_q={s_q:.3f}\ts_p={sp_txt}")


@main.command("paths")
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--from", "src", required=True)
@click.option("--to", "dst", required=True)
@click.option("--max-len", default=3, show_default=True)
@click.option("--max-paths", default=32, show_default=True)
def paths_cmd(triples, src, dst, max_len, max_paths):
    """Print the shortest relation paths between two entities."""
    kg = _load_augmented(triples)
    for label in (src, dst):
        if label not in kg.entity_ids:
            raise click.ClickException(f"unknown entity {label!r}")
    from rotapath.paths import enumerate_shortest_paths

    found = enumerate_shortest_paths(kg, kg.entity_ids[src], kg.entity_ids[dst],
                                     max_len, max_paths)
    if not found:
        click.echo("no path found")
        return
    for p in found:
        click.echo(" -> ".join(kg.relation_labels[r] for r in p.steps))


@main.command("sweep-lambda")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--qa", required=True, type=click.Path(exists=True))
@click.option("--lambdas", default="0.0,0.2,0.4,0.6,0.8,1.0", show_default=True)
def sweep_lambda_cmd(model_path, triples, qa, lambdas):
    """Hits@1 across lambda values, per hop bucket (plot-ready TSV)."""
    model, cfg = checkpoint.load_qa_model(model_path)
    kg, data = _prepare(triples, {"test": qa}, cfg)
    model.set_relation_texts(kg)
    icfg = InferenceConfig(lam=cfg.infer_lambda, stage1_k=cfg.stage1_k)
    finder = PathFinder(kg, cfg.max_path_length, cfg.max_paths)
    values = [float(x) for x in lambdas.split(",") if x]
    rows = pipeline.lambda_sweep(model, data.splits["test"], data.subgraphs["test"],
                                 values, icfg, finder)
    click.echo("lambda\tbucket\thits@1")
    for lam, bucket, hits in rows:
        click.echo(f"{lam}\t{bucket}\t{hits:.4f}")


@main.command("ablate")
@click.option("--kg", "triples", required=True, type=click.Path(exists=True))
@click.option("--qa-train", required=True, type=click.Path(exists=True))
@click.option("--qa-test", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--toy-defaults", is_flag=True)
@click.option("--variants", default="full,without_path,rotate_only,textual_only,structural_only",
              show_default=True)
def ablate_cmd(triples, qa_train, qa_test, config_path, toy_defaults, variants):
    """Train and evaluate ablation variants with a shared seed."""
    cfg = _config(config_path, toy_defaults)
    kg, data = _prepare(triples, {"train": qa_train, "test": qa_test}, cfg)
    names = [v for v in variants.split(",") if v]
    unknown = [n for n in names if n not in pipeline.ABLATION_VARIANTS]
    if unknown:
        raise click.ClickException(f"unknown variants: {', '.join(unknown)}")
    tables = {"rotate": pipeline.train_embeddings(kg, cfg, "rotate")}
    if any(pipeline.ABLATION_VARIANTS[n]["match_kind"] == "complex" for n in names):
        tables["complex"] = pipeline.train_embeddings(kg, cfg, "complex")
    rows = pipeline.ablation_run(
        data, names, tables,
        log_variant=lambda n, r: click.echo(f"{n}: hits@1 {r.hits_at_1:.4f}", err=True),
    )
    click.echo("variant\tbucket\thits@1")
    for name, bucket, hits in rows:
        click.echo(f"{name}\t{bucket}\t{hits:.4f}")


if __name__ == "__main__":
    sys.exit(main())
