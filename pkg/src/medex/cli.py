"""Command-line interface.

One ``medex`` entry point with subcommands for each stage plus a
``pipeline`` command that runs everything from a single TOML config.
Exit codes: 0 success, 1 user error (bad flags, bad files, bad config),
2 unexpected internal error.
"""

from __future__ import annotations

import json
import logging
import sys
import traceback
from pathlib import Path

import click

from . import evaluation
from .errors import CorpusError, MedexError
from .io import ensure_parent, read_corpus, read_labels, write_labels
from .kb import build_lexicon, load_kb, load_lexicon, save_lexicon
from .labeler import label_corpus
from .model import (
    CheckpointBundle,
    ModelConfig,
    init_model,
    load_checkpoint,
    mlm_pretrain,
    predict_labels,
    save_checkpoint,
    train_classifier,
    build_vocab,
)
from .pipeline import (
    gen_config_from_run,
    load_pipeline_tables,
    run_pipeline,
    train_config_from_run,
    write_corpus_jsonl,
    write_mentions_jsonl,
)
from .runconfig import default_config_toml, load_run_config
from .synthgen import generate_corpus
from .textnorm import NormalizationPipeline, normalize

logger = logging.getLogger(__name__)

_in_path = click.Path(exists=True, dir_okay=False, path_type=Path)
_out_path = click.Path(dir_okay=False, writable=True, path_type=Path)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug-level logging.")
def cli(verbose: bool):
    """Distant-supervision entity extraction toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.group("kb")
def kb_group():
    """Knowledge base utilities."""


@kb_group.command("build")
@click.option("--kb", "kb_path", required=True, type=_in_path,
              help="Entity file (line-JSON).")
@click.option("--abbreviations", type=_in_path, default=None,
              help="Abbreviation expansion TSV.")
@click.option("--lemmas", type=_in_path, default=None,
              help="Lemma lookup TSV.")
@click.option("--max-term-len", default=7, show_default=True,
              help="Longest synonym, in tokens, the matcher will see.")
@click.option("--out", "out_path", required=True, type=_out_path,
              help="Lexicon artifact to write.")
def kb_build(kb_path, abbreviations, lemmas, max_term_len, out_path):
    """Normalize KB synonyms into a matching lexicon."""
    kb = load_kb(kb_path)
    pipeline = NormalizationPipeline.from_files(abbreviations, lemmas)
    lexicon = build_lexicon(kb, pipeline, max_term_len)
    save_lexicon(lexicon, pipeline, out_path)
    click.echo(
        f"lexicon {lexicon.version}: {len(lexicon)} surface forms for "
        f"{len(set(lexicon.entries.values()))} entities -> {out_path}"
    )


@cli.command("gen")
@click.option("--kb", "kb_path", required=True, type=_in_path)
@click.option("--config", "config_path", required=True, type=_in_path,
              help="Run config TOML ([gen] section + seed).")
@click.option("--out-dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
def gen(kb_path, config_path, out_dir):
    """Generate a synthetic corpus with gold and clean labels."""
    config = load_run_config(config_path)
    kb = load_kb(kb_path)
    corpus = generate_corpus(kb, gen_config_from_run(config))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus_jsonl(out_dir / "corpus.jsonl", corpus)
    write_labels(out_dir / "gold.jsonl", dict(corpus.gold_labels))
    write_labels(out_dir / "clean.jsonl", dict(corpus.clean_labels))
    write_mentions_jsonl(out_dir / "mentions.jsonl", corpus)
    click.echo(
        f"{len(corpus.documents)} documents, {len(corpus.mentions)} mentions "
        f"-> {out_dir}"
    )


@cli.command("label")
@click.option("--lexicon", "lexicon_path", required=True, type=_in_path)
@click.option("--in", "in_path", required=True, type=_in_path,
              help="Corpus JSONL to label.")
@click.option("--out", "out_path", required=True, type=_out_path)
@click.option("--workers", default=1, show_default=True)
def label(lexicon_path, in_path, out_path, workers):
    """Distant-label a corpus against a lexicon."""
    lexicon, pipeline = load_lexicon(lexicon_path)
    docs = [normalize(text, pipeline, doc_id=doc_id)
            for doc_id, text in read_corpus(in_path)]
    labeled = label_corpus(docs, lexicon, workers=workers)
    write_labels(out_path, labeled.labels)
    click.echo(
        f"labeled {len(labeled)} documents at {labeled.docs_per_sec:.0f} "
        f"docs/s -> {out_path}"
    )


def _model_from_config(config, vocab_size: int, n_entities: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        n_entities=n_entities,
        d_model=config.model.d_model,
        n_layers=config.model.n_layers,
        n_heads=config.model.n_heads,
        ffn_dim=config.model.ffn_dim,
        max_seq_len=config.model.max_seq_len,
        pooling=config.model.pooling,
        dtype=config.model.dtype,
        seed=config.seed,
    )


@cli.command("pretrain")
@click.option("--corpus", "corpus_path", required=True, type=_in_path)
@click.option("--lexicon", "lexicon_path", required=True, type=_in_path,
              help="Fixes the class list and normalization.")
@click.option("--config", "config_path", required=True, type=_in_path)
@click.option("--out", "out_path", required=True, type=_out_path)
@click.option("--steps", default=0, show_default=True,
              help="Optimizer steps; 0 runs the configured epochs.")
def pretrain(corpus_path, lexicon_path, config_path, out_path, steps):
    """Masked-token pretraining; writes a checkpoint to fine-tune from."""
    config = load_run_config(config_path)
    lexicon, pipeline = load_lexicon(lexicon_path)
    classes = sorted(set(lexicon.entries.values()))
    docs = [normalize(text, pipeline, doc_id=doc_id).tokens
            for doc_id, text in read_corpus(corpus_path)]
    tokenizer = build_vocab(docs, min_freq=config.model.min_vocab_freq,
                            max_seq_len=config.model.max_seq_len)
    state = init_model(_model_from_config(config, len(tokenizer.vocab),
                                          len(classes)))
    train_config = train_config_from_run(config)
    state, losses = mlm_pretrain(
        state, docs, tokenizer, train_config,
        max_steps=steps if steps > 0 else None,
    )
    save_checkpoint(
        CheckpointBundle(state=state, tokenizer=tokenizer,
                         entities=tuple(classes), pipeline=pipeline),
        out_path,
    )
    click.echo(
        f"pretrained {len(losses)} steps (loss {losses[0]:.4f} -> "
        f"{losses[-1]:.4f}) -> {out_path}"
    )


@cli.command("train")
@click.option("--labels", "labels_path", required=True, type=_in_path)
@click.option("--corpus", "corpus_path", required=True, type=_in_path)
@click.option("--config", "config_path", required=True, type=_in_path)
@click.option("--out", "out_path", required=True, type=_out_path)
@click.option("--init", "init_path", type=_in_path, default=None,
              help="Checkpoint to continue from (e.g. pretrained).")
@click.option("--lexicon", "lexicon_path", type=_in_path, default=None,
              help="Lexicon fixing classes/normalization; defaults to the "
                   "config's [kb] section.")
def train(labels_path, corpus_path, config_path, out_path, init_path,
          lexicon_path):
    """Fine-tune the classifier on distant labels."""
    config = load_run_config(config_path)
    if init_path is not None:
        bundle = load_checkpoint(init_path)
        state, tokenizer = bundle.state, bundle.tokenizer
        classes = list(bundle.entities)
        pipeline = bundle.pipeline
    else:
        if lexicon_path is not None:
            lexicon, pipeline = load_lexicon(lexicon_path)
        else:
            kb = load_kb(config.resolve(config.kb.path))
            pipeline = load_pipeline_tables(config)
            lexicon = build_lexicon(kb, pipeline, config.kb.max_term_len)
        classes = sorted(set(lexicon.entries.values()))
        state = None
        tokenizer = None
    label_sets = read_labels(labels_path)
    doc_ids = []
    docs = []
    for doc_id, text in read_corpus(corpus_path):
        if doc_id not in label_sets:
            raise CorpusError(f"no labels for document {doc_id!r}")
        doc_ids.append(doc_id)
        docs.append(normalize(text, pipeline, doc_id=doc_id).tokens)
    if tokenizer is None:
        tokenizer = build_vocab(docs, min_freq=config.model.min_vocab_freq,
                                max_seq_len=config.model.max_seq_len)
        state = init_model(_model_from_config(config, len(tokenizer.vocab),
                                              len(classes)))
    train_config = train_config_from_run(config)
    state, losses = train_classifier(
        state, docs, [label_sets[d] for d in doc_ids], classes, tokenizer,
        train_config,
    )
    save_checkpoint(
        CheckpointBundle(state=state, tokenizer=tokenizer,
                         entities=tuple(classes), pipeline=pipeline),
        out_path,
    )
    click.echo(
        f"trained {len(losses)} steps (loss {losses[0]:.4f} -> "
        f"{losses[-1]:.4f}) -> {out_path}"
    )


@cli.command("predict")
@click.option("--model", "model_path", required=True, type=_in_path)
@click.option("--in", "in_path", required=True, type=_in_path)
@click.option("--out", "out_path", required=True, type=_out_path)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
def predict(model_path, in_path, out_path, threshold, batch_size):
    """Predict entity sets for a corpus with a trained checkpoint."""
    bundle = load_checkpoint(model_path)
    pairs = list(read_corpus(in_path))
    docs = [normalize(text, bundle.pipeline, doc_id=doc_id).tokens
            for doc_id, text in pairs]
    preds = predict_labels(
        bundle.state, docs, bundle.tokenizer, list(bundle.entities),
        threshold=threshold, batch_size=batch_size,
    )
    write_labels(out_path, {doc_id: p for (doc_id, _), p in zip(pairs, preds)})
    click.echo(f"predicted {len(pairs)} documents -> {out_path}")


@cli.group("eval")
def eval_group():
    """Evaluation reports."""


def _read_train_counts(path: Path) -> dict[str, int]:
    """Accept either a JSON object {entity: count} or a labels JSONL."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, dict):
        return {str(k): int(v) for k, v in obj.items()}
    return dict(evaluation.entity_instance_counts(read_labels(path)))


def _parse_bins(bins: str) -> list[int]:
    try:
        return [int(b.strip()) for b in bins.split(",") if b.strip()]
    except ValueError:
        raise click.BadParameter(f"bins must be integers: {bins!r}") from None


def _groups_for(kb_path: Path | None, *label_maps) -> dict[str, str]:
    if kb_path is not None:
        return load_kb(kb_path).groups
    every = set()
    for labels in label_maps:
        for entities in labels.values():
            every |= entities
    return {entity_id: evaluation.ALL_GROUPS for entity_id in every}


def _emit(text: str, out_path: Path | None) -> None:
    if out_path is None:
        click.echo(text, nl=False)
    else:
        ensure_parent(out_path)
        Path(out_path).write_bytes(text.encode("utf-8"))
        click.echo(f"wrote {out_path}")


@eval_group.command("recall")
@click.option("--preds", "preds_path", required=True, type=_in_path)
@click.option("--labels", "labels_path", required=True, type=_in_path)
@click.option("--train-counts", "counts_path", required=True, type=_in_path,
              help="JSON {entity: count} or a labels JSONL to count.")
@click.option("--bins", default="0,500,2500,50000", show_default=True)
@click.option("--kb", "kb_path", type=_in_path, default=None,
              help="KB for per-group rows; omitted = one 'all' block.")
@click.option("--macro", is_flag=True, help="Average per entity, not per instance.")
@click.option("--format", "fmt", default="csv", show_default=True,
              type=click.Choice(["csv", "tsv", "plot-data"]))
@click.option("--out", "out_path", type=_out_path, default=None)
def eval_recall(preds_path, labels_path, counts_path, bins, kb_path, macro,
                fmt, out_path):
    """Frequency-binned recall of predictions against labels."""
    preds = read_labels(preds_path)
    gold = read_labels(labels_path)
    counts = _read_train_counts(counts_path)
    groups = _groups_for(kb_path, preds, gold)
    rows = evaluation.recall_by_bin(
        preds, gold, counts, _parse_bins(bins), groups, macro=macro
    )
    _emit(evaluation.render_recall_rows(rows, fmt), out_path)


@eval_group.command("discrepancy")
@click.option("--preds", "preds_path", required=True, type=_in_path)
@click.option("--annotator", "annotator_path", required=True, type=_in_path)
@click.option("--gold", "gold_path", required=True, type=_in_path)
@click.option("--entities", default="",
              help="Comma-separated entity ids to report.")
@click.option("--top", default=0, show_default=True,
              help="Report the N most common entities instead "
                   "(needs --train-counts).")
@click.option("--train-counts", "counts_path", type=_in_path, default=None)
@click.option("--format", "fmt", default="csv", show_default=True,
              type=click.Choice(["csv", "tsv"]))
@click.option("--out", "out_path", type=_out_path, default=None)
def eval_discrepancy(preds_path, annotator_path, gold_path, entities, top,
                     counts_path, fmt, out_path):
    """Model-vs-annotator disagreement table against gold truth."""
    preds = read_labels(preds_path)
    annotator = read_labels(annotator_path)
    gold = read_labels(gold_path)
    subset = [e.strip() for e in entities.split(",") if e.strip()]
    if top > 0:
        if counts_path is None:
            raise click.UsageError("--top needs --train-counts")
        counts = _read_train_counts(counts_path)
        ranked = sorted(counts, key=lambda e: (-counts[e], e))
        subset = ranked[:top]
    if not subset:
        raise click.UsageError("pass --entities or --top")
    rows = evaluation.discrepancy_table(preds, annotator, gold, subset)
    _emit(evaluation.render_discrepancy_rows(rows, fmt), out_path)


@eval_group.command("counts")
@click.option("--labels", "labels_path", required=True, type=_in_path)
@click.option("--kb", "kb_path", required=True, type=_in_path)
@click.option("--format", "fmt", default="csv", show_default=True,
              type=click.Choice(["csv", "tsv"]))
@click.option("--out", "out_path", type=_out_path, default=None)
def eval_counts(labels_path, kb_path, fmt, out_path):
    """Per-group term and instance counts for a labels file."""
    stats = evaluation.group_stats(read_labels(labels_path), load_kb(kb_path))
    _emit(evaluation.render_group_stats(stats, fmt), out_path)


@cli.command("pipeline")
@click.option("--config", "config_path", required=True, type=_in_path)
@click.option("--out-dir", default="medex-out", show_default=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--workers", default=1, show_default=True)
def pipeline_cmd(config_path, out_dir, workers):
    """Run the whole flow: lexicon, corpus, labels, training, evaluation."""
    config = load_run_config(config_path)
    manifest = run_pipeline(config, out_dir, workers=workers)
    click.echo(f"manifest -> {out_dir / 'manifest.json'}")
    for name, digest in manifest["outputs"].items():
        click.echo(f"  {digest[:12]}  {name}")


@cli.command("defaults")
def defaults():
    """Print a fully-commented default config TOML."""
    click.echo(default_config_toml(), nl=False)


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping exceptions onto stable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except MedexError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
