"""End-to-end run orchestration.

One call strings the stages together: build the lexicon, generate and
split a synthetic corpus, distant-label both splits, optionally
pretrain, fine-tune, predict on the held-out split, and evaluate. Every
artifact lands in the output directory and is hashed into
manifest.json, so two runs with the same config and seed can be
compared file by file.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

from . import evaluation
from .errors import ConfigError
from .io import file_sha256, write_jsonl, write_labels
from .kb import (
    KnowledgeBase,
    build_lexicon,
    filter_min_frequency,
    load_kb,
    save_lexicon,
    select_top_entities,
)
from .labeler import label_corpus
from .model import (
    CheckpointBundle,
    ModelConfig,
    TrainConfig,
    build_vocab,
    init_model,
    mlm_pretrain,
    predict_labels,
    save_checkpoint,
    train_classifier,
)
from .runconfig import RunConfig
from .synthgen import (
    GenConfig,
    GoldCorpus,
    NoiseConfig,
    generate_corpus,
    load_templates,
    split_corpus,
)
from .textnorm import NormalizationPipeline, normalize

logger = logging.getLogger(__name__)

RECALL_FILENAMES = {
    "csv": "recall.csv",
    "tsv": "recall.tsv",
    "plot-data": "recall_plot.tsv",
}


def _normalize_split(
    split: GoldCorpus, pipeline: NormalizationPipeline
) -> list:
    return [normalize(text, pipeline, doc_id=doc_id)
            for doc_id, text in split.documents]


def write_corpus_jsonl(path: Path, split: GoldCorpus) -> None:
    write_jsonl(
        path,
        ({"doc_id": doc_id, "text": text} for doc_id, text in split.documents),
    )


def write_mentions_jsonl(path: Path, corpus: GoldCorpus) -> None:
    write_jsonl(
        path,
        (
            {"doc_id": m.doc_id, "entity": m.entity, "surface": m.surface,
             "noised": m.noised}
            for m in corpus.mentions
        ),
    )


def gen_config_from_run(config: RunConfig) -> GenConfig:
    gen = config.gen
    return GenConfig(
        seed=config.seed,
        n_docs=gen.n_docs,
        entities_min=gen.entities_min,
        entities_max=gen.entities_max,
        templates=load_templates(config.resolve(gen.template_file)),
        zipf_exponent=gen.zipf_exponent,
        noise=NoiseConfig(
            typo_rate=gen.typo_rate,
            insertion_rate=gen.insertion_rate,
            unseen_form_rate=gen.unseen_form_rate,
        ),
    )


def train_config_from_run(config: RunConfig) -> TrainConfig:
    train = config.train
    return TrainConfig(
        learning_rate=train.learning_rate,
        batch_size=train.batch_size,
        epochs=train.epochs,
        absent_class_weight=train.absent_class_weight,
        adam_beta1=train.adam_beta1,
        adam_beta2=train.adam_beta2,
        adam_eps=train.adam_eps,
        mlm_mask_prob=train.mlm_mask_prob,
        predict_threshold=train.predict_threshold,
        shuffle=train.shuffle,
        seed=config.seed,
    )


def load_pipeline_tables(config: RunConfig) -> NormalizationPipeline:
    kb = config.kb
    return NormalizationPipeline.from_files(
        config.resolve(kb.abbreviations) if kb.abbreviations else None,
        config.resolve(kb.lemmas) if kb.lemmas else None,
    )


def run_pipeline(
    config: RunConfig, out_dir: str | Path, workers: int = 1
) -> dict:
    """Run every stage; returns the manifest that was written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    outputs: list[str] = []

    def stage(name: str):
        logger.info("stage: %s", name)
        timings[name] = time.perf_counter()
        return name

    def done(name: str) -> None:
        timings[name] = round(time.perf_counter() - timings[name], 3)

    # lexicon
    stage("kb")
    kb = load_kb(config.resolve(config.kb.path))
    norm_pipeline = load_pipeline_tables(config)
    lexicon = build_lexicon(kb, norm_pipeline, config.kb.max_term_len)
    save_lexicon(lexicon, norm_pipeline, out / "lexicon.json")
    outputs.append("lexicon.json")
    done("kb")

    # synthetic corpus
    stage("gen")
    corpus = generate_corpus(kb, gen_config_from_run(config))
    train_split, test_split = split_corpus(
        corpus, config.gen.train_fraction, config.seed
    )
    for name, split in (("train", train_split), ("test", test_split)):
        write_corpus_jsonl(out / f"corpus_{name}.jsonl", split)
        write_labels(out / f"gold_{name}.jsonl", dict(split.gold_labels))
        write_labels(out / f"clean_{name}.jsonl", dict(split.clean_labels))
        outputs += [f"corpus_{name}.jsonl", f"gold_{name}.jsonl",
                    f"clean_{name}.jsonl"]
    write_mentions_jsonl(out / "mentions.jsonl", corpus)
    outputs.append("mentions.jsonl")
    done("gen")

    # distant labels
    stage("label")
    train_docs = _normalize_split(train_split, norm_pipeline)
    test_docs = _normalize_split(test_split, norm_pipeline)
    distant_train = label_corpus(train_docs, lexicon, workers=workers).labels
    distant_test = label_corpus(test_docs, lexicon, workers=workers).labels
    train_counts = evaluation.entity_instance_counts(distant_train)

    # optional frequency-based entity selection, as one would apply to a
    # huge KB: restrict, rebuild the lexicon, relabel
    if config.kb.top_k > 0 or config.kb.min_train_occurrences > 0:
        restricted = kb
        if config.kb.min_train_occurrences > 0:
            restricted = filter_min_frequency(
                restricted, train_counts, config.kb.min_train_occurrences
            )
        if config.kb.top_k > 0:
            restricted = select_top_entities(
                restricted, train_counts, config.kb.top_k
            )
        if not restricted.entities:
            raise ConfigError("entity selection removed every entity")
        logger.info("entity selection kept %d of %d entities",
                    len(restricted), len(kb))
        kb = restricted
        lexicon = build_lexicon(kb, norm_pipeline, config.kb.max_term_len)
        save_lexicon(lexicon, norm_pipeline, out / "lexicon.json")
        distant_train = label_corpus(train_docs, lexicon, workers=workers).labels
        distant_test = label_corpus(test_docs, lexicon, workers=workers).labels
        train_counts = evaluation.entity_instance_counts(distant_train)

    write_labels(out / "distant_train.jsonl", distant_train)
    write_labels(out / "distant_test.jsonl", distant_test)
    with open(out / "train_counts.json", "w", encoding="utf-8") as fh:
        json.dump(train_counts, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")
    outputs += ["distant_train.jsonl", "distant_test.jsonl", "train_counts.json"]
    done("label")

    # model
    classes = sorted(set(lexicon.entries.values()))
    train_tokens = [doc.tokens for doc in train_docs]
    tokenizer = build_vocab(
        train_tokens,
        min_freq=config.model.min_vocab_freq,
        max_seq_len=config.model.max_seq_len,
    )
    model_config = ModelConfig(
        vocab_size=len(tokenizer.vocab),
        n_entities=len(classes),
        d_model=config.model.d_model,
        n_layers=config.model.n_layers,
        n_heads=config.model.n_heads,
        ffn_dim=config.model.ffn_dim,
        max_seq_len=config.model.max_seq_len,
        pooling=config.model.pooling,
        dtype=config.model.dtype,
        seed=config.seed,
    )
    train_config = train_config_from_run(config)
    state = init_model(model_config)

    if config.train.pretrain_steps > 0:
        stage("pretrain")
        state, pre_losses = mlm_pretrain(
            state, train_tokens, tokenizer, train_config,
            max_steps=config.train.pretrain_steps,
        )
        logger.info("pretraining: %d steps, first loss %.4f, last %.4f",
                    len(pre_losses), pre_losses[0], pre_losses[-1])
        done("pretrain")

    stage("train")
    train_label_sets = [distant_train[doc.doc_id] for doc in train_docs]
    state, losses = train_classifier(
        state, train_tokens, train_label_sets, classes, tokenizer, train_config
    )
    logger.info("training: %d steps, first loss %.4f, last %.4f",
                len(losses), losses[0], losses[-1])
    bundle = CheckpointBundle(
        state=state, tokenizer=tokenizer, entities=tuple(classes),
        pipeline=norm_pipeline,
    )
    save_checkpoint(bundle, out / "model.ckpt")
    outputs.append("model.ckpt")
    done("train")

    # predictions on the held-out split
    stage("predict")
    preds_list = predict_labels(
        state,
        [doc.tokens for doc in test_docs],
        tokenizer,
        classes,
        threshold=config.train.predict_threshold,
    )
    preds = {doc.doc_id: labels
             for doc, labels in zip(test_docs, preds_list)}
    write_labels(out / "preds.jsonl", preds)
    outputs.append("preds.jsonl")
    done("predict")

    # evaluation
    stage("eval")
    groups = kb.groups
    recall_rows = evaluation.recall_by_bin(
        preds, distant_test, train_counts, list(config.eval.bins), groups,
        macro=config.eval.macro,
    )
    recall_name = RECALL_FILENAMES.get(config.eval.format)
    if recall_name is None:
        raise ConfigError(f"unknown eval format {config.eval.format!r}")
    evaluation.emit_report(recall_rows, config.eval.format, out / recall_name)
    outputs.append(recall_name)

    top = sorted(classes, key=lambda e: (-train_counts.get(e, 0), e))
    subset = top[: config.eval.discrepancy_entities]
    gold_test = {doc_id: test_split.gold_labels[doc_id]
                 for doc_id, _ in test_split.documents}
    disc_rows = evaluation.discrepancy_table(
        preds, distant_test, gold_test, subset
    )
    evaluation.emit_discrepancy_report(disc_rows, "csv", out / "discrepancy.csv")
    outputs.append("discrepancy.csv")

    stats = evaluation.group_stats(distant_train, kb)
    (out / "group_stats.csv").write_bytes(
        evaluation.render_group_stats(stats).encode("utf-8")
    )
    outputs.append("group_stats.csv")
    done("eval")

    manifest = {
        "seed": config.seed,
        "config": {
            "seed": config.seed,
            "kb": asdict(config.kb),
            "gen": asdict(config.gen),
            "model": asdict(config.model),
            "train": asdict(config.train),
            "eval": asdict(config.eval),
        },
        "inputs": {
            "kb": str(config.resolve(config.kb.path)),
            "abbreviations": str(config.resolve(config.kb.abbreviations))
            if config.kb.abbreviations else "",
            "lemmas": str(config.resolve(config.kb.lemmas))
            if config.kb.lemmas else "",
            "templates": str(config.resolve(config.gen.template_file)),
        },
        "versions": {
            "kb": kb.version,
            "pipeline": norm_pipeline.version,
            "lexicon": lexicon.version,
        },
        "counts": {
            "documents": len(corpus.documents),
            "train_docs": len(train_split.documents),
            "test_docs": len(test_split.documents),
            "entities": len(classes),
            "vocab": len(tokenizer.vocab),
        },
        "outputs": {name: file_sha256(out / name) for name in sorted(outputs)},
        "timings_sec": timings,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")
    logger.info("pipeline complete: %d artifacts in %s", len(outputs) + 1, out)
    return manifest
