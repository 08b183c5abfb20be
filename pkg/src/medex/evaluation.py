"""Evaluation protocols: group statistics, frequency-binned recall and
the human/model discrepancy taxonomy.

Recall within a bin is micro-averaged (instance-weighted) by default; a
macro flag averages per-entity recalls instead. Bins are strict
lower thresholds on the per-entity training-example count: bin ``>t``
contains entities whose count exceeds t, so bins with larger thresholds
are nested inside smaller ones.

All emission helpers write deterministic bytes: same rows in, same file
out.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError, CorpusError
from .kb import KnowledgeBase

LabelSets = Mapping[str, frozenset[str]]

ALL_GROUPS = "all"


@dataclass(frozen=True)
class RecallRow:
    group: str
    bin_threshold: int
    n_entities: int
    recall: float | None

    def __post_init__(self):
        if self.recall is not None and not 0.0 <= self.recall <= 1.0:
            raise ConfigError(f"recall {self.recall} outside [0, 1]")
        if self.n_entities < 0:
            raise ConfigError("negative entity count")


class DiscrepancyCase(Enum):
    """Who was right about one (document, entity) pair.

    tp/tn refer to the gold truth; the prefix names the side that got it
    right (both, only the model, only the human annotator), with
    both_wrong covering the two cells where neither did.
    """

    BOTH_TP = "both_tp"
    BOTH_TN = "both_tn"
    MODEL_TP = "model_tp"
    MODEL_TN = "model_tn"
    HUMAN_TP = "human_tp"
    HUMAN_TN = "human_tn"
    BOTH_WRONG = "both_wrong"


# Column order mirrors the reporting layout: agreement first, then the
# single-sided cases, then the extension bucket.
CASE_ORDER = (
    DiscrepancyCase.BOTH_TP,
    DiscrepancyCase.BOTH_TN,
    DiscrepancyCase.HUMAN_TP,
    DiscrepancyCase.HUMAN_TN,
    DiscrepancyCase.MODEL_TP,
    DiscrepancyCase.MODEL_TN,
    DiscrepancyCase.BOTH_WRONG,
)


def entity_instance_counts(labels: LabelSets) -> dict[str, int]:
    """How many documents each entity id is labeled in."""
    counts: dict[str, int] = {}
    for entities in labels.values():
        for entity_id in entities:
            counts[entity_id] = counts.get(entity_id, 0) + 1
    return counts


def group_stats(
    labels: LabelSets, kb: KnowledgeBase
) -> list[tuple[str, int, int]]:
    """(group, distinct labeled terms, total instances) per KB group.

    Groups with no labeled documents still get a zero row.
    """
    groups = kb.groups
    terms: dict[str, set[str]] = {g: set() for g in sorted(set(groups.values()))}
    instances: dict[str, int] = {g: 0 for g in terms}
    for doc_id, entities in labels.items():
        for entity_id in entities:
            group = groups.get(entity_id)
            if group is None:
                raise CorpusError(f"{doc_id}: unknown entity id {entity_id!r}")
            terms[group].add(entity_id)
            instances[group] += 1
    return [(g, len(terms[g]), instances[g]) for g in terms]


def _check_known(labels: LabelSets, groups: Mapping[str, str], what: str) -> None:
    for doc_id, entities in labels.items():
        for entity_id in entities:
            if entity_id not in groups:
                raise CorpusError(
                    f"{what} for {doc_id}: unknown entity id {entity_id!r}"
                )


def recall_by_bin(
    preds: LabelSets,
    gold: LabelSets,
    train_counts: Mapping[str, int],
    thresholds: Sequence[int],
    groups: Mapping[str, str],
    macro: bool = False,
) -> list[RecallRow]:
    """Recall restricted to entities above each training-count threshold.

    One row per (group, threshold) plus an all-groups row per threshold.
    Entities missing from train_counts count as zero. A bin with no gold
    instances yields recall None.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ConfigError("no thresholds given")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError(f"thresholds must be strictly increasing: {thresholds}")
    _check_known(preds, groups, "prediction")
    _check_known(gold, groups, "gold label")
    group_names = sorted(set(groups.values()))
    rows = []
    for group in group_names + [ALL_GROUPS]:
        if group == ALL_GROUPS:
            member = set(groups)
        else:
            member = {e for e, g in groups.items() if g == group}
        for threshold in thresholds:
            bin_entities = {
                e for e in member if train_counts.get(e, 0) > threshold
            }
            rows.append(
                _bin_row(preds, gold, group, threshold, bin_entities, macro)
            )
    return rows


def _bin_row(
    preds: LabelSets,
    gold: LabelSets,
    group: str,
    threshold: int,
    bin_entities: set[str],
    macro: bool,
) -> RecallRow:
    if macro:
        per_entity = []
        for entity_id in sorted(bin_entities):
            hit = total = 0
            for doc_id, gold_set in gold.items():
                if entity_id in gold_set:
                    total += 1
                    if entity_id in preds.get(doc_id, frozenset()):
                        hit += 1
            if total:
                per_entity.append(hit / total)
        recall = sum(per_entity) / len(per_entity) if per_entity else None
        return RecallRow(group, threshold, len(bin_entities), recall)
    hit = total = 0
    for doc_id, gold_set in gold.items():
        relevant = gold_set & bin_entities
        total += len(relevant)
        hit += len(relevant & preds.get(doc_id, frozenset()))
    recall = hit / total if total else None
    return RecallRow(group, threshold, len(bin_entities), recall)


def classify_discrepancy(
    model_says: bool, annotator_says: bool, gold: bool
) -> DiscrepancyCase:
    """Total mapping of the (model, annotator, gold) truth table."""
    if model_says == annotator_says:
        if model_says != gold:
            return DiscrepancyCase.BOTH_WRONG
        return DiscrepancyCase.BOTH_TP if gold else DiscrepancyCase.BOTH_TN
    if model_says == gold:
        return DiscrepancyCase.MODEL_TP if gold else DiscrepancyCase.MODEL_TN
    return DiscrepancyCase.HUMAN_TP if gold else DiscrepancyCase.HUMAN_TN


@dataclass(frozen=True)
class DiscrepancyRow:
    entity_id: str
    counts: Mapping[DiscrepancyCase, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def discrepancy_table(
    preds: LabelSets,
    annotator: LabelSets,
    gold: LabelSets,
    entities: Sequence[str],
) -> list[DiscrepancyRow]:
    """Per-entity case counts over every document, one row per entity.

    All three label sources must cover exactly the same documents; the
    per-row counts always sum to the document count.
    """
    doc_ids = set(gold)
    for name, labels in (("predictions", preds), ("annotator", annotator)):
        if set(labels) != doc_ids:
            missing = sorted(doc_ids ^ set(labels))[:3]
            raise CorpusError(
                f"{name} cover different documents than gold "
                f"(first differences: {missing})"
            )
    rows = []
    for entity_id in entities:
        counts = {case: 0 for case in DiscrepancyCase}
        for doc_id in doc_ids:
            case = classify_discrepancy(
                entity_id in preds[doc_id],
                entity_id in annotator[doc_id],
                entity_id in gold[doc_id],
            )
            counts[case] += 1
        rows.append(DiscrepancyRow(entity_id=entity_id, counts=counts))
    return rows


def _format_recall(value: float | None) -> str:
    return "-" if value is None else f"{value:.6f}"


def render_recall_rows(rows: Sequence[RecallRow], fmt: str) -> str:
    """Render recall rows as csv, tsv, or per-group plot-data blocks."""
    if not rows:
        raise ConfigError("no rows to emit")
    if fmt in ("csv", "tsv"):
        buf = _io.StringIO()
        writer = csv.writer(
            buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n"
        )
        writer.writerow(["group", "bin_threshold", "n_entities", "recall"])
        for row in rows:
            writer.writerow(
                [row.group, row.bin_threshold, row.n_entities,
                 _format_recall(row.recall)]
            )
        return buf.getvalue()
    if fmt == "plot-data":
        blocks = []
        seen: list[str] = []
        for row in rows:
            if row.group not in seen:
                seen.append(row.group)
        for group in seen:
            lines = [f"# group {group}"]
            for row in rows:
                if row.group == group:
                    lines.append(
                        f"{row.bin_threshold}\t{_format_recall(row.recall)}"
                    )
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def emit_report(rows: Sequence[RecallRow], fmt: str, path: str | Path) -> None:
    Path(path).write_bytes(render_recall_rows(rows, fmt).encode("utf-8"))


def render_group_stats(
    rows: Sequence[tuple[str, int, int]], fmt: str = "csv"
) -> str:
    if fmt not in ("csv", "tsv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    buf = _io.StringIO()
    writer = csv.writer(
        buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n"
    )
    writer.writerow(["group", "n_terms", "n_instances"])
    for group, n_terms, n_instances in rows:
        writer.writerow([group, n_terms, n_instances])
    return buf.getvalue()


def render_discrepancy_rows(rows: Sequence[DiscrepancyRow], fmt: str = "csv") -> str:
    if not rows:
        raise ConfigError("no rows to emit")
    if fmt not in ("csv", "tsv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    buf = _io.StringIO()
    writer = csv.writer(
        buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n"
    )
    writer.writerow(["entity"] + [case.value for case in CASE_ORDER])
    for row in rows:
        writer.writerow([row.entity_id] + [row.counts[c] for c in CASE_ORDER])
    return buf.getvalue()


def emit_discrepancy_report(
    rows: Sequence[DiscrepancyRow], fmt: str, path: str | Path
) -> None:
    Path(path).write_bytes(render_discrepancy_rows(rows, fmt).encode("utf-8"))
