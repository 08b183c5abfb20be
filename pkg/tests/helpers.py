"""Shared fixture builders: tiny hand-written KBs and synthetic-corpus inputs.

Keep these boring and fully deterministic; anything clever belongs in the
tests themselves.
"""

from __future__ import annotations

import json
from pathlib import Path

from medex.kb import Entity, KnowledgeBase

GROUPS3 = ("symptom", "disease", "drug")

# one stem per entity, so no two entities ever share a surface token
STEMS = [
    "algia", "brux", "cardi", "derm", "emesis", "febris", "gastritis", "hemat",
    "icter", "kines", "lipo", "myel", "nephro", "osteo", "pleur", "quin",
    "rhino", "sclero", "thromb", "uvul", "vaso", "xero", "zoster", "angio",
    "bronch", "cyst", "duoden", "enter", "fibro", "gingiv", "hepat", "ischem",
    "kerat", "laryng", "mening", "neuro", "ocul", "palat", "quadri", "ren",
    "splen", "tendo", "uln", "ventric", "wheez", "xiph", "yersin", "zygom",
    "aden", "blephar",
]


def coded_kb(k: int = 50, version: str = "fixture") -> KnowledgeBase:
    """KB with per-entity unique vocabulary and three semantic groups.

    Every synonym token embeds the entity index, so cross-entity window
    collisions are impossible and distant labels coincide with injected
    gold labels on noise-free text.
    """
    if k > len(STEMS):
        raise ValueError(f"at most {len(STEMS)} coded entities available")
    entities = []
    for i in range(k):
        name = f"{STEMS[i]}{i:02d}"
        entities.append(
            Entity(
                entity_id=f"e{i:02d}",
                canonical_name=name,
                group=GROUPS3[i % len(GROUPS3)],
                synonyms=(name, f"acute {name}", f"{name} of grade {i % 4 + 1}"),
            )
        )
    return KnowledgeBase(entities=tuple(entities), version=version)


# Scaffold words are drawn from one shared pool that every template reuses,
# so a template-disjoint split cannot strand vocabulary on the test side.
SHARED_TEMPLATES = [
    "patient reports {entity:symptom} with {entity:disease} treated using {entity:drug}",
    "visit notes {entity:symptom} and {entity:symptom} ongoing {entity:disease} continue {entity:drug}",
    "review shows {entity:disease} with {entity:symptom} treated using {entity:drug} and {entity:drug}",
    "patient notes ongoing {entity:symptom} stable {entity:disease} continue {entity:drug}",
    "reports {entity:symptom} and stable {entity:disease} treated using {entity:drug}",
    "visit shows {entity:symptom} with ongoing {entity:disease} continue {entity:drug} and {entity:drug}",
    "patient review notes {entity:symptom} for {entity:disease} using {entity:drug}",
    "notes {entity:symptom} and {entity:symptom} with {entity:disease} using {entity:drug}",
    "stable visit reports {entity:disease} and {entity:symptom} continue {entity:drug}",
    "review for {entity:symptom} shows {entity:disease} treated with {entity:drug}",
    "ongoing {entity:symptom} and {entity:disease} stable using {entity:drug}",
    "patient shows {entity:symptom} with {entity:disease} and continue {entity:drug}",
    "visit review reports ongoing {entity:symptom} for {entity:disease} with {entity:drug}",
    "notes stable {entity:symptom} after {entity:disease} treated using {entity:drug}",
    "patient reports {entity:symptom} and {entity:symptom} for {entity:disease} continue {entity:drug}",
    "review notes {entity:disease} with ongoing {entity:symptom} and {entity:drug} using {entity:drug}",
]


def tiny_kb() -> KnowledgeBase:
    """Six entities with messy multi-token synonyms for matcher tests."""
    e = [
        Entity("c01", "chest pain", "symptom",
               ("chest pain", "pain in chest", "thoracic pain")),
        Entity("c02", "myocardial infarction", "disease",
               ("myocardial infarction", "heart attack", "mi")),
        Entity("c03", "aspirin", "drug", ("aspirin", "acetylsalicylic acid")),
        Entity("c04", "fever", "symptom", ("fever", "high temperature", "pyrexia")),
        Entity("c05", "diabetes mellitus", "disease",
               ("diabetes mellitus", "diabetes", "dm")),
        Entity("c06", "shortness of breath", "symptom",
               ("shortness of breath", "dyspnea", "sob")),
    ]
    return KnowledgeBase(entities=tuple(e), version="tiny")


def write_kb_jsonl(path: Path, kb: KnowledgeBase) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for ent in kb.entities:
            fh.write(json.dumps({
                "id": ent.entity_id,
                "name": ent.canonical_name,
                "group": ent.group,
                "synonyms": list(ent.synonyms),
            }, ensure_ascii=False) + "\n")
    return path


def write_lines(path: Path, lines) -> Path:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


RUN_TOML_SMALL = """\
seed = 5

[kb]
path = "kb.jsonl"

[gen]
n_docs = {n_docs}
template_file = "templates.txt"

[model]
d_model = 8
n_layers = 1
n_heads = 2
ffn_dim = 16
max_seq_len = 24

[train]
learning_rate = 0.001
batch_size = 10
epochs = {epochs}

[eval]
bins = [0, 5]
discrepancy_entities = 3
"""


def make_workspace(root: Path, k: int = 6, n_docs: int = 40,
                   epochs: int = 1) -> Path:
    """Directory with a small kb.jsonl, templates.txt and run.toml."""
    root.mkdir(parents=True, exist_ok=True)
    write_kb_jsonl(root / "kb.jsonl", coded_kb(k))
    write_lines(root / "templates.txt", SHARED_TEMPLATES[:6])
    (root / "run.toml").write_text(
        RUN_TOML_SMALL.format(n_docs=n_docs, epochs=epochs), encoding="utf-8"
    )
    return root
