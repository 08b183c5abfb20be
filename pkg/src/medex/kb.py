"""Knowledge base loading, entity selection, and the matching lexicon.

The KB file is line-delimited JSON: one object per line with fields
``id``, ``name``, ``group`` and ``synonyms``; ``#`` lines are comments.
Synonym collisions across entities are hard errors at every stage --
labeling is only well-defined if the normalized-synonym -> entity map is
injective.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import KBFormatError, SynonymCollisionError
from .io import ensure_parent, read_jsonl
from .textnorm import NormalizationPipeline, TokenSeq, normalize_tokens

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Entity:
    entity_id: str
    canonical_name: str
    group: str
    synonyms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.entity_id:
            raise KBFormatError("entity with empty id")
        if not self.synonyms:
            raise KBFormatError(f"entity {self.entity_id!r} has no synonyms")
        if any(not s for s in self.synonyms):
            raise KBFormatError(f"entity {self.entity_id!r} has an empty synonym")
        if self.canonical_name not in self.synonyms:
            raise KBFormatError(
                f"entity {self.entity_id!r}: canonical name must be listed "
                "among the synonyms"
            )


@dataclass(frozen=True)
class KnowledgeBase:
    entities: tuple[Entity, ...]
    version: str = ""

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        for ent in self.entities:
            if ent.entity_id in seen:
                raise KBFormatError(f"duplicate entity id {ent.entity_id!r}")
            seen[ent.entity_id] = ent.entity_id
        # Cheap pre-pipeline collision check: case/whitespace-folded synonyms
        # must already be unique across entities. The pipeline-aware check
        # happens again in build_lexicon.
        owner: dict[str, str] = {}
        for ent in self.entities:
            for syn in ent.synonyms:
                folded = " ".join(syn.lower().split())
                prev = owner.get(folded)
                if prev is not None and prev != ent.entity_id:
                    raise SynonymCollisionError(
                        f"synonym {syn!r} is shared by entities {prev!r} "
                        f"and {ent.entity_id!r}"
                    )
                owner[folded] = ent.entity_id

    def __len__(self) -> int:
        return len(self.entities)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(ent.entity_id for ent in self.entities)

    @property
    def groups(self) -> dict[str, str]:
        return {ent.entity_id: ent.group for ent in self.entities}

    def restrict(self, keep: Iterable[str]) -> "KnowledgeBase":
        """New KB with only the given entity ids, original order preserved."""
        keep_set = set(keep)
        return KnowledgeBase(
            entities=tuple(e for e in self.entities if e.entity_id in keep_set),
            version=self.version,
        )


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load and validate a knowledge base from its line-JSON file."""
    entities = []
    for lineno, obj in read_jsonl(path):
        try:
            synonyms = [str(s) for s in obj["synonyms"]]
            name = str(obj["name"])
            if name not in synonyms:
                synonyms.append(name)
            entities.append(
                Entity(
                    entity_id=str(obj["id"]),
                    canonical_name=name,
                    group=str(obj["group"]),
                    synonyms=tuple(synonyms),
                )
            )
        except KeyError as exc:
            raise KBFormatError(f"{path}:{lineno}: missing field {exc}") from exc
        except KBFormatError as exc:
            raise KBFormatError(f"{path}:{lineno}: {exc}") from exc
    digest = hashlib.sha256()
    for ent in entities:
        digest.update(
            json.dumps(
                [ent.entity_id, ent.canonical_name, ent.group, list(ent.synonyms)],
                ensure_ascii=False,
            ).encode("utf-8")
        )
    return KnowledgeBase(entities=tuple(entities), version=digest.hexdigest()[:12])


@dataclass(frozen=True)
class NormalizedLexicon:
    """Exact-match lexicon: normalized token sequence -> entity id.

    ``first_token_lengths`` indexes key lengths by first token so the
    matcher only hashes windows that can possibly match; it is an
    optimization and carries no semantics of its own.
    """

    entries: Mapping[TokenSeq, str]
    max_term_len: int
    kb_version: str = ""
    pipeline_version: str = ""
    first_token_lengths: Mapping[str, tuple[int, ...]] = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.max_term_len < 1:
            raise ValueError("max_term_len must be >= 1")
        for key in self.entries:
            if not 1 <= len(key) <= self.max_term_len:
                raise ValueError(f"lexicon key {key!r} exceeds max_term_len")
        if self.first_token_lengths is None:
            index: dict[str, set[int]] = {}
            for key in self.entries:
                index.setdefault(key[0], set()).add(len(key))
            object.__setattr__(
                self,
                "first_token_lengths",
                {tok: tuple(sorted(lengths)) for tok, lengths in index.items()},
            )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def version(self) -> str:
        payload = json.dumps(
            sorted((" ".join(k), v) for k, v in self.entries.items()),
            ensure_ascii=False,
        )
        content = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
        return f"{self.kb_version}-{self.pipeline_version}-{content}"


def build_lexicon(
    kb: KnowledgeBase,
    pipeline: NormalizationPipeline,
    max_term_len: int = 7,
) -> NormalizedLexicon:
    """Normalize every synonym and index it by its token sequence.

    Synonyms longer than ``max_term_len`` tokens cannot ever be matched by
    the window enumeration, so they are rejected with a warning naming
    them. A post-normalization collision between entities is an error.
    """
    if max_term_len < 1:
        raise ValueError("max_term_len must be >= 1")
    entries: dict[TokenSeq, str] = {}
    skipped: list[tuple[str, str]] = []
    for ent in kb.entities:
        for syn in ent.synonyms:
            key = normalize_tokens(syn, pipeline)
            if not key:
                skipped.append((ent.entity_id, syn))
                continue
            if len(key) > max_term_len:
                skipped.append((ent.entity_id, syn))
                continue
            prev = entries.get(key)
            if prev is not None and prev != ent.entity_id:
                raise SynonymCollisionError(
                    f"synonyms of {prev!r} and {ent.entity_id!r} both "
                    f"normalize to {' '.join(key)!r}"
                )
            entries[key] = ent.entity_id
    if skipped:
        logger.warning(
            "%d synonym(s) excluded from lexicon (empty or longer than %d tokens): %s",
            len(skipped),
            max_term_len,
            "; ".join(f"{eid}:{syn!r}" for eid, syn in skipped),
        )
    return NormalizedLexicon(
        entries=entries,
        max_term_len=max_term_len,
        kb_version=kb.version,
        pipeline_version=pipeline.version,
    )


def select_top_entities(
    kb: KnowledgeBase, train_counts: Mapping[str, int], k: int
) -> KnowledgeBase:
    """Keep the k entities with highest train counts (ties: lexicographic id)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        kb.entities, key=lambda e: (-train_counts.get(e.entity_id, 0), e.entity_id)
    )
    return kb.restrict(e.entity_id for e in ranked[:k])


def filter_min_frequency(
    kb: KnowledgeBase, test_counts: Mapping[str, int], min_count: int
) -> KnowledgeBase:
    """Keep entities whose test count is at least min_count (inclusive)."""
    return kb.restrict(
        e.entity_id
        for e in kb.entities
        if test_counts.get(e.entity_id, 0) >= min_count
    )


def save_lexicon(lexicon: NormalizedLexicon, pipeline: NormalizationPipeline, path: str | Path) -> None:
    """Serialize the lexicon together with its pipeline tables.

    Bundling the tables means downstream labeling cannot accidentally
    normalize with a different pipeline than the lexicon was built with.
    """
    doc = {
        "format": "medex-lexicon",
        "max_term_len": lexicon.max_term_len,
        "kb_version": lexicon.kb_version,
        "pipeline_version": lexicon.pipeline_version,
        "pipeline": {
            "abbreviations": {
                " ".join(k): " ".join(v) for k, v in pipeline.abbreviations.items()
            },
            "lemmas": dict(pipeline.lemmas),
        },
        "entries": {" ".join(k): v for k, v in lexicon.entries.items()},
    }
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")


def load_lexicon(path: str | Path) -> tuple[NormalizedLexicon, NormalizationPipeline]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "medex-lexicon":
        raise KBFormatError(f"{path}: not a medex lexicon file")
    pipeline = NormalizationPipeline.from_tables(
        doc["pipeline"]["abbreviations"], doc["pipeline"]["lemmas"]
    )
    lexicon = NormalizedLexicon(
        entries={tuple(k.split()): v for k, v in doc["entries"].items()},
        max_term_len=int(doc["max_term_len"]),
        kb_version=doc.get("kb_version", ""),
        pipeline_version=doc.get("pipeline_version", ""),
    )
    return lexicon, pipeline
