"""Deterministic synthetic corpus generator.

Documents are built from plain-text templates, one per line, with
``{entity:GROUP}`` slots. Each document instantiates exactly one
template; its slots are filled with entity mentions drawn from a
Zipf-distributed frequency plan, and each mention may be corrupted by
one of three noise models (typo, filler insertion, unseen surface
form). Gold labels record every injected entity; clean labels record
only mentions whose final surface still normalizes to a lexicon form of
the injected entity, so the clean/gold gap is exactly the noised
mentions.

The zero-noise closure property (dictionary labeling on a noise-free
corpus reproduces gold labels exactly) additionally requires KB and
template data where no synonym window of one entity appears inside
another entity's mention or the template filler text; the bundled
sample data and test fixtures are built that way.

Everything is driven by one seeded generator in a fixed draw order, so
an identical config reproduces the corpus byte for byte.
"""

from __future__ import annotations

import hashlib
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, TemplateError
from .kb import KnowledgeBase, NormalizedLexicon, build_lexicon
from .textnorm import NormalizationPipeline, normalize_tokens

_SLOT_RE = re.compile(r"\{entity:([^{}]*)\}")

# Inserted between mention tokens by the insertion noise model. Kept
# deliberately generic; sample KBs must not use these words in synonyms.
FILLER_WORDS = ("very", "rather", "slightly", "notably")

# Clean-mention checks normalize bare surfaces, without abbreviation or
# lemma tables: cleanliness is a property of the literal surface form.
_IDENTITY_PIPELINE = NormalizationPipeline(abbreviations={}, lemmas={})


@dataclass(frozen=True)
class NoiseConfig:
    """Per-mention corruption probabilities. At most one model fires per
    mention, drawn in the order unseen form, insertion, typo."""

    typo_rate: float = 0.0
    insertion_rate: float = 0.0
    unseen_form_rate: float = 0.0

    def __post_init__(self):
        for name in ("typo_rate", "insertion_rate", "unseen_form_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {rate}")


@dataclass(frozen=True)
class Template:
    """One template line: literal parts interleaved with group slots.

    parts has exactly one more element than groups; the rendered text is
    parts[0] + surface_0 + parts[1] + surface_1 + ... + parts[-1].
    """

    index: int
    groups: tuple[str, ...]
    parts: tuple[str, ...]

    def __post_init__(self):
        if len(self.parts) != len(self.groups) + 1:
            raise TemplateError(
                f"template {self.index}: {len(self.parts)} parts for "
                f"{len(self.groups)} slots"
            )

    @property
    def n_slots(self) -> int:
        return len(self.groups)

    def render(self, surfaces: Sequence[str]) -> str:
        if len(surfaces) != self.n_slots:
            raise TemplateError(
                f"template {self.index} needs {self.n_slots} surfaces, "
                f"got {len(surfaces)}"
            )
        out = [self.parts[0]]
        for surface, part in zip(surfaces, self.parts[1:]):
            out.append(surface)
            out.append(part)
        return "".join(out)


def parse_templates(lines: Iterable[str]) -> tuple[Template, ...]:
    """Parse template lines; blank lines and # comments are skipped."""
    templates = []
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        groups = tuple(m.group(1) for m in _SLOT_RE.finditer(line))
        for group in groups:
            if not group.strip():
                raise TemplateError(f"empty slot group in template: {line!r}")
        parts = tuple(_SLOT_RE.split(line)[::2])
        templates.append(Template(index=len(templates), groups=groups, parts=parts))
    if not templates:
        raise TemplateError("no templates found")
    return tuple(templates)


def load_templates(path: str | Path) -> tuple[Template, ...]:
    return parse_templates(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass(frozen=True)
class GenConfig:
    seed: int
    n_docs: int
    entities_min: int
    entities_max: int
    templates: tuple[Template, ...]
    zipf_exponent: float = 1.2
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.n_docs < 1:
            raise ConfigError(f"n_docs must be >= 1, got {self.n_docs}")
        if not 0 <= self.entities_min <= self.entities_max:
            raise ConfigError(
                f"need 0 <= entities_min <= entities_max, got "
                f"{self.entities_min}..{self.entities_max}"
            )
        if self.zipf_exponent <= 0:
            raise ConfigError(
                f"zipf_exponent must be > 0, got {self.zipf_exponent}"
            )
        if not self.templates:
            raise ConfigError("no templates configured")


@dataclass(frozen=True)
class Mention:
    doc_id: str
    entity: str
    surface: str
    noised: bool


@dataclass(frozen=True)
class GoldCorpus:
    """Generated documents plus both label views.

    gold_labels hold every injected entity; clean_labels only those with
    at least one mention still in exact lexicon form. template_ids maps
    each document to the template it instantiated (split audits rely on
    this).
    """

    documents: tuple[tuple[str, str], ...]
    gold_labels: Mapping[str, frozenset[str]]
    clean_labels: Mapping[str, frozenset[str]]
    mentions: tuple[Mention, ...]
    template_ids: Mapping[str, int]

    def __post_init__(self):
        for doc_id, clean in self.clean_labels.items():
            if not clean <= self.gold_labels.get(doc_id, frozenset()):
                raise ConfigError(
                    f"{doc_id}: clean labels are not a subset of gold labels"
                )

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(doc_id for doc_id, _ in self.documents)


def frequency_plan(kb: KnowledgeBase, config: GenConfig) -> dict[str, int]:
    """Target mention count per entity, Zipf over a seed-hashed ranking.

    Rank 1 gets the most mass; total mass is n_docs times the midpoint
    of entities_per_doc. Individual counts are rounded, so the sum can
    drift from the target by at most one per entity.
    """
    if not kb.entities:
        raise ConfigError("empty knowledge base")

    def rank_key(entity_id: str) -> tuple[str, str]:
        digest = hashlib.blake2b(
            f"{config.seed}|{entity_id}".encode("utf-8"), digest_size=8
        ).hexdigest()
        return (digest, entity_id)

    ranked = sorted(kb.ids, key=rank_key)
    total = round(config.n_docs * (config.entities_min + config.entities_max) / 2)
    weights = [(rank + 1) ** -config.zipf_exponent for rank in range(len(ranked))]
    mass = sum(weights)
    return {eid: round(total * w / mass) for eid, w in zip(ranked, weights)}


class _GroupDecks:
    """Shuffled per-group queues of entity ids honoring the plan counts.

    When a group's queue runs dry it is rebuilt (reshuffled) from the
    plan, falling back to one-of-each when the plan gave the group no
    mass at all.
    """

    def __init__(self, kb: KnowledgeBase, plan: Mapping[str, int],
                 rng: np.random.Generator):
        self._rng = rng
        self._members: dict[str, list[str]] = {}
        self._counts: dict[str, list[str]] = {}
        for entity in sorted(kb.entities, key=lambda e: e.entity_id):
            self._members.setdefault(entity.group, []).append(entity.entity_id)
            self._counts.setdefault(entity.group, [])
            self._counts[entity.group] += (
                [entity.entity_id] * plan.get(entity.entity_id, 0)
            )
        self._queues: dict[str, deque[str]] = {}

    def _refill(self, group: str) -> deque[str]:
        items = list(self._counts[group]) or list(self._members[group])
        self._rng.shuffle(items)
        return deque(items)

    def draw(self, group: str) -> str:
        if group not in self._members:
            raise TemplateError(f"template references unknown group {group!r}")
        queue = self._queues.get(group)
        if not queue:
            queue = self._queues[group] = self._refill(group)
        return queue.popleft()


def _surface_in_lexicon(tokens: Sequence[str], lexicon: NormalizedLexicon) -> str | None:
    normed = normalize_tokens(" ".join(tokens), _IDENTITY_PIPELINE)
    return lexicon.entries.get(tuple(normed))


def _apply_typo(tokens: list[str], rng: np.random.Generator) -> list[str] | None:
    candidates = [i for i, t in enumerate(tokens) if len(t) >= 2]
    if not candidates:
        return None
    i = candidates[int(rng.integers(len(candidates)))]
    word = tokens[i]
    if len(word) >= 3 and rng.random() < 0.5:
        pos = int(rng.integers(len(word) - 1))
        word = word[:pos] + word[pos + 1] + word[pos] + word[pos + 2 :]
    else:
        pos = int(rng.integers(len(word)))
        word = word[:pos] + word[pos + 1 :]
    out = list(tokens)
    out[i] = word
    return out


def _apply_insertion(tokens: list[str], rng: np.random.Generator) -> list[str] | None:
    if len(tokens) < 2:
        return None
    gap = 1 + int(rng.integers(len(tokens) - 1))
    count = 1 + int(rng.integers(2))
    fillers = [FILLER_WORDS[int(rng.integers(len(FILLER_WORDS)))] for _ in range(count)]
    return tokens[:gap] + fillers + tokens[gap:]


def _apply_unseen_form(tokens: list[str], rng: np.random.Generator) -> list[str]:
    if len(tokens) >= 2:
        out = list(tokens)
        out[0], out[1] = out[1], out[0]
        return out
    return [tokens[0] + "us"]


def _force_out_of_lexicon(
    tokens: list[str], lexicon: NormalizedLexicon
) -> list[str]:
    # Noise must break matching; extend the last token until it does.
    out = list(tokens)
    while _surface_in_lexicon(out, lexicon) is not None:
        out[-1] = out[-1] + "x"
    return out


def _noise_mention(
    tokens: list[str],
    noise: NoiseConfig,
    lexicon: NormalizedLexicon,
    rng: np.random.Generator,
) -> tuple[list[str], bool]:
    """Maybe corrupt one mention. Returns (tokens, noise applied).

    Exactly one model is attempted per mention; a model that does not
    apply (single-token mention for insertion, no typo-able token)
    leaves the mention untouched. Applied noise is then forced out of
    the lexicon so a noised mention never counts as clean.
    """
    draws = rng.random(3)
    mutated: list[str] | None = None
    if draws[0] < noise.unseen_form_rate:
        mutated = _apply_unseen_form(tokens, rng)
    elif draws[1] < noise.insertion_rate:
        mutated = _apply_insertion(tokens, rng)
    elif draws[2] < noise.typo_rate:
        mutated = _apply_typo(tokens, rng)
    if mutated is None:
        return tokens, False
    return _force_out_of_lexicon(mutated, lexicon), True


def generate_corpus(kb: KnowledgeBase, config: GenConfig) -> GoldCorpus:
    """Instantiate n_docs template documents with planned entity mentions."""
    for template in config.templates:
        for group in template.groups:
            if group not in set(kb.groups.values()):
                raise TemplateError(
                    f"template {template.index} references unknown group "
                    f"{group!r}"
                )
    eligible = [
        t for t in config.templates
        if config.entities_min <= t.n_slots <= config.entities_max
    ]
    if not eligible:
        raise TemplateError(
            f"no template has between {config.entities_min} and "
            f"{config.entities_max} slots"
        )
    lexicon = build_lexicon(kb, _IDENTITY_PIPELINE)
    synonyms = {e.entity_id: sorted(e.synonyms) for e in kb.entities}
    plan = frequency_plan(kb, config)
    rng = np.random.default_rng(config.seed)
    decks = _GroupDecks(kb, plan, rng)
    width = max(5, len(str(config.n_docs - 1)))
    documents = []
    gold: dict[str, frozenset[str]] = {}
    clean: dict[str, frozenset[str]] = {}
    mentions: list[Mention] = []
    template_ids: dict[str, int] = {}
    for i in range(config.n_docs):
        doc_id = f"d{i:0{width}d}"
        template = eligible[int(rng.integers(len(eligible)))]
        surfaces = []
        doc_gold = set()
        doc_clean = set()
        for group in template.groups:
            entity_id = decks.draw(group)
            forms = synonyms[entity_id]
            surface = forms[int(rng.integers(len(forms)))]
            tokens, noised = _noise_mention(
                surface.split(), config.noise, lexicon, rng
            )
            rendered = " ".join(tokens)
            is_clean = (
                not noised
                and _surface_in_lexicon(tokens, lexicon) == entity_id
            )
            doc_gold.add(entity_id)
            if is_clean:
                doc_clean.add(entity_id)
            surfaces.append(rendered)
            mentions.append(Mention(doc_id, entity_id, rendered, noised))
        documents.append((doc_id, template.render(surfaces)))
        gold[doc_id] = frozenset(doc_gold)
        clean[doc_id] = frozenset(doc_clean)
        template_ids[doc_id] = template.index
    return GoldCorpus(
        documents=tuple(documents),
        gold_labels=gold,
        clean_labels=clean,
        mentions=tuple(mentions),
        template_ids=template_ids,
    )


def split_corpus(
    corpus: GoldCorpus, train_fraction: float, seed: int
) -> tuple[GoldCorpus, GoldCorpus]:
    """Partition documents with template-disjoint sides.

    Greedy assignment of whole template families toward the requested
    fraction: families are processed largest first and each goes to the
    side furthest below its target, so the split is exact whenever the
    family sizes permit and template sets never overlap across sides.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(
            f"train_fraction must be in (0, 1), got {train_fraction}"
        )
    by_template: dict[int, list[str]] = {}
    for doc_id, tid in corpus.template_ids.items():
        by_template.setdefault(tid, []).append(doc_id)
    n_docs = len(corpus.documents)
    target_train = round(n_docs * train_fraction)
    rng = np.random.default_rng(seed)
    order = sorted(by_template, key=lambda t: (-len(by_template[t]), t))
    # Seeded jitter so equal-sized families do not always land on the
    # same side across different seeds.
    jitter = {tid: float(rng.random()) for tid in order}
    order.sort(key=lambda t: (-len(by_template[t]), jitter[t]))
    train_ids: set[str] = set()
    test_ids: set[str] = set()
    n_train = 0
    n_test = 0
    for tid in order:
        docs = by_template[tid]
        train_gap = target_train - n_train
        test_gap = (n_docs - target_train) - n_test
        if train_gap >= test_gap:
            train_ids.update(docs)
            n_train += len(docs)
        else:
            test_ids.update(docs)
            n_test += len(docs)
    if not train_ids or not test_ids:
        raise ConfigError(
            "split produced an empty side; need at least two template families"
        )
    return _subset(corpus, train_ids), _subset(corpus, test_ids)


def _subset(corpus: GoldCorpus, keep: set[str]) -> GoldCorpus:
    return GoldCorpus(
        documents=tuple(d for d in corpus.documents if d[0] in keep),
        gold_labels={k: v for k, v in corpus.gold_labels.items() if k in keep},
        clean_labels={k: v for k, v in corpus.clean_labels.items() if k in keep},
        mentions=tuple(m for m in corpus.mentions if m.doc_id in keep),
        template_ids={k: v for k, v in corpus.template_ids.items() if k in keep},
    )
