"""Distant-supervision annotator.

Every contiguous token window of length 1..max_term_len is looked up in
the normalized lexicon; the entities behind exact hits become the
document's label set. Overlapping and nested matches all count, and set
semantics collapse duplicates. There is no suppression, disambiguation or
negation handling: "no headache" labels headache.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .errors import CorpusError
from .kb import NormalizedLexicon
from .textnorm import NormalizedDocument

Span = tuple[int, int]


@dataclass(frozen=True)
class LabelSet:
    doc_id: str
    entity_ids: frozenset[str]


@dataclass(frozen=True)
class LabeledCorpus:
    """Per-document label sets, sorted by doc_id, with provenance."""

    pairs: tuple[tuple[NormalizedDocument, LabelSet], ...]
    lexicon_version: str = ""
    pipeline_version: str = ""
    docs_per_sec: float = 0.0

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def labels(self) -> dict[str, frozenset[str]]:
        return {ls.doc_id: ls.entity_ids for _, ls in self.pairs}


def candidate_windows(tokens: Sequence[str], max_len: int) -> Iterator[Span]:
    """Yield every span of length 1..=min(max_len, n), by start then length."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    n = len(tokens)
    for start in range(n):
        for length in range(1, min(max_len, n - start) + 1):
            yield (start, start + length)


def match_spans(
    tokens: Sequence[str], lexicon: NormalizedLexicon
) -> list[tuple[int, int, str]]:
    """All (start, end, entity_id) lexicon hits, by start then length.

    Equivalent to probing every candidate window, but windows whose first
    token starts no lexicon key are pruned via the first-token index.
    """
    hits = []
    n = len(tokens)
    index = lexicon.first_token_lengths
    entries = lexicon.entries
    for start in range(n):
        lengths = index.get(tokens[start])
        if lengths is None:
            continue
        for length in lengths:
            end = start + length
            if end > n:
                break
            entity = entries.get(tuple(tokens[start:end]))
            if entity is not None:
                hits.append((start, end, entity))
    return hits


def label_document(doc: NormalizedDocument, lexicon: NormalizedLexicon) -> LabelSet:
    """Set of entities whose synonym matches some window of the document."""
    return LabelSet(
        doc_id=doc.doc_id,
        entity_ids=frozenset(e for _, _, e in match_spans(doc.tokens, lexicon)),
    )


def label_corpus(
    docs: Iterable[NormalizedDocument],
    lexicon: NormalizedLexicon,
    workers: int = 1,
) -> LabeledCorpus:
    """Label a corpus; output is sorted by doc_id regardless of input order.

    Workers share the read-only lexicon; per-document labeling is pure, so
    any worker count produces bit-identical output to a serial run.
    """
    docs = list(docs)
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
    started = time.perf_counter()
    if workers <= 1:
        results = [label_document(doc, lexicon) for doc in docs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda d: label_document(d, lexicon), docs))
    elapsed = time.perf_counter() - started
    by_id = {ls.doc_id: ls for ls in results}
    doc_by_id = {doc.doc_id: doc for doc in docs}
    pairs = tuple(
        (doc_by_id[doc_id], by_id[doc_id]) for doc_id in sorted(by_id)
    )
    return LabeledCorpus(
        pairs=pairs,
        lexicon_version=lexicon.version,
        pipeline_version=lexicon.pipeline_version,
        docs_per_sec=len(docs) / elapsed if elapsed > 0 else float(len(docs)),
    )


class DistantLabeler(BaseEstimator, TransformerMixin):
    """Estimator wrapper around label_document for pipeline composition.

    Input is a sequence of token lists (TextNormalizer output) or
    NormalizedDocument instances; output is one entity-id set per input.
    """

    def __init__(self, lexicon: NormalizedLexicon | None = None):
        self.lexicon = lexicon

    def fit(self, X=None, y=None):
        if self.lexicon is None:
            raise ValueError("DistantLabeler requires a lexicon")
        return self

    def predict(self, X) -> list[frozenset[str]]:
        self.fit()
        out = []
        for i, item in enumerate(X):
            doc = (
                item
                if isinstance(item, NormalizedDocument)
                else NormalizedDocument(doc_id=str(i), tokens=tuple(item))
            )
            out.append(label_document(doc, self.lexicon).entity_ids)
        return out

    def transform(self, X) -> list[frozenset[str]]:
        return self.predict(X)
