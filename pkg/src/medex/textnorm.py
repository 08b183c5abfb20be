"""Deterministic text normalization shared by documents and lexicon entries.

The pipeline is fixed: lowercase -> tokenize -> expand abbreviations ->
lemmatize. Both sides of the matcher (documents and knowledge-base
synonyms) must go through the same pipeline instance, otherwise exact
matching silently breaks. Normalization is pure and idempotent: feeding
the joined output back in is a fixed point.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

from .errors import TableFormatError
from .io import read_tsv_pairs

TokenSeq = tuple[str, ...]


def _is_punct(char: str) -> bool:
    return unicodedata.category(char).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split lowercased text on whitespace, stripping edge punctuation.

    Inner punctuation is preserved ("t-37.2" stays one token);
    punctuation-only fragments are dropped.
    """
    tokens = []
    for fragment in text.split():
        start, end = 0, len(fragment)
        while start < end and _is_punct(fragment[start]):
            start += 1
        while end > start and _is_punct(fragment[end - 1]):
            end -= 1
        if end > start:
            tokens.append(fragment[start:end])
    return tokens


def expand_abbreviations(
    tokens: list[str], table: dict[TokenSeq, TokenSeq]
) -> list[str]:
    """Replace abbreviation key sequences by their expansions.

    Single pass, leftmost-longest, non-overlapping: at each position the
    longest matching key wins and scanning resumes after it. Expansions
    are not rescanned.
    """
    if not table:
        return list(tokens)
    max_key = max(len(key) for key in table)
    out: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        replaced = False
        for length in range(min(max_key, n - i), 0, -1):
            key = tuple(tokens[i : i + length])
            if key in table:
                out.extend(table[key])
                i += length
                replaced = True
                break
        if not replaced:
            out.append(tokens[i])
            i += 1
    return out


def _check_token(kind: str, token: str) -> None:
    if token != token.lower():
        raise TableFormatError(f"{kind} token {token!r} is not lowercase")
    retok = tokenize(token)
    if retok != [token]:
        raise TableFormatError(
            f"{kind} token {token!r} does not survive tokenization "
            f"(becomes {retok!r}); normalization would not be idempotent"
        )


@dataclass(frozen=True)
class NormalizationPipeline:
    """Immutable abbreviation and lemma tables with validated closure.

    Loading rejects tables that would break idempotence: abbreviation
    expansions must not contain abbreviation keys, and every lemma value
    must be a fixed point of the lemma map.
    """

    abbreviations: dict[TokenSeq, TokenSeq] = field(default_factory=dict)
    lemmas: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key, expansion in self.abbreviations.items():
            if not key or not expansion:
                raise TableFormatError("empty abbreviation key or expansion")
            for token in key:
                _check_token("abbreviation key", token)
            for token in expansion:
                _check_token("abbreviation expansion", token)
        for key, expansion in self.abbreviations.items():
            hit = expand_abbreviations(list(expansion), self.abbreviations)
            if hit != list(expansion):
                raise TableFormatError(
                    f"expansion of {' '.join(key)!r} contains another "
                    "abbreviation; expansions must be closed under one pass"
                )
        for surface, lemma in self.lemmas.items():
            _check_token("lemma surface", surface)
            _check_token("lemma value", lemma)
            if self.lemmas.get(lemma, lemma) != lemma:
                raise TableFormatError(
                    f"lemma value {lemma!r} is itself remapped; lemma values "
                    "must be fixed points"
                )
        # Tokens the pipeline can emit (lemma values, lemmatized expansion
        # tokens) must never recreate abbreviation-key material, or a second
        # pass would expand what the first one produced.
        key_tokens = {tok for key in self.abbreviations for tok in key}
        produced = set(self.lemmas.values())
        for expansion in self.abbreviations.values():
            produced.update(self.lemmas.get(tok, tok) for tok in expansion)
        bad = key_tokens & produced
        if bad:
            raise TableFormatError(
                f"tokens {sorted(bad)!r} appear both in abbreviation keys and "
                "in pipeline output (lemma values or expansions); "
                "normalization would not be idempotent"
            )

    @property
    def version(self) -> str:
        """Content hash, stable across processes; recorded as provenance."""
        payload = json.dumps(
            {
                "abbrev": sorted(
                    (" ".join(k), " ".join(v)) for k, v in self.abbreviations.items()
                ),
                "lemmas": sorted(self.lemmas.items()),
            },
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_tables(
        cls,
        abbreviations: dict[str, str] | None = None,
        lemmas: dict[str, str] | None = None,
    ) -> "NormalizationPipeline":
        """Build from string-keyed tables; keys/values are lowercased."""
        abbrev: dict[TokenSeq, TokenSeq] = {}
        for key, value in (abbreviations or {}).items():
            abbrev[tuple(key.lower().split())] = tuple(value.lower().split())
        lemma_map = {k.lower(): v.lower() for k, v in (lemmas or {}).items()}
        return cls(abbreviations=abbrev, lemmas=lemma_map)

    @classmethod
    def from_files(
        cls,
        abbreviations_path: str | Path | None = None,
        lemmas_path: str | Path | None = None,
    ) -> "NormalizationPipeline":
        """Load from TSV files (KEY<TAB>VALUE, '#' comments, UTF-8)."""
        abbrev: dict[str, str] = {}
        if abbreviations_path is not None:
            for lineno, key, value in read_tsv_pairs(abbreviations_path):
                if key.lower() in abbrev:
                    raise TableFormatError(
                        f"{abbreviations_path}:{lineno}: duplicate abbreviation {key!r}"
                    )
                abbrev[key.lower()] = value
        lemmas: dict[str, str] = {}
        if lemmas_path is not None:
            for lineno, key, value in read_tsv_pairs(lemmas_path):
                if key.lower() in lemmas:
                    raise TableFormatError(
                        f"{lemmas_path}:{lineno}: duplicate lemma surface {key!r}"
                    )
                lemmas[key.lower()] = value
        return cls.from_tables(abbrev, lemmas)


@dataclass(frozen=True)
class NormalizedDocument:
    """A document reduced to its lowercase lemma token sequence."""

    doc_id: str
    tokens: TokenSeq

    def __post_init__(self) -> None:
        for token in self.tokens:
            if not token or token.split() != [token]:
                raise ValueError(f"invalid normalized token {token!r}")


def normalize_tokens(text: str, pipeline: NormalizationPipeline) -> TokenSeq:
    """Apply the full pipeline to raw text, returning the token sequence."""
    tokens = tokenize(text.lower())
    tokens = expand_abbreviations(tokens, pipeline.abbreviations)
    return tuple(pipeline.lemmas.get(tok, tok) for tok in tokens)


def normalize(
    text: str, pipeline: NormalizationPipeline, doc_id: str = ""
) -> NormalizedDocument:
    return NormalizedDocument(doc_id=doc_id, tokens=normalize_tokens(text, pipeline))


class TextNormalizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: transforms raw strings into token lists.

    Parameters are plain string tables (or None), so the transformer
    clones cleanly and composes in sklearn pipelines. Stateless apart
    from the compiled pipeline built in fit().
    """

    def __init__(
        self,
        abbreviations: dict[str, str] | None = None,
        lemmas: dict[str, str] | None = None,
    ):
        self.abbreviations = abbreviations
        self.lemmas = lemmas

    def fit(self, X=None, y=None):
        self.pipeline_ = NormalizationPipeline.from_tables(
            self.abbreviations, self.lemmas
        )
        return self

    def transform(self, X) -> list[list[str]]:
        if not hasattr(self, "pipeline_"):
            self.fit()
        return [list(normalize_tokens(text, self.pipeline_)) for text in X]
