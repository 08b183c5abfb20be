"""Distant labeling: window enumeration against a brute-force matcher."""

from __future__ import annotations

import numpy as np
import pytest

from medex.errors import CorpusError
from medex.kb import Entity, KnowledgeBase, build_lexicon
from medex.labeler import (
    DistantLabeler,
    candidate_windows,
    label_corpus,
    label_document,
    match_spans,
)
from medex.textnorm import NormalizedDocument


def brute_force_ids(tokens, lexicon):
    """Reference matcher: probe every (start, length) window directly.

    Deliberately naive; any cleverness in the production matcher must be
    behavior-identical to this double loop.
    """
    found = set()
    n = len(tokens)
    for start in range(n):
        for length in range(1, lexicon.max_term_len + 1):
            if start + length > n:
                break
            entity = lexicon.entries.get(tuple(tokens[start:start + length]))
            if entity is not None:
                found.add(entity)
    return frozenset(found)


class TestCandidateWindows:
    def test_enumerates_all_short_windows(self):
        wins = list(candidate_windows(("a", "b", "c"), 2))
        assert (0, 1) in wins and (0, 2) in wins
        assert (2, 3) in wins
        assert (0, 3) not in wins  # length 3 exceeds the cap
        assert len(wins) == 5

    def test_empty_document(self):
        assert list(candidate_windows((), 7)) == []


class TestLabelDocument:
    def test_single_and_multi_token_matches(self, lex6):
        doc = NormalizedDocument("d1", ("severe", "chest", "pain", "and", "fever"))
        got = label_document(doc, lex6)
        assert got.entity_ids == {"c01", "c04"}

    def test_duplicate_mentions_collapse_to_one_id(self, lex6):
        doc = NormalizedDocument("d1", ("fever", "then", "fever", "again"))
        assert label_document(doc, lex6).entity_ids == {"c04"}

    def test_overlapping_synonyms_both_found(self, lex6):
        # "pain in chest" (c01) overlaps nothing here, but "chest pain"
        # inside "severe chest pain episode" is still a clean window hit
        doc = NormalizedDocument("d1", ("pain", "in", "chest", "pain"))
        assert label_document(doc, lex6).entity_ids == {"c01"}

    def test_no_match(self, lex6):
        doc = NormalizedDocument("d1", ("no", "findings", "today"))
        assert label_document(doc, lex6).entity_ids == frozenset()

    def test_empty_document(self, lex6):
        assert label_document(NormalizedDocument("d1", ()), lex6).entity_ids == frozenset()


class TestWindowLengthBounds:
    def build(self, syn):
        kb = KnowledgeBase(entities=(
            Entity("long1", syn, "g", (syn,)),
        ), version="v")
        from medex.textnorm import NormalizationPipeline
        return build_lexicon(kb, NormalizationPipeline({}, {}))

    def test_seven_token_synonym_always_matches(self):
        syn = "a1 a2 a3 a4 a5 a6 a7"
        lex = self.build(syn)
        doc = NormalizedDocument("d", ("pre",) + tuple(syn.split()) + ("post",))
        assert label_document(doc, lex).entity_ids == {"long1"}

    def test_eight_token_synonym_never_matches(self, caplog):
        syn = "a1 a2 a3 a4 a5 a6 a7 a8"
        with caplog.at_level("WARNING"):
            lex = self.build(syn)  # dropped at lexicon build time
        doc = NormalizedDocument("d", tuple(syn.split()))
        assert label_document(doc, lex).entity_ids == frozenset()


class TestBruteForceEquivalence:
    def test_random_documents_match_reference(self, lex6, rng):
        vocab = ["chest", "pain", "in", "fever", "mi", "aspirin", "dm",
                 "high", "temperature", "of", "breath", "shortness",
                 "noise", "filler", "acetylsalicylic", "acid"]
        for _ in range(400):
            n = int(rng.integers(0, 30))
            tokens = tuple(vocab[i] for i in rng.integers(0, len(vocab), size=n))
            doc = NormalizedDocument("d", tokens)
            assert label_document(doc, lex6).entity_ids == brute_force_ids(tokens, lex6)

    def test_match_spans_positions_are_exact(self, lex6):
        tokens = ("chest", "pain", "in", "chest")
        spans = match_spans(tokens, lex6)
        assert (0, 2, "c01") in spans       # "chest pain"
        assert (1, 4, "c01") in spans       # "pain in chest"


class TestLabelCorpus:
    def docs(self):
        return [
            NormalizedDocument("b", ("fever",)),
            NormalizedDocument("a", ("chest", "pain")),
            NormalizedDocument("c", ()),
        ]

    def test_sorted_output_and_labels_property(self, lex6):
        out = label_corpus(self.docs(), lex6)
        assert [p[1].doc_id for p in out.pairs] == ["a", "b", "c"]
        assert out.labels == {"a": frozenset({"c01"}),
                              "b": frozenset({"c04"}),
                              "c": frozenset()}

    def test_duplicate_doc_id_rejected(self, lex6):
        docs = [NormalizedDocument("a", ()), NormalizedDocument("a", ("x",))]
        with pytest.raises(CorpusError, match="duplicate"):
            label_corpus(docs, lex6)

    def test_parallel_equals_serial(self, lex6, rng):
        vocab = ["chest", "pain", "fever", "mi", "filler", "of", "in"]
        docs = [
            NormalizedDocument(
                f"d{i:03d}",
                tuple(vocab[j] for j in rng.integers(0, len(vocab), size=int(rng.integers(0, 20)))),
            )
            for i in range(200)
        ]
        serial = label_corpus(docs, lex6, workers=1)
        parallel = label_corpus(docs, lex6, workers=4)
        assert serial.labels == parallel.labels

    def test_throughput_recorded(self, lex6):
        out = label_corpus(self.docs(), lex6)
        assert out.docs_per_sec > 0
        assert out.lexicon_version == lex6.version


class TestDistantLabelerEstimator:
    def test_transform_token_lists(self, lex6):
        dl = DistantLabeler(lexicon=lex6).fit()
        out = dl.transform([["chest", "pain"], ["nothing"]])
        assert out == [frozenset({"c01"}), frozenset()]

    def test_clone_keeps_params(self, lex6):
        from sklearn.base import clone
        cloned_lex = clone(DistantLabeler(lexicon=lex6)).get_params()["lexicon"]
        assert dict(cloned_lex.entries) == dict(lex6.entries)
