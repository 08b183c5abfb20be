"""Vocabulary construction and id encoding."""

from __future__ import annotations

import numpy as np
import pytest

from medex.errors import ConfigError
from medex.model import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SPECIALS,
    UNK_ID,
    build_vocab,
    encode,
    encode_batch,
)

DOCS = [
    ("fever", "and", "chills"),
    ("fever", "at", "night"),
    ("chills",),
]


class TestSpecials:
    def test_reserved_ids(self):
        assert (PAD_ID, UNK_ID, CLS_ID, MASK_ID) == (0, 1, 2, 3)
        assert SPECIALS == ("<pad>", "<unk>", "<cls>", "<mask>")


class TestBuildVocab:
    @staticmethod
    def ordered(tok):
        return sorted(tok.vocab, key=tok.vocab.get)

    def test_specials_lead_then_frequency_then_lexicographic(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        # fever=2, chills=2, and/at/night=1; ties alphabetical
        assert tuple(self.ordered(tok)[:4]) == SPECIALS
        assert self.ordered(tok)[4:] == ["chills", "fever", "and", "at", "night"]

    def test_min_freq_prunes(self):
        tok = build_vocab(DOCS, min_freq=2, max_seq_len=16)
        assert self.ordered(tok)[4:] == ["chills", "fever"]

    def test_deterministic(self):
        a = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        b = build_vocab(list(reversed(DOCS)), min_freq=1, max_seq_len=16)
        assert dict(a.vocab) == dict(b.vocab)


class TestEncode:
    def test_cls_prefix_and_ids(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        ids, mask = encode(("fever", "chills"), tok)
        assert ids[0] == CLS_ID
        assert ids.dtype == np.int64
        assert list(mask[:3]) == [1, 1, 1]

    def test_unknown_token_becomes_unk(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        ids, _ = encode(("zzz",), tok)
        assert ids[1] == UNK_ID

    def test_truncation_to_max_seq_len(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=4)
        ids, mask = encode(("fever", "and", "chills", "at", "night"), tok)
        assert len(ids) == 4
        assert ids[0] == CLS_ID
        assert mask.sum() == 4


class TestEncodeBatch:
    def test_pads_to_longest_row(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        ids, mask = encode_batch([("fever",), ("fever", "and", "chills")], tok)
        assert ids.shape == (2, 4)  # CLS + 3 tokens
        assert list(mask[0]) == [1, 1, 0, 0]
        assert ids[0, 2] == PAD_ID

    def test_minimum_width_two(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        ids, mask = encode_batch([()], tok)
        assert ids.shape[1] >= 2

    def test_explicit_pad_to(self):
        tok = build_vocab(DOCS, min_freq=1, max_seq_len=16)
        ids, _ = encode_batch([("fever",)], tok, pad_to=8)
        assert ids.shape == (1, 8)
