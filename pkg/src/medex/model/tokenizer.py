"""Word-level tokenizer over normalized lemma tokens.

The matcher and the classification targets are word-based, so the model
vocabulary is too; subword segmentation is deliberately out of scope.
Special ids are fixed: PAD=0, UNK=1, CLS=2, MASK=3.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
MASK_ID = 3
PAD, UNK, CLS, MASK = "<pad>", "<unk>", "<cls>", "<mask>"
SPECIALS = (PAD, UNK, CLS, MASK)


@dataclass(frozen=True)
class Tokenizer:
    vocab: dict[str, int]
    max_seq_len: int

    def __post_init__(self) -> None:
        for i, tok in enumerate(SPECIALS):
            if self.vocab.get(tok) != i:
                raise ValueError(f"special token {tok} must have id {i}")
        ids = sorted(self.vocab.values())
        if ids != list(range(len(self.vocab))):
            raise ValueError("vocabulary ids must be dense starting at 0")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must fit CLS plus one token")

    def __len__(self) -> int:
        return len(self.vocab)


def build_vocab(
    corpus: Iterable[Sequence[str]], min_freq: int = 1, max_seq_len: int = 64
) -> Tokenizer:
    """Fit a vocabulary: specials, then tokens with frequency >= min_freq
    ordered by descending frequency, ties broken lexicographically."""
    counts: Counter[str] = Counter()
    n_docs = 0
    for tokens in corpus:
        n_docs += 1
        counts.update(tokens)
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    vocab = {tok: i for i, tok in enumerate(SPECIALS)}
    for tok in kept:
        vocab[tok] = len(vocab)
    return Tokenizer(vocab=vocab, max_seq_len=max_seq_len)


def encode(tokens: Sequence[str], tok: Tokenizer) -> tuple[np.ndarray, np.ndarray]:
    """Encode one document: [CLS] + ids, truncated then padded to max_seq_len.

    Returns (ids, attention_mask), both int64 of length max_seq_len; the
    mask is 1 on CLS and real tokens, 0 on padding.
    """
    ids = [CLS_ID]
    for t in tokens[: tok.max_seq_len - 1]:
        ids.append(tok.vocab.get(t, UNK_ID))
    n = len(ids)
    ids.extend([PAD_ID] * (tok.max_seq_len - n))
    mask = np.zeros(tok.max_seq_len, dtype=np.int64)
    mask[:n] = 1
    return np.asarray(ids, dtype=np.int64), mask


def encode_batch(
    docs: Sequence[Sequence[str]], tok: Tokenizer, pad_to: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Encode a batch, trimming the common padding to the longest row.

    ``pad_to`` overrides the trim (used by tests that need fixed shapes).
    """
    ids = np.stack([encode(d, tok)[0] for d in docs])
    mask = np.stack([encode(d, tok)[1] for d in docs])
    if pad_to is None:
        longest = int(mask.sum(axis=1).max())
        pad_to = max(longest, 2)
    return ids[:, :pad_to], mask[:, :pad_to]
