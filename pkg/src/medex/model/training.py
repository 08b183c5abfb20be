"""Loss functions and training loops.

Two phases share one optimizer state and step counter: masked-token
pretraining (cross-entropy at masked positions, tied output embeddings,
classification head untouched) and multi-label fine-tuning (per-class
sigmoid BCE where classes absent from the batch get a reduced weight).
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .adam import apply_gradients
from .config import TrainConfig
from .network import (
    ModelState,
    backward,
    backward_hidden,
    forward,
    forward_hidden,
    mlm_logits,
    sigmoid,
)
from .tokenizer import MASK_ID, SPECIALS, Tokenizer, encode_batch

logger = logging.getLogger(__name__)

TokenSeq = Sequence[str]


def encode_targets(
    label_sets: Sequence[frozenset[str] | set[str]], classes: Sequence[str]
) -> np.ndarray:
    """Multi-hot (B, K) target matrix; unknown entity ids are an error."""
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(label_sets), len(classes)))
    for row, labels in enumerate(label_sets):
        for entity_id in labels:
            col = index.get(entity_id)
            if col is None:
                raise ConfigError(f"label {entity_id!r} not among model classes")
            out[row, col] = 1.0
    return out


def batch_class_weights(targets: np.ndarray, absent_weight: float) -> np.ndarray:
    """Per-class weights: 1 where the class is positive somewhere in the
    batch, absent_weight elsewhere."""
    if not 0.0 < absent_weight <= 1.0:
        raise ConfigError(f"absent_weight must be in (0, 1], got {absent_weight}")
    present = targets.any(axis=0)
    return np.where(present, 1.0, float(absent_weight))


def weighted_bce(
    logits: np.ndarray, targets: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean weighted BCE over all batch-class cells, plus dL/dlogits.

    Uses the overflow-safe form max(z,0) - y*z + log1p(exp(-|z|)).
    """
    z = logits
    y = targets.astype(z.dtype, copy=False)
    w = weights.astype(z.dtype, copy=False)
    cell = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    denom = z.shape[0] * z.shape[1]
    loss = float((cell * w).sum() / denom)
    dz = w * (sigmoid(z) - y) / denom
    return loss, dz


def classification_loss(
    state: ModelState,
    ids: np.ndarray,
    attn_mask: np.ndarray,
    targets: np.ndarray,
    absent_weight: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Forward + backward for one classification batch; no update."""
    weights = batch_class_weights(targets, absent_weight)
    logits, cache = forward(state, ids, attn_mask)
    loss, dz = weighted_bce(logits, targets, weights)
    return loss, backward(state, cache, dz)


def train_step(
    state: ModelState,
    ids: np.ndarray,
    attn_mask: np.ndarray,
    targets: np.ndarray,
    train: TrainConfig,
) -> tuple[ModelState, float]:
    """One weighted-BCE batch update. Returns the updated state and loss."""
    if ids.shape[0] == 0:
        raise ConfigError("empty batch")
    loss, grads = classification_loss(
        state, ids, attn_mask, targets, train.absent_class_weight
    )
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss {loss!r} at step {state.step + 1}"
        )
    apply_gradients(state, grads, train)
    return state, loss


def train_classifier(
    state: ModelState,
    docs: Sequence[TokenSeq],
    label_sets: Sequence[frozenset[str] | set[str]],
    classes: Sequence[str],
    tokenizer: Tokenizer,
    train: TrainConfig,
) -> tuple[ModelState, list[float]]:
    """Mini-batch passes over the labeled corpus; returns per-step losses."""
    if len(docs) != len(label_sets):
        raise ConfigError(
            f"{len(docs)} documents but {len(label_sets)} label sets"
        )
    if len(docs) == 0:
        raise ConfigError("empty training corpus")
    targets = encode_targets(label_sets, classes)
    rng = np.random.default_rng(train.seed)
    losses: list[float] = []
    for epoch in range(train.epochs):
        order = rng.permutation(len(docs)) if train.shuffle else np.arange(len(docs))
        for lo in range(0, len(docs), train.batch_size):
            batch_idx = order[lo : lo + train.batch_size]
            ids, attn_mask = encode_batch([docs[i] for i in batch_idx], tokenizer)
            state, loss = train_step(
                state, ids, attn_mask, targets[batch_idx], train
            )
            losses.append(loss)
        logger.info(
            "epoch %d/%d done, %d steps, last loss %.6f",
            epoch + 1, train.epochs, len(losses), losses[-1],
        )
    return state, losses


def mask_tokens(
    ids: np.ndarray, prob: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Independently replace non-special ids with MASK at rate prob.

    Returns (masked ids, rows, cols, original ids at masked positions).
    The input array is never modified.
    """
    if not 0.0 <= prob <= 1.0:
        raise ConfigError(f"mask probability must be in [0, 1], got {prob}")
    eligible = ids >= len(SPECIALS)
    chosen = eligible & (rng.random(ids.shape) < prob)
    masked = np.where(chosen, MASK_ID, ids)
    rows, cols = np.nonzero(chosen)
    return masked, rows, cols, ids[rows, cols]


def mlm_step(
    state: ModelState,
    ids: np.ndarray,
    attn_mask: np.ndarray,
    train: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """One masked-token pretraining update.

    A batch where no position was masked is a no-op (loss 0.0, optimizer
    untouched). The classification head receives no gradient here.
    """
    masked, rows, cols, target_ids = mask_tokens(ids, train.mlm_mask_prob, rng)
    if rows.size == 0:
        return 0.0
    h, cache = forward_hidden(state, masked, attn_mask)
    logits = mlm_logits(state, h, rows, cols)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    n = rows.size
    loss = float(-log_probs[np.arange(n), target_ids].mean())
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite pretraining loss at step {state.step + 1}"
        )
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), target_ids] -= 1.0
    dlogits /= n
    hm = h[rows, cols]
    dh = np.zeros_like(h)
    dh[rows, cols] = dlogits @ state.params["tok_emb"]
    grads = backward_hidden(state, cache, dh)
    grads["tok_emb"] = grads["tok_emb"] + dlogits.T @ hm
    grads["mlm_bias"] = dlogits.sum(axis=0)
    apply_gradients(state, grads, train)
    return loss


def mlm_pretrain(
    state: ModelState,
    docs: Sequence[TokenSeq],
    tokenizer: Tokenizer,
    train: TrainConfig,
    max_steps: int | None = None,
) -> tuple[ModelState, list[float]]:
    """Masked-token pretraining over the corpus; returns per-step losses.

    Runs train.epochs passes (cycling past the corpus end if max_steps
    asks for more batches than one pass provides).
    """
    if len(docs) == 0:
        raise ConfigError("empty pretraining corpus")
    rng = np.random.default_rng(train.seed)
    losses: list[float] = []
    epoch = 0
    while True:
        order = rng.permutation(len(docs)) if train.shuffle else np.arange(len(docs))
        for lo in range(0, len(docs), train.batch_size):
            if max_steps is not None and len(losses) >= max_steps:
                return state, losses
            batch_idx = order[lo : lo + train.batch_size]
            ids, attn_mask = encode_batch([docs[i] for i in batch_idx], tokenizer)
            losses.append(mlm_step(state, ids, attn_mask, train, rng))
        epoch += 1
        if max_steps is None and epoch >= train.epochs:
            return state, losses
        if max_steps is not None and len(losses) >= max_steps:
            return state, losses


def predict_probs(
    state: ModelState,
    docs: Sequence[TokenSeq],
    tokenizer: Tokenizer,
    batch_size: int = 64,
) -> np.ndarray:
    """Sigmoid class probabilities, shape (len(docs), K)."""
    chunks = []
    for lo in range(0, len(docs), batch_size):
        ids, attn_mask = encode_batch(list(docs[lo : lo + batch_size]), tokenizer)
        logits, _ = forward(state, ids, attn_mask)
        chunks.append(sigmoid(logits))
    if not chunks:
        return np.zeros((0, state.config.n_entities))
    return np.concatenate(chunks, axis=0)


def predict_labels(
    state: ModelState,
    docs: Sequence[TokenSeq],
    tokenizer: Tokenizer,
    classes: Sequence[str],
    threshold: float = 0.5,
    batch_size: int = 64,
) -> list[frozenset[str]]:
    """Entity ids whose probability strictly exceeds the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    if len(classes) != state.config.n_entities:
        raise ConfigError(
            f"{len(classes)} classes for a {state.config.n_entities}-way head"
        )
    probs = predict_probs(state, docs, tokenizer, batch_size=batch_size)
    names = np.asarray(classes, dtype=object)
    return [frozenset(names[row > threshold]) for row in probs]
