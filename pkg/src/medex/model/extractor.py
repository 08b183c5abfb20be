"""Estimator wrapper around the numpy model.

EntityExtractor follows the familiar fit/predict shape: X is a list of
normalized token sequences, y a parallel list of entity-id sets. fit
builds the vocabulary, optionally runs masked-token pretraining, then
fine-tunes; predict returns entity-id sets, predict_proba the per-class
sigmoid matrix with columns in classes_ order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigError
from .config import ModelConfig, TrainConfig
from .network import init_model
from .tokenizer import build_vocab
from .training import (
    mlm_pretrain,
    predict_labels,
    predict_probs,
    train_classifier,
)


def _check_token_docs(X) -> list[list[str]]:
    docs = []
    for i, doc in enumerate(X):
        if isinstance(doc, str):
            raise ConfigError(
                f"X[{i}] is a raw string; pass token sequences (normalize first)"
            )
        tokens = list(doc)
        if not all(isinstance(t, str) for t in tokens):
            raise ConfigError(f"X[{i}] contains non-string tokens")
        docs.append(tokens)
    return docs


class EntityExtractor(BaseEstimator):
    """Multi-label entity classifier over whole documents."""

    def __init__(
        self,
        d_model: int = 64,
        n_layers: int = 2,
        n_heads: int = 4,
        ffn_dim: int = 128,
        max_seq_len: int = 64,
        pooling: str = "cls",
        dtype: str = "float32",
        learning_rate: float = 1e-5,
        batch_size: int = 20,
        epochs: int = 1,
        absent_class_weight: float = 0.05,
        mlm_mask_prob: float = 0.15,
        pretrain_steps: int = 0,
        min_freq: int = 1,
        threshold: float = 0.5,
        seed: int = 0,
    ):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.ffn_dim = ffn_dim
        self.max_seq_len = max_seq_len
        self.pooling = pooling
        self.dtype = dtype
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.absent_class_weight = absent_class_weight
        self.mlm_mask_prob = mlm_mask_prob
        self.pretrain_steps = pretrain_steps
        self.min_freq = min_freq
        self.threshold = threshold
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            absent_class_weight=self.absent_class_weight,
            mlm_mask_prob=self.mlm_mask_prob,
            seed=self.seed,
        )

    def fit(self, X: Sequence[Sequence[str]], y: Sequence[frozenset[str] | set[str]]):
        docs = _check_token_docs(X)
        if len(docs) != len(y):
            raise ConfigError(f"{len(docs)} documents but {len(y)} label sets")
        classes = sorted({entity_id for labels in y for entity_id in labels})
        if not classes:
            raise ConfigError("no positive labels anywhere in y")
        self.tokenizer_ = build_vocab(
            docs, min_freq=self.min_freq, max_seq_len=self.max_seq_len
        )
        config = ModelConfig(
            vocab_size=len(self.tokenizer_.vocab),
            n_entities=len(classes),
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ffn_dim=self.ffn_dim,
            max_seq_len=self.max_seq_len,
            pooling=self.pooling,
            dtype=self.dtype,
            seed=self.seed,
        )
        state = init_model(config)
        train = self._train_config()
        self.pretrain_losses_ = []
        if self.pretrain_steps > 0:
            state, self.pretrain_losses_ = mlm_pretrain(
                state, docs, self.tokenizer_, train, max_steps=self.pretrain_steps
            )
        state, self.losses_ = train_classifier(
            state, docs, list(y), classes, self.tokenizer_, train
        )
        self.state_ = state
        self.classes_ = np.asarray(classes, dtype=object)
        return self

    def predict_proba(self, X: Sequence[Sequence[str]]) -> np.ndarray:
        check_is_fitted(self, "state_")
        docs = _check_token_docs(X)
        return predict_probs(self.state_, docs, self.tokenizer_)

    def predict(self, X: Sequence[Sequence[str]]) -> list[frozenset[str]]:
        check_is_fitted(self, "state_")
        docs = _check_token_docs(X)
        return predict_labels(
            self.state_,
            docs,
            self.tokenizer_,
            list(self.classes_),
            threshold=self.threshold,
        )
