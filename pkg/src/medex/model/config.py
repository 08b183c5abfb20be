"""Model and training hyperparameters.

Defaults follow the published recipe: learning rate 1e-5, batch size 20,
a single epoch, 0.15 mask probability, classification head initialized
from N(-0.1, 0.11^2). The absent-class weight and prediction threshold
have no published value and are exposed as ordinary knobs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from ..errors import ConfigError

DTYPES = ("float32", "float64")
POOLINGS = ("cls", "mean")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_entities: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 64
    head_init_mean: float = -0.1
    head_init_std: float = 0.11
    pooling: str = "cls"
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must cover the 4 special ids")
        if self.n_entities < 1:
            raise ConfigError("n_entities must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) not divisible by n_heads ({self.n_heads})"
            )
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}")
        for name in ("d_model", "n_layers", "ffn_dim", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 20
    epochs: int = 1
    absent_class_weight: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mlm_mask_prob: float = 0.15
    predict_threshold: float = 0.5
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.absent_class_weight <= 1:
            raise ConfigError("absent_class_weight must be in (0, 1]")
        if not 0 <= self.mlm_mask_prob <= 1:
            raise ConfigError("mlm_mask_prob must be in [0, 1]")
        if not 0 < self.predict_threshold < 1:
            raise ConfigError("predict_threshold must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ConfigError("adam betas must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)
