from .adam import adam_update, apply_gradients
from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .extractor import EntityExtractor
from .network import (
    ModelState,
    backward,
    backward_hidden,
    forward,
    forward_hidden,
    gelu,
    init_model,
    param_specs,
    pool_hidden,
    sigmoid,
    softmax,
    states_equal,
)
from .tokenizer import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SPECIALS,
    UNK_ID,
    Tokenizer,
    build_vocab,
    encode,
    encode_batch,
)
from .training import (
    batch_class_weights,
    classification_loss,
    encode_targets,
    mask_tokens,
    mlm_pretrain,
    mlm_step,
    predict_labels,
    predict_probs,
    train_classifier,
    train_step,
    weighted_bce,
)

__all__ = [
    "CLS_ID",
    "MASK_ID",
    "PAD_ID",
    "SPECIALS",
    "UNK_ID",
    "CheckpointBundle",
    "EntityExtractor",
    "ModelConfig",
    "ModelState",
    "TrainConfig",
    "Tokenizer",
    "adam_update",
    "apply_gradients",
    "backward",
    "backward_hidden",
    "batch_class_weights",
    "build_vocab",
    "classification_loss",
    "encode",
    "encode_batch",
    "encode_targets",
    "forward",
    "forward_hidden",
    "gelu",
    "init_model",
    "load_checkpoint",
    "mask_tokens",
    "mlm_pretrain",
    "mlm_step",
    "param_specs",
    "pool_hidden",
    "predict_labels",
    "predict_probs",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "states_equal",
    "train_classifier",
    "train_step",
    "weighted_bce",
]
