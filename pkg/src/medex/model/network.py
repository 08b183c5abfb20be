"""Transformer encoder with explicit forward and backward passes.

Everything is plain numpy: post-norm blocks (self-attention, residual +
layer norm, GELU feed-forward), learned positional embeddings, a pooled
text representation feeding a K-way linear head, and a tied-embedding
output layer for masked-token prediction. The backward pass is written
by hand and is verified against central finite differences in the test
suite, so keep forward and backward in lockstep when editing.

Training runs in float32; a float64 mode exists for gradient checks and
must stay numerically faithful (same constants, same reduction order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ..errors import ConfigError
from .config import ModelConfig

LN_EPS = 1e-5
ATTN_MASK_VALUE = -1e9
# python floats: numpy scalar constants would upcast float32 activations
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


@dataclass
class ModelState:
    """All learnable tensors plus optimizer state.

    ``params`` maps parameter names to arrays; ``adam_m``/``adam_v`` hold
    the Adam moment accumulators under the same keys; ``step`` counts
    optimizer updates across pretraining and fine-tuning.
    """

    config: ModelConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def check_finite(self) -> None:
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ConfigError(f"parameter {name} contains non-finite values")


def param_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init kind) for every parameter, in a fixed order.

    The order is the RNG draw order, so it is part of the determinism
    contract; append only at the end.
    """
    d, f = config.d_model, config.ffn_dim
    specs: list[tuple[str, tuple[int, ...], str]] = [
        ("tok_emb", (config.vocab_size, d), "normal"),
        ("pos_emb", (config.max_seq_len, d), "normal"),
    ]
    for i in range(config.n_layers):
        p = f"layers.{i}"
        specs += [
            (f"{p}.attn.wq", (d, d), "normal"),
            (f"{p}.attn.bq", (d,), "zeros"),
            (f"{p}.attn.wk", (d, d), "normal"),
            (f"{p}.attn.bk", (d,), "zeros"),
            (f"{p}.attn.wv", (d, d), "normal"),
            (f"{p}.attn.bv", (d,), "zeros"),
            (f"{p}.attn.wo", (d, d), "normal"),
            (f"{p}.attn.bo", (d,), "zeros"),
            (f"{p}.ln1.gamma", (d,), "ones"),
            (f"{p}.ln1.beta", (d,), "zeros"),
            (f"{p}.ffn.w1", (d, f), "normal"),
            (f"{p}.ffn.b1", (f,), "zeros"),
            (f"{p}.ffn.w2", (f, d), "normal"),
            (f"{p}.ffn.b2", (d,), "zeros"),
            (f"{p}.ln2.gamma", (d,), "ones"),
            (f"{p}.ln2.beta", (d,), "zeros"),
        ]
    specs += [
        ("head.w", (config.n_entities, d), "head"),
        ("head.b", (config.n_entities,), "zeros"),
        ("mlm_bias", (config.vocab_size,), "zeros"),
    ]
    return specs


def init_model(config: ModelConfig) -> ModelState:
    """Seed-deterministic initialization.

    Head weights come from N(head_init_mean, head_init_std^2) so every
    class starts with a low predicted probability; all other weight
    matrices use N(0, 0.02^2); biases are zero, layer-norm gains one.
    """
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in param_specs(config):
        if kind == "normal":
            value = rng.normal(0.0, 0.02, size=shape)
        elif kind == "head":
            value = rng.normal(
                config.head_init_mean, config.head_init_std, size=shape
            )
        elif kind == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[name] = value.astype(dtype)
    state = ModelState(config=config, params=params)
    state.adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    state.adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    return state


def _layernorm_fwd(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv)


def _layernorm_bwd(dout, cache, gamma):
    xhat, inv = cache
    dxhat = dout * gamma
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    axes = tuple(range(dout.ndim - 1))
    return dx, (dout * xhat).sum(axis=axes), dout.sum(axis=axes)


def _split_heads(x, n_heads):
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, length, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, h * dh)


def forward_hidden(
    state: ModelState, ids: np.ndarray, attn_mask: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Run the encoder; returns final hidden states (B, L, D) and a cache
    holding every intermediate the backward pass needs."""
    cfg = state.config
    p = state.params
    dtype = np.dtype(cfg.dtype)
    b, length = ids.shape
    if length > cfg.max_seq_len:
        raise ConfigError(f"sequence length {length} exceeds {cfg.max_seq_len}")
    h = p["tok_emb"][ids] + p["pos_emb"][:length]
    mask_add = np.where(attn_mask[:, None, None, :] == 1, 0.0, ATTN_MASK_VALUE)
    mask_add = mask_add.astype(dtype)
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    cache: dict = {"ids": ids, "attn_mask": attn_mask, "layers": [], "length": length}
    for i in range(cfg.n_layers):
        pre = f"layers.{i}"
        h_in = h
        q = h_in @ p[f"{pre}.attn.wq"] + p[f"{pre}.attn.bq"]
        k = h_in @ p[f"{pre}.attn.wk"] + p[f"{pre}.attn.bk"]
        v = h_in @ p[f"{pre}.attn.wv"] + p[f"{pre}.attn.bv"]
        qh = _split_heads(q, cfg.n_heads)
        kh = _split_heads(k, cfg.n_heads)
        vh = _split_heads(v, cfg.n_heads)
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + mask_add
        attn = softmax(scores)
        ctx = _merge_heads(attn @ vh)
        attn_out = ctx @ p[f"{pre}.attn.wo"] + p[f"{pre}.attn.bo"]
        h1, ln1 = _layernorm_fwd(
            h_in + attn_out, p[f"{pre}.ln1.gamma"], p[f"{pre}.ln1.beta"]
        )
        u = h1 @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]
        g = gelu(u)
        f = g @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
        h, ln2 = _layernorm_fwd(
            h1 + f, p[f"{pre}.ln2.gamma"], p[f"{pre}.ln2.beta"]
        )
        cache["layers"].append(
            {"h_in": h_in, "qh": qh, "kh": kh, "vh": vh, "attn": attn,
             "ctx": ctx, "ln1": ln1, "h1": h1, "u": u, "g": g, "ln2": ln2}
        )
    cache["h_out"] = h
    return h, cache


def backward_hidden(
    state: ModelState, cache: dict, dh: np.ndarray
) -> dict[str, np.ndarray]:
    """Backpropagate dL/dh_out through the encoder down to the embeddings.

    Returns gradients for every encoder parameter (head excluded); the
    caller merges in head or MLM-head gradients as appropriate.
    """
    cfg = state.config
    p = state.params
    grads: dict[str, np.ndarray] = {}
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    for i in reversed(range(cfg.n_layers)):
        pre = f"layers.{i}"
        lc = cache["layers"][i]
        dr2, grads[f"{pre}.ln2.gamma"], grads[f"{pre}.ln2.beta"] = _layernorm_bwd(
            dh, lc["ln2"], p[f"{pre}.ln2.gamma"]
        )
        dh1 = dr2.copy()
        dg = dr2 @ p[f"{pre}.ffn.w2"].T
        grads[f"{pre}.ffn.w2"] = np.tensordot(lc["g"], dr2, axes=([0, 1], [0, 1]))
        grads[f"{pre}.ffn.b2"] = dr2.sum(axis=(0, 1))
        du = dg * gelu_grad(lc["u"])
        dh1 += du @ p[f"{pre}.ffn.w1"].T
        grads[f"{pre}.ffn.w1"] = np.tensordot(lc["h1"], du, axes=([0, 1], [0, 1]))
        grads[f"{pre}.ffn.b1"] = du.sum(axis=(0, 1))
        dr1, grads[f"{pre}.ln1.gamma"], grads[f"{pre}.ln1.beta"] = _layernorm_bwd(
            dh1, lc["ln1"], p[f"{pre}.ln1.gamma"]
        )
        dh_in = dr1.copy()
        dctx = dr1 @ p[f"{pre}.attn.wo"].T
        grads[f"{pre}.attn.wo"] = np.tensordot(lc["ctx"], dr1, axes=([0, 1], [0, 1]))
        grads[f"{pre}.attn.bo"] = dr1.sum(axis=(0, 1))
        dctxh = _split_heads(dctx, cfg.n_heads)
        dattn = dctxh @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["attn"].transpose(0, 1, 3, 2) @ dctxh
        a = lc["attn"]
        dscores = a * (dattn - (dattn * a).sum(axis=-1, keepdims=True))
        dqh = dscores @ lc["kh"] * scale
        dkh = dscores.transpose(0, 1, 3, 2) @ lc["qh"] * scale
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        h_in = lc["h_in"]
        for mat, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
            grads[f"{pre}.attn.{mat}"] = np.tensordot(
                h_in, dmat, axes=([0, 1], [0, 1])
            )
            grads[f"{pre}.attn.b{mat[1]}"] = dmat.sum(axis=(0, 1))
            dh_in += dmat @ p[f"{pre}.attn.{mat}"].T
        dh = dh_in
    ids = cache["ids"]
    length = cache["length"]
    dtok = np.zeros_like(p["tok_emb"])
    np.add.at(dtok, ids, dh)
    dpos = np.zeros_like(p["pos_emb"])
    dpos[:length] = dh.sum(axis=0)
    grads["tok_emb"] = dtok
    grads["pos_emb"] = dpos
    return grads


def pool_hidden(
    h: np.ndarray, attn_mask: np.ndarray, pooling: str
) -> tuple[np.ndarray, np.ndarray]:
    """Pool per-position states into one text representation.

    Returns (pooled, weights) where weights holds the per-position
    contribution so the backward pass can redistribute the gradient.
    """
    if pooling == "cls":
        weights = np.zeros(attn_mask.shape, dtype=h.dtype)
        weights[:, 0] = 1.0
    elif pooling == "mean":
        valid = attn_mask.astype(h.dtype)
        weights = valid / valid.sum(axis=1, keepdims=True)
    else:
        raise ConfigError(f"unknown pooling {pooling!r}")
    return (h * weights[:, :, None]).sum(axis=1), weights


def forward(
    state: ModelState, ids: np.ndarray, attn_mask: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Classifier forward pass: logits (B, K) plus the backward cache."""
    h, cache = forward_hidden(state, ids, attn_mask)
    pooled, weights = pool_hidden(h, attn_mask, state.config.pooling)
    cache["pooled"] = pooled
    cache["pool_weights"] = weights
    logits = pooled @ state.params["head.w"].T + state.params["head.b"]
    return logits, cache


def backward(
    state: ModelState, cache: dict, dlogits: np.ndarray
) -> dict[str, np.ndarray]:
    """Backpropagate dL/dlogits through head, pooling and encoder."""
    pooled = cache["pooled"]
    grads_head = {
        "head.w": dlogits.T @ pooled,
        "head.b": dlogits.sum(axis=0),
    }
    dpooled = dlogits @ state.params["head.w"]
    dh = dpooled[:, None, :] * cache["pool_weights"][:, :, None]
    grads = backward_hidden(state, cache, dh)
    grads.update(grads_head)
    return grads


def mlm_logits(
    state: ModelState, h: np.ndarray, rows: np.ndarray, cols: np.ndarray
) -> np.ndarray:
    """Tied-embedding token logits at the masked positions only."""
    hm = h[rows, cols]
    return hm @ state.params["tok_emb"].T + state.params["mlm_bias"]


def states_equal(a: ModelState, b: ModelState) -> bool:
    """Bitwise equality of two states, optimizer accumulators included."""
    if a.config != b.config or a.step != b.step:
        return False
    for mine, theirs in ((a.params, b.params), (a.adam_m, b.adam_m), (a.adam_v, b.adam_v)):
        if mine.keys() != theirs.keys():
            return False
        for key in mine:
            x, y = mine[key], theirs[key]
            if x.dtype != y.dtype or x.shape != y.shape:
                return False
            if not np.array_equal(x, y):
                return False
    return True
