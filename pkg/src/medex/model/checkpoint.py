"""Single-file binary checkpoints.

Layout: magic ``MEDEX01``, a uint32 little-endian header length, a UTF-8
JSON header (model config, tokenizer vocab, entity class list,
normalization tables, step counter, and a tensor directory of
name/shape/dtype/offset/nbytes), the raw little-endian tensor bytes, and
a trailing CRC32 (of every byte before it, 4 bytes little-endian). Adam
moments are stored as tensors named ``adam.m.<param>`` /
``adam.v.<param>``, so a round-trip restores optimizer state bit for
bit.

Each tensor records its own dtype: training checkpoints are float32,
but a state built in the float64 check mode round-trips exactly too.

The file is self-sufficient for inference: classes, vocabulary and the
text normalization tables all travel with the weights.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..io import ensure_parent
from ..textnorm import NormalizationPipeline
from .config import ModelConfig
from .network import ModelState, param_specs
from .tokenizer import Tokenizer

MAGIC = b"MEDEX01"
FORMAT_VERSION = 1
_DTYPE_TAGS = {"float32": "<f4", "float64": "<f8"}


@dataclass(frozen=True)
class CheckpointBundle:
    """Everything needed to predict: weights, tokenizer, class order and
    the normalization tables the training corpus went through."""

    state: ModelState
    tokenizer: Tokenizer
    entities: tuple[str, ...]
    pipeline: NormalizationPipeline

    def __post_init__(self):
        if len(self.entities) != self.state.config.n_entities:
            raise CheckpointError(
                f"{len(self.entities)} entity ids for a "
                f"{self.state.config.n_entities}-way head"
            )


def _tensor_items(state: ModelState) -> list[tuple[str, np.ndarray]]:
    items = [(name, state.params[name]) for name, _, _ in param_specs(state.config)]
    for name, _, _ in param_specs(state.config):
        items.append((f"adam.m.{name}", state.adam_m[name]))
        items.append((f"adam.v.{name}", state.adam_v[name]))
    return items


def _pipeline_to_json(pipeline: NormalizationPipeline) -> dict:
    return {
        "abbreviations": {
            " ".join(key): " ".join(value)
            for key, value in pipeline.abbreviations.items()
        },
        "lemmas": dict(pipeline.lemmas),
    }


def _pipeline_from_json(data: dict) -> NormalizationPipeline:
    return NormalizationPipeline(
        abbreviations={
            tuple(key.split()): tuple(value.split())
            for key, value in data["abbreviations"].items()
        },
        lemmas=dict(data["lemmas"]),
    )


def save_checkpoint(bundle: CheckpointBundle, path: str | Path) -> None:
    """Write the bundle to one self-checking binary file."""
    state = bundle.state
    directory = []
    blobs = []
    offset = 0
    for name, arr in _tensor_items(state):
        if arr.dtype.name not in _DTYPE_TAGS:
            raise CheckpointError(f"tensor {name} has unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr).astype(
            _DTYPE_TAGS[arr.dtype.name], copy=False
        ).tobytes()
        directory.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.name,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "config": state.config.to_dict(),
        "step": state.step,
        "entities": list(bundle.entities),
        "tokenizer": {
            "vocab": dict(bundle.tokenizer.vocab),
            "max_seq_len": bundle.tokenizer.max_seq_len,
        },
        "normalization": _pipeline_to_json(bundle.pipeline),
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode(
        "utf-8"
    )
    body = MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes
    body += b"".join(blobs)
    body += struct.pack("<I", zlib.crc32(body))
    ensure_parent(path)
    Path(path).write_bytes(body)


def load_checkpoint(
    path: str | Path, expect_config: ModelConfig | None = None
) -> CheckpointBundle:
    """Read a checkpoint back; verifies checksum, magic and shapes."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    (header_len,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    data_start = header_start + header_len
    if data_start > len(raw) - 4:
        raise CheckpointError(f"{path}: header length overruns the file")
    try:
        header = json.loads(raw[header_start:data_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    try:
        config = ModelConfig(**header["config"])
        step = int(header["step"])
        entities = tuple(str(e) for e in header["entities"])
        tok_info = header["tokenizer"]
        tokenizer = Tokenizer(
            vocab=dict(tok_info["vocab"]), max_seq_len=int(tok_info["max_seq_len"])
        )
        pipeline = _pipeline_from_json(header["normalization"])
        directory = header["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    if expect_config is not None and config != expect_config:
        raise CheckpointError(
            f"{path}: checkpoint config {config.to_dict()} does not match "
            f"expected {expect_config.to_dict()}"
        )
    expected_shapes = {name: shape for name, shape, _ in param_specs(config)}
    data = raw[data_start:-4]
    tensors: dict[str, np.ndarray] = {}
    for entry in directory:
        name = entry["name"]
        shape = tuple(entry["shape"])
        dtype = entry["dtype"]
        if dtype not in _DTYPE_TAGS:
            raise CheckpointError(f"{path}: tensor {name} has dtype {dtype}")
        base = name.removeprefix("adam.m.").removeprefix("adam.v.")
        if base not in expected_shapes:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
        if shape != expected_shapes[base]:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {shape}, config implies "
                f"{expected_shapes[base]}"
            )
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"{path}: tensor {name} overruns the data block")
        arr = np.frombuffer(data[lo:hi], dtype=_DTYPE_TAGS[dtype]).reshape(shape)
        tensors[name] = arr.astype(dtype, copy=True)
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for name in expected_shapes:
        for store, key in ((params, name), (adam_m, f"adam.m.{name}"),
                           (adam_v, f"adam.v.{name}")):
            if key not in tensors:
                raise CheckpointError(f"{path}: missing tensor {key}")
            store[name] = tensors[key]
    state = ModelState(
        config=config, params=params, adam_m=adam_m, adam_v=adam_v, step=step
    )
    return CheckpointBundle(
        state=state, tokenizer=tokenizer, entities=entities, pipeline=pipeline
    )
