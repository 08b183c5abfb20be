"""TOML run configuration.

One file drives every stage: a global seed plus sections kb, gen,
model, train and eval. Parsing is strict: unknown sections or keys are
rejected, values are type-checked, and every field has a default, so an
empty file is a valid config. Relative paths inside the file resolve
against the file's own directory.

The MEDEX_SEED environment variable, when set, overrides the seed.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError

SEED_ENV_VAR = "MEDEX_SEED"


@dataclass(frozen=True)
class KBSection:
    path: str = "kb.jsonl"
    abbreviations: str = ""
    lemmas: str = ""
    max_term_len: int = 7
    top_k: int = 0
    min_train_occurrences: int = 0


@dataclass(frozen=True)
class GenSection:
    n_docs: int = 1000
    entities_min: int = 1
    entities_max: int = 4
    zipf_exponent: float = 1.2
    template_file: str = "templates.txt"
    typo_rate: float = 0.0
    insertion_rate: float = 0.0
    unseen_form_rate: float = 0.0
    train_fraction: float = 0.8


@dataclass(frozen=True)
class ModelSection:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 64
    pooling: str = "cls"
    dtype: str = "float32"
    min_vocab_freq: int = 1


@dataclass(frozen=True)
class TrainSection:
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
    pretrain_steps: int = 0


@dataclass(frozen=True)
class EvalSection:
    bins: tuple[int, ...] = (0, 500, 2500, 50000)
    macro: bool = False
    format: str = "csv"
    discrepancy_entities: int = 15


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    kb: KBSection = field(default_factory=KBSection)
    gen: GenSection = field(default_factory=GenSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


_SECTIONS = {
    "kb": KBSection,
    "gen": GenSection,
    "model": ModelSection,
    "train": TrainSection,
    "eval": EvalSection,
}


def _coerce(section: str, name: str, expected: type, value):
    # bool is an int subclass; keep the two apart.
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif expected is str:
        if isinstance(value, str):
            return value
    elif expected is tuple:
        if isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            return tuple(value)
    raise ConfigError(
        f"[{section}] {name}: expected {expected.__name__}, "
        f"got {type(value).__name__} ({value!r})"
    )


def _parse_section(name: str, cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(
            f"[{name}] has unknown keys: {', '.join(sorted(unknown))}"
        )
    kwargs = {}
    for key, value in data.items():
        # annotations are strings under deferred evaluation
        anno = known[key].type
        anno = anno if isinstance(anno, str) else getattr(anno, "__name__", "")
        if anno.startswith("tuple"):
            base = tuple
        else:
            base = {"int": int, "float": float, "str": str, "bool": bool}.get(anno)
        if base is None:
            raise ConfigError(f"[{name}] {key}: unsupported field type {anno}")
        kwargs[key] = _coerce(name, key, base, value)
    return cls(**kwargs)


def parse_run_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a RunConfig from a parsed TOML document, strictly."""
    allowed = {"seed"} | set(_SECTIONS)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown top-level keys: {', '.join(sorted(unknown))}"
        )
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed: expected int, got {seed!r}")
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = _parse_section(name, cls, raw)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from None
    return RunConfig(
        seed=seed, base_dir=base_dir or Path.cwd(), **sections
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
    return parse_run_config(data, base_dir=path.parent.resolve())


def default_config_toml() -> str:
    """Render the full default configuration as commented TOML."""
    lines = ["# every key below shows its default; omit any you do not change",
             "seed = 0", ""]
    for name, cls in _SECTIONS.items():
        lines.append(f"[{name}]")
        for f in fields(cls):
            value = f.default
            if value is dataclasses.MISSING:
                value = f.default_factory()  # type: ignore[misc]
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, str):
                rendered = f'"{value}"'
            elif isinstance(value, tuple):
                rendered = "[" + ", ".join(str(v) for v in value) + "]"
            else:
                rendered = repr(value)
            lines.append(f"{f.name} = {rendered}")
        lines.append("")
    return "\n".join(lines)
