"""Distant-supervision medical entity extraction.

Free text is labeled by exact dictionary matching against a normalized
KB lexicon; a small transformer encoder then learns to emit the entity
set for a whole document in one multi-label decision. The package also
ships a deterministic synthetic corpus generator and the evaluation
protocols (frequency-binned recall, discrepancy taxonomy) used to judge
the result.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    CorpusError,
    KBFormatError,
    MedexError,
    SynonymCollisionError,
    TableFormatError,
    TemplateError,
    TrainingDivergedError,
)
from .evaluation import (
    DiscrepancyCase,
    DiscrepancyRow,
    RecallRow,
    classify_discrepancy,
    discrepancy_table,
    entity_instance_counts,
    group_stats,
    recall_by_bin,
)
from .kb import (
    Entity,
    KnowledgeBase,
    NormalizedLexicon,
    build_lexicon,
    filter_min_frequency,
    load_kb,
    load_lexicon,
    save_lexicon,
    select_top_entities,
)
from .labeler import (
    DistantLabeler,
    LabeledCorpus,
    LabelSet,
    candidate_windows,
    label_corpus,
    label_document,
    match_spans,
)
from .model import (
    CheckpointBundle,
    EntityExtractor,
    ModelConfig,
    ModelState,
    Tokenizer,
    TrainConfig,
    init_model,
    load_checkpoint,
    mlm_pretrain,
    save_checkpoint,
    train_classifier,
)
from .runconfig import RunConfig, load_run_config
from .synthgen import (
    GenConfig,
    GoldCorpus,
    Mention,
    NoiseConfig,
    Template,
    frequency_plan,
    generate_corpus,
    load_templates,
    parse_templates,
    split_corpus,
)
from .textnorm import (
    NormalizationPipeline,
    NormalizedDocument,
    TextNormalizer,
    normalize,
    normalize_tokens,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointBundle",
    "CheckpointError",
    "ConfigError",
    "CorpusError",
    "DiscrepancyCase",
    "DiscrepancyRow",
    "DistantLabeler",
    "Entity",
    "EntityExtractor",
    "GenConfig",
    "GoldCorpus",
    "KBFormatError",
    "KnowledgeBase",
    "LabelSet",
    "LabeledCorpus",
    "MedexError",
    "Mention",
    "ModelConfig",
    "ModelState",
    "NoiseConfig",
    "NormalizationPipeline",
    "NormalizedDocument",
    "NormalizedLexicon",
    "RecallRow",
    "RunConfig",
    "SynonymCollisionError",
    "TableFormatError",
    "Template",
    "TemplateError",
    "TextNormalizer",
    "Tokenizer",
    "TrainConfig",
    "TrainingDivergedError",
    "build_lexicon",
    "candidate_windows",
    "classify_discrepancy",
    "discrepancy_table",
    "entity_instance_counts",
    "filter_min_frequency",
    "frequency_plan",
    "generate_corpus",
    "group_stats",
    "init_model",
    "label_corpus",
    "label_document",
    "load_checkpoint",
    "load_kb",
    "load_lexicon",
    "load_run_config",
    "load_templates",
    "match_spans",
    "mlm_pretrain",
    "normalize",
    "normalize_tokens",
    "parse_templates",
    "recall_by_bin",
    "save_checkpoint",
    "save_lexicon",
    "select_top_entities",
    "split_corpus",
    "tokenize",
    "train_classifier",
]
