"""Exception hierarchy. User-facing errors derive from MedexError so the CLI
can map them to exit code 1; anything else is an internal error (exit 2)."""


class MedexError(Exception):
    """Base class for all user-facing errors."""


class KBFormatError(MedexError):
    """Knowledge-base file does not parse or violates an invariant."""


class SynonymCollisionError(KBFormatError):
    """Two entities share a synonym after normalization."""


class TableFormatError(MedexError):
    """Abbreviation or lemma table is malformed."""


class CorpusError(MedexError):
    """Corpus stream violates a contract (duplicate doc_id, bad record)."""


class TemplateError(MedexError):
    """Document template references an unknown slot or does not parse."""


class ConfigError(MedexError):
    """Run configuration is invalid or contains unknown keys."""


class CheckpointError(MedexError):
    """Checkpoint file is corrupt, truncated, or incompatible."""


class TrainingDivergedError(MedexError):
    """Loss became non-finite during training."""
