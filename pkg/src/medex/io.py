"""Line-oriented file formats: JSONL corpora and label files, TSV tables.

All readers accept `#` comment lines and skip blank lines. All writers
produce deterministic bytes: keys sorted, `\\n` line endings, UTF-8.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorpusError, TableFormatError


def _lines(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (lineno, record) for every JSON object line in the file."""
    for lineno, line in _lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise CorpusError(f"{path}:{lineno}: expected a JSON object")
        yield lineno, obj


def ensure_parent(path: str | Path) -> None:
    """Create the directory an output file will land in."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_corpus(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield (doc_id, text) pairs from a corpus JSONL file."""
    for lineno, obj in read_jsonl(path):
        if "doc_id" not in obj or "text" not in obj:
            raise CorpusError(f"{path}:{lineno}: record needs 'doc_id' and 'text'")
        yield str(obj["doc_id"]), str(obj["text"])


def read_labels(path: str | Path) -> dict[str, frozenset[str]]:
    """Read a labels/predictions JSONL file into doc_id -> entity id set."""
    out: dict[str, frozenset[str]] = {}
    for lineno, obj in read_jsonl(path):
        if "doc_id" not in obj or "entities" not in obj:
            raise CorpusError(f"{path}:{lineno}: record needs 'doc_id' and 'entities'")
        doc_id = str(obj["doc_id"])
        if doc_id in out:
            raise CorpusError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
        out[doc_id] = frozenset(str(e) for e in obj["entities"])
    return out


def write_labels(path: str | Path, labels: dict[str, frozenset[str]]) -> None:
    """Write labels sorted by doc_id, entity ids sorted within each record."""
    write_jsonl(
        path,
        (
            {"doc_id": doc_id, "entities": sorted(labels[doc_id])}
            for doc_id in sorted(labels)
        ),
    )


def read_tsv_pairs(path: str | Path) -> Iterator[tuple[int, str, str]]:
    """Yield (lineno, key, value) from a two-column TSV table."""
    for lineno, line in _lines(path):
        if "\t" not in line:
            raise TableFormatError(f"{path}:{lineno}: expected KEY<TAB>VALUE")
        key, value = line.split("\t", 1)
        if not key.strip() or not value.strip():
            raise TableFormatError(f"{path}:{lineno}: empty key or value")
        yield lineno, key.strip(), value.strip()


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
