"""Document ingestion and fixed-window chunking.

Corpora are JSON-lines files, one object per line with fields
``id`` and ``text`` (``source`` and ``meta`` optional). Chunking packs the
token stream into windows of ``spec.window`` tokens; a trailing remainder
shorter than ``spec.min_trailing`` is merged into the previous chunk instead
of being emitted as a fragment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ValidationError
from .tokenizers import TokenizerSpec, get_tokenizer

__all__ = [
    "Document",
    "Chunk",
    "ReadStats",
    "read_corpus",
    "write_corpus",
    "chunk_document",
    "chunk_corpus",
    "read_chunks",
    "write_chunks",
]


@dataclass
class Document:
    id: str
    text: str
    source: str = ""
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("document id must be nonempty")

    def to_record(self) -> dict:
        return {"id": self.id, "text": self.text, "source": self.source, "meta": self.meta}


@dataclass
class Chunk:
    doc_id: str
    index: int
    text: str
    token_count: int

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"chunk index must be >= 0, got {self.index}")
        if self.token_count < 0:
            raise ValidationError("chunk token_count must be >= 0")

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "index": self.index,
            "text": self.text,
            "token_count": self.token_count,
        }


@dataclass
class ReadStats:
    """Mutable counters filled in while a corpus stream is consumed."""

    documents: int = 0
    skipped: int = 0


def _parse_line(line: str) -> Document | None:
    """One corpus record, or None when the line is malformed."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    doc_id = obj.get("id")
    text = obj.get("text")
    if not isinstance(doc_id, str) or not doc_id or not isinstance(text, str):
        return None
    source = obj.get("source", "")
    meta = obj.get("meta", {})
    if not isinstance(source, str) or not isinstance(meta, dict):
        return None
    return Document(id=doc_id, text=text, source=source, meta=meta)


def read_corpus(path: str, stats: ReadStats | None = None) -> Iterator[Document]:
    """Yield documents in file order; malformed lines are skipped and counted.

    A duplicate document id raises ValidationError naming both line numbers.
    """
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = _parse_line(line)
            if doc is None:
                if stats is not None:
                    stats.skipped += 1
                continue
            if doc.id in seen:
                raise ValidationError(
                    f"duplicate document id {doc.id!r} at lines "
                    f"{seen[doc.id]} and {lineno} of {path}"
                )
            seen[doc.id] = lineno
            if stats is not None:
                stats.documents += 1
            yield doc


def write_corpus(docs: Iterable[Document], path: str) -> int:
    """Write documents as JSON lines; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


def chunk_document(doc: Document, spec: TokenizerSpec | None = None) -> list[Chunk]:
    """Split a document into token windows.

    Non-final chunks hold exactly ``spec.window`` tokens. A trailing remainder
    shorter than ``spec.min_trailing`` merges into the previous chunk, so no
    chunk exceeds ``window + min_trailing - 1`` tokens. Documents shorter than
    one window come back as a single chunk; empty documents yield nothing.
    """
    spec = spec or TokenizerSpec()
    tok = get_tokenizer(spec.name)
    tokens = tok.encode(doc.text)
    if not tokens:
        return []
    windows = [tokens[i : i + spec.window] for i in range(0, len(tokens), spec.window)]
    if len(windows) > 1 and len(windows[-1]) < spec.min_trailing:
        tail = windows.pop()
        windows[-1] = windows[-1] + tail
    return [
        Chunk(doc_id=doc.id, index=i, text=tok.decode(win), token_count=len(win))
        for i, win in enumerate(windows)
    ]


def chunk_corpus(
    docs: Iterable[Document], spec: TokenizerSpec | None = None
) -> Iterator[Chunk]:
    for doc in docs:
        yield from chunk_document(doc, spec)


def read_chunks(path: str) -> Iterator[Chunk]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                chunk = Chunk(
                    doc_id=obj["doc_id"],
                    index=obj["index"],
                    text=obj["text"],
                    token_count=obj["token_count"],
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"bad chunk record at {path}:{lineno}: {exc}") from exc
            yield chunk


def write_chunks(chunks: Iterable[Chunk], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(chunk.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n
