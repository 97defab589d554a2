"""Dataset composition and token-budgeted blending.

Composition turns surviving conversations (plus their raw chunks) into a
corpus-format dataset again, so every output is re-ingestible. Blending
allocates a token budget across named datasets with exact largest-remainder
rounding and then interleaves whole documents by largest token deficit.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .corpus import Chunk, Document, read_corpus
from .errors import ValidationError
from .genclient import Conversation
from .prompts import StyleRegistry, default_registry
from .tokenizers import TokenizerSpec, count_tokens

__all__ = [
    "select_longest",
    "compose_dataset",
    "DatasetSpec",
    "Allocation",
    "BlendManifest",
    "compute_blend",
    "epochs_for",
    "sample_blend",
    "dataset_token_total",
]

COMPOSE_MODES = ("longest", "all", "concat", "mix1to1")


def select_longest(
    group: Sequence[Conversation],
    spec: TokenizerSpec | None = None,
    registry: StyleRegistry | None = None,
) -> Conversation:
    """The longest conversation in a one-chunk group; style order breaks ties."""
    if not group:
        raise ValidationError("select_longest needs a nonempty group")
    registry = registry or default_registry()
    key = (group[0].doc_id, group[0].chunk_index)
    styles_seen = set()
    for conv in group:
        if (conv.doc_id, conv.chunk_index) != key:
            raise ValidationError(
                f"mixed keys in group: {key} vs {(conv.doc_id, conv.chunk_index)}"
            )
        if conv.style in styles_seen:
            raise ValidationError(f"duplicate style {conv.style!r} in group")
        styles_seen.add(conv.style)
    return min(
        group,
        key=lambda c: (-count_tokens(c.text, spec), registry.style_rank(c.style)),
    )


def _conv_doc(conv: Conversation, suffix: str | None = None) -> Document:
    ident = f"{conv.doc_id}/{conv.chunk_index}/{suffix or conv.style}"
    return Document(
        id=ident,
        text=conv.text,
        source="dialogue",
        meta={
            "doc_id": conv.doc_id,
            "chunk_index": str(conv.chunk_index),
            "style": conv.style,
        },
    )


def compose_dataset(
    chunks: Iterable[Chunk],
    conversations: Iterable[Conversation],
    mode: str,
    spec: TokenizerSpec | None = None,
    registry: StyleRegistry | None = None,
) -> tuple[dict[str, list[Document]], dict]:
    """Build one or two labeled document lists from chunks and conversations.

    longest: one document per chunk, the longest surviving conversation.
    all: one document per surviving conversation.
    concat: raw chunk followed by its conversations in canonical style order.
    mix1to1: labeled raw and synthetic halves plus their token totals, for
    an equal-token blend downstream.
    """
    if mode not in COMPOSE_MODES:
        raise ValidationError(f"unknown compose mode {mode!r} (have {COMPOSE_MODES})")
    registry = registry or default_registry()
    chunk_list = list(chunks)
    convs = list(conversations)
    for conv in convs:
        if conv.status != "ok":
            raise ValidationError(
                f"compose_dataset expects ok conversations, got failed {conv.key}"
            )
    by_key: dict[tuple[str, int], list[Conversation]] = {}
    for conv in convs:
        by_key.setdefault((conv.doc_id, conv.chunk_index), []).append(conv)
    summary: dict = {"mode": mode, "keys": len(chunk_list), "raw_only": 0}

    if mode == "all":
        docs = [_conv_doc(c) for c in convs]
        out = {"dataset": docs}
    elif mode == "longest":
        docs = []
        for chunk in chunk_list:
            group = by_key.get((chunk.doc_id, chunk.index))
            if not group:
                summary["raw_only"] += 1
                continue
            winner = select_longest(group, spec, registry)
            docs.append(_conv_doc(winner, suffix="longest"))
        out = {"dataset": docs}
    elif mode == "concat":
        docs = []
        for chunk in chunk_list:
            group = by_key.get((chunk.doc_id, chunk.index), [])
            ordered = sorted(group, key=lambda c: registry.style_rank(c.style))
            if not ordered:
                summary["raw_only"] += 1
            parts = [chunk.text] + [c.text for c in ordered]
            docs.append(
                Document(
                    id=f"{chunk.doc_id}/{chunk.index}/concat",
                    text="\n\n".join(parts),
                    source="concat",
                    meta={
                        "doc_id": chunk.doc_id,
                        "chunk_index": str(chunk.index),
                        "styles": ",".join(c.style for c in ordered),
                    },
                )
            )
        out = {"dataset": docs}
    else:
        raw_docs = [
            Document(
                id=f"{chunk.doc_id}/{chunk.index}/raw",
                text=chunk.text,
                source="raw",
                meta={"doc_id": chunk.doc_id, "chunk_index": str(chunk.index)},
            )
            for chunk in chunk_list
        ]
        out = {"raw": raw_docs, "synthetic": [_conv_doc(c) for c in convs]}

    summary["documents"] = {label: len(docs) for label, docs in out.items()}
    summary["token_totals"] = {
        label: sum(count_tokens(d.text, spec) for d in docs)
        for label, docs in out.items()
    }
    return out, summary


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str
    total_tokens: int
    weight: float

    def __post_init__(self):
        if not self.name:
            raise ValidationError("dataset name must be nonempty")
        if self.weight <= 0:
            raise ValidationError(f"weight must be positive, got {self.weight}")
        if self.total_tokens < 0:
            raise ValidationError("total_tokens must be >= 0")


@dataclass(frozen=True)
class Allocation:
    name: str
    tokens_to_see: int
    epochs: float
    normalized_weight: float

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "tokens_to_see": self.tokens_to_see,
            "epochs": self.epochs,
            "normalized_weight": self.normalized_weight,
        }


@dataclass(frozen=True)
class BlendManifest:
    budget_tokens: int
    seed: int
    allocations: tuple[Allocation, ...]

    def to_record(self) -> dict:
        return {
            "budget_tokens": self.budget_tokens,
            "seed": self.seed,
            "allocations": [a.to_record() for a in self.allocations],
        }

    @classmethod
    def from_record(cls, obj: dict) -> "BlendManifest":
        return cls(
            budget_tokens=obj["budget_tokens"],
            seed=obj["seed"],
            allocations=tuple(
                Allocation(
                    name=a["name"],
                    tokens_to_see=a["tokens_to_see"],
                    epochs=a["epochs"],
                    normalized_weight=a["normalized_weight"],
                )
                for a in obj["allocations"]
            ),
        )


def epochs_for(tokens_to_see: int, dataset_tokens: int) -> float:
    """Passes over the dataset needed to see that many tokens, to 3 decimals."""
    if dataset_tokens <= 0:
        raise ValidationError("dataset_tokens must be positive")
    return round(tokens_to_see / dataset_tokens, 3)


def compute_blend(
    specs: Sequence[DatasetSpec], budget_tokens: int, seed: int = 0
) -> BlendManifest:
    """Split the budget across datasets by weight, exactly.

    Quotas round by largest remainder so the allocations sum to the budget
    token for token; epochs may legitimately exceed 1.
    """
    if not specs:
        raise ValidationError("compute_blend needs at least one dataset")
    if budget_tokens <= 0:
        raise ValidationError("budget_tokens must be positive")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValidationError(f"dataset names must be unique, got {names}")
    wsum = sum(s.weight for s in specs)
    exact = [budget_tokens * s.weight / wsum for s in specs]
    floors = [int(x) for x in exact]
    leftover = budget_tokens - sum(floors)
    by_remainder = sorted(
        range(len(specs)), key=lambda i: (-(exact[i] - floors[i]), i)
    )
    for i in by_remainder[:leftover]:
        floors[i] += 1
    allocations = tuple(
        Allocation(
            name=s.name,
            tokens_to_see=floors[i],
            epochs=epochs_for(floors[i], s.total_tokens),
            normalized_weight=s.weight / wsum,
        )
        for i, s in enumerate(specs)
    )
    return BlendManifest(budget_tokens=budget_tokens, seed=seed, allocations=allocations)


def dataset_token_total(path: str | Path, spec: TokenizerSpec | None = None) -> int:
    return sum(count_tokens(doc.text, spec) for doc in read_corpus(str(path)))


class _BlendSource:
    """Re-iterable document source with cached per-document token counts."""

    def __init__(self, name: str, source, spec: TokenizerSpec | None):
        self.name = name
        self.spec = spec
        if isinstance(source, (str, Path)):
            self.shards = [str(source)]
            self.in_memory = None
        elif isinstance(source, (list, tuple)) and source and isinstance(source[0], (str, Path)):
            self.shards = [str(p) for p in source]
            self.in_memory = None
        else:
            docs = list(source)
            self.in_memory = [(d, count_tokens(d.text, spec)) for d in docs]
            self.shards = []
        self._cache: dict[str, list[tuple[Document, int]]] = {}

    def _shard_docs(self, shard: str) -> list[tuple[Document, int]]:
        if shard not in self._cache:
            self._cache[shard] = [
                (doc, count_tokens(doc.text, self.spec)) for doc in read_corpus(shard)
            ]
        return self._cache[shard]

    def epoch_iter(self, epoch: int, seed: int) -> Iterator[tuple[Document, int]]:
        if self.in_memory is not None:
            yield from self.in_memory
            return
        order = list(range(len(self.shards)))
        if epoch > 0 and len(order) > 1:
            digest = hashlib.sha256(f"{seed}|{self.name}|{epoch}".encode()).digest()
            random.Random(int.from_bytes(digest[:8], "big")).shuffle(order)
        for idx in order:
            yield from self._shard_docs(self.shards[idx])


def sample_blend(
    manifest: BlendManifest,
    sources: dict[str, object],
    spec: TokenizerSpec | None = None,
) -> Iterator[Document]:
    """Interleave whole documents until every allocation is met.

    Each step emits from the source furthest behind its quota in relative
    terms (largest unmet fraction of tokens_to_see; manifest order breaks
    ties), so the running token shares track the blend weights from the
    start instead of only at exhaustion. Sources wrap across epochs with a
    seeded shuffle of shard order. Deterministic for a given
    (manifest, sources) input.
    """
    missing = [a.name for a in manifest.allocations if a.name not in sources]
    if missing:
        raise ValidationError(f"no source provided for manifest entries: {missing}")
    wrapped = {
        a.name: _BlendSource(a.name, sources[a.name], spec)
        for a in manifest.allocations
    }
    owed = {a.name: a.tokens_to_see for a in manifest.allocations}
    emitted = {a.name: 0 for a in manifest.allocations}
    order = [a.name for a in manifest.allocations]
    iters = {
        name: wrapped[name].epoch_iter(0, manifest.seed) for name in order
    }
    epoch = {name: 0 for name in order}
    epoch_yield = {name: 0 for name in order}

    while True:
        pick = None
        best = 0.0
        for name in order:
            if owed[name] <= 0:
                continue
            behind = (owed[name] - emitted[name]) / owed[name]
            if behind > best:
                best = behind
                pick = name
        if pick is None:
            return
        try:
            doc, ntok = next(iters[pick])
        except StopIteration:
            if epoch_yield[pick] == 0:
                raise ValidationError(
                    f"source {pick!r} yields no tokens; cannot meet its allocation"
                ) from None
            epoch[pick] += 1
            epoch_yield[pick] = 0
            iters[pick] = wrapped[pick].epoch_iter(epoch[pick], manifest.seed)
            doc, ntok = next(iters[pick])
        epoch_yield[pick] += ntok
        emitted[pick] += ntok
        meta = dict(doc.meta)
        meta["blend_source"] = pick
        yield Document(id=doc.id, text=doc.text, source=doc.source, meta=meta)
