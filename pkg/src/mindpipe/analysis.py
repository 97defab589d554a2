"""Similarity metrics and corpus statistics.

Metric tokenization is lowercased whitespace splitting with punctuation left
attached, so scores are comparable across the raw and synthetic sides of a
pair without any language-specific preprocessing.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import UndefinedCorrelationError, ValidationError
from .prompts import CANONICAL_STYLES
from .tokenizers import TokenizerSpec, count_tokens

__all__ = [
    "metric_tokens",
    "bleu",
    "rouge",
    "StyleSimilarity",
    "style_similarity_report",
    "LengthBucket",
    "length_stats",
    "spearman",
]


def metric_tokens(text: str) -> list[str]:
    return text.lower().split()


def _encode_pair(reference: str, candidate: str, what: str):
    ref = metric_tokens(reference)
    cand = metric_tokens(candidate)
    if not ref or not cand:
        raise ValidationError(f"{what} requires nonempty reference and candidate")
    vocab: dict[str, int] = {}
    ref_ids = [vocab.setdefault(t, len(vocab)) for t in ref]
    cand_ids = [vocab.setdefault(t, len(vocab)) for t in cand]
    return ref_ids, cand_ids, len(vocab) - 1


def bleu(reference: str, candidate: str) -> float:
    """Sentence BLEU-4 of candidate against a single reference.

    Geometric mean of clipped n-gram precisions (orders 1..4, or 1..len for
    candidates shorter than 4 tokens) times a brevity penalty. Zero as soon
    as any required order has no matches.
    """
    ref_ids, cand_ids, max_id = _encode_pair(reference, candidate, "bleu")
    return kernels.bleu_from_ids(ref_ids, cand_ids, max_id)


def rouge(reference: str, candidate: str) -> dict[str, float]:
    """ROUGE-1/2 F1 over clipped n-gram overlap plus ROUGE-L F1 from the LCS."""
    ref_ids, cand_ids, max_id = _encode_pair(reference, candidate, "rouge")
    f1, f2, fl = kernels.rouge_from_ids(ref_ids, cand_ids, max_id)
    return {"rouge1_f": f1, "rouge2_f": f2, "rougeL_f": fl}


@dataclass
class StyleSimilarity:
    style: str
    pairs: int
    bleu_mean: float
    rouge1_mean: float
    rouge2_mean: float
    rougeL_mean: float

    def to_record(self) -> dict:
        return {
            "style": self.style,
            "pairs": self.pairs,
            "bleu_mean": self.bleu_mean,
            "rouge1_mean": self.rouge1_mean,
            "rouge2_mean": self.rouge2_mean,
            "rougeL_mean": self.rougeL_mean,
        }


def style_similarity_report(pairs: Iterable[tuple]) -> list[StyleSimilarity]:
    """Per-style mean similarity between raw chunks and their conversations.

    Pairs are (Chunk, Conversation); a pair whose keys disagree is an error.
    Rows come back sorted by bleu_mean, most similar style first.
    """
    sums: dict[str, list[float]] = {}
    counts: dict[str, int] = {}
    for chunk, conv in pairs:
        if chunk.doc_id != conv.doc_id or chunk.index != conv.chunk_index:
            raise ValidationError(
                f"mismatched pair: chunk ({chunk.doc_id!r}, {chunk.index}) vs "
                f"conversation ({conv.doc_id!r}, {conv.chunk_index})"
            )
        b = bleu(chunk.text, conv.text)
        r = rouge(chunk.text, conv.text)
        acc = sums.setdefault(conv.style, [0.0, 0.0, 0.0, 0.0])
        acc[0] += b
        acc[1] += r["rouge1_f"]
        acc[2] += r["rouge2_f"]
        acc[3] += r["rougeL_f"]
        counts[conv.style] = counts.get(conv.style, 0) + 1
    rows = [
        StyleSimilarity(
            style=style,
            pairs=counts[style],
            bleu_mean=acc[0] / counts[style],
            rouge1_mean=acc[1] / counts[style],
            rouge2_mean=acc[2] / counts[style],
            rougeL_mean=acc[3] / counts[style],
        )
        for style, acc in sums.items()
    ]
    rows.sort(key=lambda row: -row.bleu_mean)
    return rows


@dataclass
class LengthBucket:
    label: str
    count: int
    mean_tokens: float
    median_tokens: float

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "count": self.count,
            "mean_tokens": self.mean_tokens,
            "median_tokens": self.median_tokens,
        }


def _bucket_label(value: int, edges: Sequence[int]) -> str:
    for lo, hi in zip(edges, edges[1:]):
        if lo <= value < hi:
            return f"{lo}-{hi - 1}"
    return f"{edges[-1]}+"


def length_stats(
    conversations: Iterable,
    spec: TokenizerSpec | None = None,
    bucket_by: str = "style",
    chunk_tokens: dict[tuple[str, int], int] | None = None,
    bucket_edges: Sequence[int] = (0, 100, 200, 300, 400, 500),
) -> list[LengthBucket]:
    """Mean/median output length grouped by style or by input-length bucket."""
    if bucket_by not in ("style", "input_length"):
        raise ValidationError(f"bucket_by must be style or input_length, got {bucket_by!r}")
    groups: dict[str, list[int]] = {}
    for conv in conversations:
        if bucket_by == "style":
            label = conv.style
        else:
            if chunk_tokens is None:
                raise ValidationError("input_length bucketing needs chunk token counts")
            key = (conv.doc_id, conv.chunk_index)
            if key not in chunk_tokens:
                raise ValidationError(f"no chunk token count for key {key}")
            label = _bucket_label(chunk_tokens[key], bucket_edges)
        groups.setdefault(label, []).append(count_tokens(conv.text, spec))
    if not groups:
        raise ValidationError("length_stats requires a nonempty stream")

    def order(label: str):
        if bucket_by == "style":
            try:
                return (CANONICAL_STYLES.index(label), "")
            except ValueError:
                return (len(CANONICAL_STYLES), label)
        return (bucket_edges.index(int(label.split("-")[0].rstrip("+"))), "")

    return [
        LengthBucket(
            label=label,
            count=len(vals),
            mean_tokens=sum(vals) / len(vals),
            median_tokens=float(statistics.median(vals)),
        )
        for label, vals in sorted(groups.items(), key=lambda kv: order(kv[0]))
    ]


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=np.float64)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation: Pearson of the rank vectors, ties get average ranks."""
    if len(xs) != len(ys):
        raise ValidationError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValidationError("spearman needs at least two observations")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(np.dot(dx, dx))
    vy = float(np.dot(dy, dy))
    if vx == 0.0 or vy == 0.0:
        raise UndefinedCorrelationError(
            "rank variance is zero; correlation undefined"
        )
    return float(np.dot(dx, dy) / np.sqrt(vx * vy))
