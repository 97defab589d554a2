"""Pure-Python metric kernels: the fallback when numba is off or absent.

All functions take sequences of integer token ids. Small inputs are faster
here than through a JIT call, so the dispatcher also routes tiny pairs this
way regardless of backend.
"""

from __future__ import annotations

import math


def lcs_len(a, b) -> int:
    if len(a) == 0 or len(b) == 0:
        return 0
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0]
        append = cur.append
        best = 0
        for j, bj in enumerate(b, start=1):
            if ai == bj:
                val = prev[j - 1] + 1
            else:
                val = prev[j] if prev[j] > best else best
            append(val)
            best = val
        prev = cur
    return prev[-1]


def _ngram_counts(ids, n) -> dict:
    counts: dict = {}
    for i in range(len(ids) - n + 1):
        key = tuple(ids[i : i + n])
        counts[key] = counts.get(key, 0) + 1
    return counts


def _clipped_overlap(ref_counts: dict, cand_counts: dict) -> int:
    overlap = 0
    for gram, c in cand_counts.items():
        r = ref_counts.get(gram, 0)
        overlap += c if c < r else r
    return overlap


def bleu_score(ref_ids, cand_ids) -> float:
    nr = len(ref_ids)
    nc = len(cand_ids)
    max_order = 4 if nc > 4 else nc
    log_sum = 0.0
    for n in range(1, max_order + 1):
        if nr - n + 1 <= 0:
            return 0.0
        overlap = _clipped_overlap(_ngram_counts(ref_ids, n), _ngram_counts(cand_ids, n))
        if overlap == 0:
            return 0.0
        log_sum += math.log(overlap / (nc - n + 1))
    score = math.exp(log_sum / max_order)
    if nc < nr:
        score *= math.exp(1.0 - nr / nc)
    return score


def rouge_scores(ref_ids, cand_ids) -> tuple[float, float, float]:
    nr = len(ref_ids)
    nc = len(cand_ids)
    f = [0.0, 0.0]
    for n in (1, 2):
        ref_total = nr - n + 1
        cand_total = nc - n + 1
        # no n-grams on either side means no overlap evidence: score 0
        if ref_total <= 0 or cand_total <= 0:
            continue
        overlap = _clipped_overlap(_ngram_counts(ref_ids, n), _ngram_counts(cand_ids, n))
        if overlap:
            p = overlap / cand_total
            r = overlap / ref_total
            f[n - 1] = 2 * p * r / (p + r)
    lcs = lcs_len(ref_ids, cand_ids)
    if lcs:
        p = lcs / nc
        r = lcs / nr
        fl = 2 * p * r / (p + r)
    else:
        fl = 0.0
    return f[0], f[1], fl
