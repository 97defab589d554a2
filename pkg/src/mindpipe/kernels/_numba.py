"""JIT metric kernels.

N-grams are packed into uint64 sort keys, 16 bits per token id, so clipped
overlap becomes a merge over two sorted arrays. Callers guarantee ids fit in
16 bits (the dispatcher falls back to the Python kernels otherwise).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def lcs_len(a, b):
    n = b.shape[0]
    prev = np.zeros(n + 1, np.int64)
    cur = np.zeros(n + 1, np.int64)
    for i in range(a.shape[0]):
        ai = a[i]
        for j in range(1, n + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        prev, cur = cur, prev
    return prev[n]


@njit(cache=True)
def _packed_sorted_ngrams(ids, n):
    m = ids.shape[0] - n + 1
    out = np.empty(m, np.uint64)
    for i in range(m):
        key = np.uint64(0)
        for j in range(n):
            key = (key << np.uint64(16)) | np.uint64(ids[i + j] + 1)
        out[i] = key
    out.sort()
    return out


@njit(cache=True)
def _sorted_overlap(a, b):
    i = 0
    j = 0
    overlap = 0
    na = a.shape[0]
    nb = b.shape[0]
    while i < na and j < nb:
        va = a[i]
        vb = b[j]
        if va == vb:
            ca = 0
            while i < na and a[i] == va:
                ca += 1
                i += 1
            cb = 0
            while j < nb and b[j] == va:
                cb += 1
                j += 1
            overlap += ca if ca < cb else cb
        elif va < vb:
            i += 1
        else:
            j += 1
    return overlap


@njit(cache=True)
def bleu_score(ref_ids, cand_ids):
    nr = ref_ids.shape[0]
    nc = cand_ids.shape[0]
    max_order = 4 if nc > 4 else nc
    log_sum = 0.0
    for n in range(1, max_order + 1):
        if nr - n + 1 <= 0:
            return 0.0
        overlap = _sorted_overlap(
            _packed_sorted_ngrams(ref_ids, n), _packed_sorted_ngrams(cand_ids, n)
        )
        if overlap == 0:
            return 0.0
        log_sum += np.log(overlap / (nc - n + 1))
    score = np.exp(log_sum / max_order)
    if nc < nr:
        score *= np.exp(1.0 - nr / nc)
    return score


@njit(cache=True)
def rouge_scores(ref_ids, cand_ids):
    nr = ref_ids.shape[0]
    nc = cand_ids.shape[0]
    f1 = 0.0
    f2 = 0.0
    for n in range(1, 3):
        ref_total = nr - n + 1
        cand_total = nc - n + 1
        if ref_total <= 0 or cand_total <= 0:
            val = 0.0
        else:
            overlap = _sorted_overlap(
                _packed_sorted_ngrams(ref_ids, n), _packed_sorted_ngrams(cand_ids, n)
            )
            if overlap == 0:
                val = 0.0
            else:
                p = overlap / cand_total
                r = overlap / ref_total
                val = 2 * p * r / (p + r)
        if n == 1:
            f1 = val
        else:
            f2 = val
    lcs = lcs_len(ref_ids, cand_ids)
    if lcs == 0:
        fl = 0.0
    else:
        p = lcs / nc
        r = lcs / nr
        fl = 2 * p * r / (p + r)
    return f1, f2, fl
