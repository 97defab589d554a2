"""Compare the JIT metric kernels against the pure-Python fallback.

Synthesizes chunk-vs-conversation sized token id pairs and times BLEU,
ROUGE, and raw LCS through both backends. Run from the repo root:

    python benchmarks/bench_kernels.py --pairs 200
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from mindpipe.kernels import _python

try:
    import mindpipe.kernels._numba as _numba

    HAS_NUMBA = True
except ImportError:
    _numba = None
    HAS_NUMBA = False


def make_pairs(n_pairs: int, ref_len: int, cand_len: int, vocab: int, seed: int):
    rng = random.Random(seed)
    pairs = []
    for _ in range(n_pairs):
        ref = [rng.randrange(vocab) for _ in range(ref_len)]
        # candidate shares roughly half its tokens with the reference
        cand = [
            ref[rng.randrange(ref_len)] if rng.random() < 0.5 else rng.randrange(vocab)
            for _ in range(cand_len)
        ]
        pairs.append((ref, cand))
    return pairs


def bench(label: str, fn, pairs, repeat: int = 1) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for ref, cand in pairs:
            fn(ref, cand)
        best = min(best, time.perf_counter() - t0)
    print(f"  {label:<28} {best:8.3f}s  ({best / len(pairs) * 1e3:7.3f} ms/pair)")
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--ref-len", type=int, default=500)
    ap.add_argument("--cand-len", type=int, default=650)
    ap.add_argument("--vocab", type=int, default=800)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()

    pairs = make_pairs(args.pairs, args.ref_len, args.cand_len, args.vocab, args.seed)
    np_pairs = [
        (np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64)) for r, c in pairs
    ]

    print(
        f"{args.pairs} pairs, ref {args.ref_len} x cand {args.cand_len} tokens, "
        f"vocab {args.vocab}"
    )

    if HAS_NUMBA:
        # first calls trigger compilation; keep that out of the timings
        _numba.bleu_score(*np_pairs[0])
        _numba.rouge_scores(*np_pairs[0])
        _numba.lcs_len(*np_pairs[0])

    print("bleu:")
    t_py = bench("python", _python.bleu_score, pairs)
    if HAS_NUMBA:
        t_nb = bench("numba", _numba.bleu_score, np_pairs)
        print(f"  speedup: {t_py / t_nb:.1f}x")

    print("rouge (includes LCS):")
    t_py = bench("python", _python.rouge_scores, pairs)
    if HAS_NUMBA:
        t_nb = bench("numba", _numba.rouge_scores, np_pairs)
        print(f"  speedup: {t_py / t_nb:.1f}x")

    print("lcs only:")
    t_py = bench("python", _python.lcs_len, pairs)
    if HAS_NUMBA:
        t_nb = bench("numba", _numba.lcs_len, np_pairs)
        print(f"  speedup: {t_py / t_nb:.1f}x")

    if not HAS_NUMBA:
        print("numba unavailable; only the fallback was timed")


if __name__ == "__main__":
    main()
