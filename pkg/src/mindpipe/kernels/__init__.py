"""Backend dispatch for the metric kernels.

``MIND_KERNELS=python`` forces the pure-Python path, ``MIND_KERNELS=numba``
demands the JIT path (and fails loudly if numba is unavailable); unset or
``auto`` picks numba when it imports. Ids must fit in 16 bits for the packed
JIT kernels, and tiny inputs skip the JIT call overhead entirely, so the
Python kernels remain live on every configuration.
"""

from __future__ import annotations

import os

from ..errors import ConfigurationError
from . import _python

_FLAG = os.environ.get("MIND_KERNELS", "auto").strip().lower() or "auto"
if _FLAG not in ("auto", "numba", "python"):
    raise ConfigurationError(
        f"MIND_KERNELS must be auto, numba, or python; got {_FLAG!r}"
    )

HAS_NUMBA = False
if _FLAG in ("auto", "numba"):
    try:
        from . import _numba

        HAS_NUMBA = True
    except ImportError:
        if _FLAG == "numba":
            raise ConfigurationError(
                "MIND_KERNELS=numba but numba is not importable"
            ) from None
if not HAS_NUMBA:
    _numba = None

BACKEND = "numba" if HAS_NUMBA else "python"

# Below this many total tokens a JIT call costs more than it saves.
SMALL_INPUT_CUTOFF = 64
# Packed sort keys give each id 16 bits; id 0 maps to 1 so 65534 is the cap.
MAX_PACKED_ID = 65534


def active_backend() -> str:
    return BACKEND


def _use_python(n_ref: int, n_cand: int, max_id: int) -> bool:
    if BACKEND == "python":
        return True
    if max_id > MAX_PACKED_ID:
        return True
    return n_ref + n_cand <= SMALL_INPUT_CUTOFF


def bleu_from_ids(ref_ids: list[int], cand_ids: list[int], max_id: int) -> float:
    if _use_python(len(ref_ids), len(cand_ids), max_id):
        return _python.bleu_score(ref_ids, cand_ids)
    import numpy as np

    return _numba.bleu_score(
        np.asarray(ref_ids, dtype=np.int64), np.asarray(cand_ids, dtype=np.int64)
    )


def rouge_from_ids(
    ref_ids: list[int], cand_ids: list[int], max_id: int
) -> tuple[float, float, float]:
    if _use_python(len(ref_ids), len(cand_ids), max_id):
        return _python.rouge_scores(ref_ids, cand_ids)
    import numpy as np

    return _numba.rouge_scores(
        np.asarray(ref_ids, dtype=np.int64), np.asarray(cand_ids, dtype=np.int64)
    )
