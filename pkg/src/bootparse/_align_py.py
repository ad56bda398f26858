"""Pure numpy versions of the aligner kernels (same signatures as ``_align_ext``)."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=4096)
def _prior(m: int, n: int, lam: float) -> np.ndarray:
    i = np.arange(1, m + 1, dtype=np.float64)[:, None] / m
    j = np.arange(1, n + 1, dtype=np.float64)[None, :] / n
    w = np.exp(-lam * np.abs(i - j))
    return w / w.sum(axis=1, keepdims=True)


def estep(tgt_len, src_len, pair_off, pair_idx, t, p0, lam, null_t, post, lo, hi):
    ll = 0.0
    for s in range(lo, hi):
        m, n = int(tgt_len[s]), int(src_len[s])
        base = int(pair_off[s])
        idx = pair_idx[base:base + m * n].reshape(m, n)
        scores = (1.0 - p0) * _prior(m, n, lam) * t[idx]
        tot = p0 * null_t + scores.sum(axis=1)
        post[base:base + m * n] = (scores / tot[:, None]).ravel()
        ll += float(np.log(tot).sum())
    return ll


def viterbi(m, n, tvals, p0, lam, null_t):
    scores = (1.0 - p0) * _prior(m, n, lam) * np.asarray(tvals).reshape(m, n)
    out = np.zeros(m, dtype=np.int64)
    null = p0 * null_t
    for i in range(m):
        j = int(np.argmax(scores[i]))  # first maximum wins ties
        if scores[i, j] > null:
            out[i] = j + 1
    return out
