"""Pure-Python fallback for the compiled kernels.

Bit-for-bit compatible with metabench._kernels: both draw from the same
splitmix64 stream and evaluate the sampling weights with identical IEEE-754
double expressions, so a fixed seed yields identical topic assignments no
matter which backend gets selected at import.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for b in (seed & _MASK64).to_bytes(8, "little"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _next(state: int) -> tuple[int, int]:
    # splitmix64: state update plus output mix
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return state, z ^ (z >> 31)


def lda_gibbs(doc_ids, term_ids, n_docs: int, n_terms: int, n_topics: int,
              alpha: float, beta: float, n_iters: int, seed: int):
    """Collapsed Gibbs sampling over token-topic assignments.

    doc_ids and term_ids are parallel int32 arrays, one entry per token,
    ordered by document then position. Assignments are initialized from the
    same RNG stream the sweeps consume. Returns (z, doc_topic, topic_term,
    topic_totals) as int32 arrays.
    """
    doc_ids = np.ascontiguousarray(doc_ids, dtype=np.int32)
    term_ids = np.ascontiguousarray(term_ids, dtype=np.int32)
    n_tokens = len(term_ids)
    docs = doc_ids.tolist()
    terms = term_ids.tolist()

    z = [0] * n_tokens
    n_dk = [0] * (n_docs * n_topics)
    n_kt = [0] * (n_topics * n_terms)
    n_k = [0] * n_topics
    state = seed & _MASK64

    for i in range(n_tokens):
        state, r = _next(state)
        u = (r >> 11) * _INV_2_53
        k = int(u * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        z[i] = k
        n_dk[docs[i] * n_topics + k] += 1
        n_kt[k * n_terms + terms[i]] += 1
        n_k[k] += 1

    v_beta = n_terms * beta
    cum = [0.0] * n_topics
    for _ in range(n_iters):
        for i in range(n_tokens):
            d = docs[i]
            t = terms[i]
            k = z[i]
            n_dk[d * n_topics + k] -= 1
            n_kt[k * n_terms + t] -= 1
            n_k[k] -= 1
            total = 0.0
            for j in range(n_topics):
                total = total + (n_dk[d * n_topics + j] + alpha) \
                    * (n_kt[j * n_terms + t] + beta) / (n_k[j] + v_beta)
                cum[j] = total
            state, r = _next(state)
            u = ((r >> 11) * _INV_2_53) * total
            k = 0
            while k < n_topics - 1 and cum[k] <= u:
                k += 1
            z[i] = k
            n_dk[d * n_topics + k] += 1
            n_kt[k * n_terms + t] += 1
            n_k[k] += 1

    return (
        np.asarray(z, dtype=np.int32),
        np.asarray(n_dk, dtype=np.int32).reshape(n_docs, n_topics),
        np.asarray(n_kt, dtype=np.int32).reshape(n_topics, n_terms),
        np.asarray(n_k, dtype=np.int32),
    )
