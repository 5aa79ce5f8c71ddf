# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: seeded FNV-1a hashing and the collapsed Gibbs sweep.

Must stay bit-identical to metabench._kernels_py; any change here needs the
mirror change there (the parity test enforces it).
"""

import numpy as np

from libc.stdint cimport int32_t, uint8_t, uint64_t

BACKEND = "compiled"

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325UL
cdef uint64_t FNV_PRIME = 0x100000001B3UL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


def fnv1a64(bytes data, seed=0):
    """Seeded 64-bit FNV-1a hash of a byte string."""
    cdef uint64_t h = FNV_OFFSET
    cdef uint64_t s = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef const uint8_t* p = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t i
    for i in range(8):
        h = (h ^ ((s >> (8 * i)) & 0xFF)) * FNV_PRIME
    for i in range(n):
        h = (h ^ p[i]) * FNV_PRIME
    return h


cdef inline uint64_t _mix(uint64_t state) nogil:
    cdef uint64_t z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9UL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBUL
    return z ^ (z >> 31)


def lda_gibbs(doc_ids, term_ids, int n_docs, int n_terms, int n_topics,
              double alpha, double beta, int n_iters, seed):
    """Collapsed Gibbs sampling over token-topic assignments.

    Same contract and output as the pure fallback; see _kernels_py.lda_gibbs.
    """
    cdef int32_t[::1] docs = np.ascontiguousarray(doc_ids, dtype=np.int32)
    cdef int32_t[::1] terms = np.ascontiguousarray(term_ids, dtype=np.int32)
    cdef Py_ssize_t n_tokens = terms.shape[0]

    z_arr = np.zeros(n_tokens, dtype=np.int32)
    n_dk_arr = np.zeros((n_docs, n_topics), dtype=np.int32)
    n_kt_arr = np.zeros((n_topics, n_terms), dtype=np.int32)
    n_k_arr = np.zeros(n_topics, dtype=np.int32)
    cum_arr = np.zeros(n_topics, dtype=np.float64)

    cdef int32_t[::1] z = z_arr
    cdef int32_t[:, ::1] n_dk = n_dk_arr
    cdef int32_t[:, ::1] n_kt = n_kt_arr
    cdef int32_t[::1] n_k = n_k_arr
    cdef double[::1] cum = cum_arr

    cdef uint64_t state = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t r
    cdef double u, total, v_beta
    cdef Py_ssize_t i
    cdef int d, t, k, j, it

    for i in range(n_tokens):
        state = state + 0x9E3779B97F4A7C15UL
        r = _mix(state)
        u = (r >> 11) * INV_2_53
        k = <int> (u * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        z[i] = k
        n_dk[docs[i], k] += 1
        n_kt[k, terms[i]] += 1
        n_k[k] += 1

    v_beta = n_terms * beta
    for it in range(n_iters):
        for i in range(n_tokens):
            d = docs[i]
            t = terms[i]
            k = z[i]
            n_dk[d, k] -= 1
            n_kt[k, t] -= 1
            n_k[k] -= 1
            total = 0.0
            for j in range(n_topics):
                total = total + (n_dk[d, j] + alpha) \
                    * (n_kt[j, t] + beta) / (n_k[j] + v_beta)
                cum[j] = total
            state = state + 0x9E3779B97F4A7C15UL
            r = _mix(state)
            u = ((r >> 11) * INV_2_53) * total
            k = 0
            while k < n_topics - 1 and cum[k] <= u:
                k += 1
            z[i] = k
            n_dk[d, k] += 1
            n_kt[k, t] += 1
            n_k[k] += 1

    return z_arr, n_dk_arr, n_kt_arr, n_k_arr
