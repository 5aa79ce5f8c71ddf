#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot loops (collapsed Gibbs sweeps and feature hashing) on a
synthetic workload, verifies both backends produce identical output, and
prints a comparison table.

Usage: python benchmarks/bench_kernels.py [--docs 120] [--iters 40] ...
"""

from __future__ import annotations

import argparse
import string
import time

import numpy as np

from metabench import _kernels_py

try:
    from metabench import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def synthetic_corpus(rng, n_docs, tokens_per_doc, vocab_size):
    doc_ids = np.repeat(np.arange(n_docs, dtype=np.int32), tokens_per_doc)
    term_ids = rng.integers(0, vocab_size, size=doc_ids.size).astype(np.int32)
    return doc_ids, term_ids


def synthetic_features(rng, n_texts, words_per_text):
    letters = np.array(list(string.ascii_lowercase))
    feats = []
    for _ in range(n_texts):
        words = ["".join(rng.choice(letters, size=rng.integers(3, 10)))
                 for _ in range(words_per_text)]
        joined = " ".join(words)
        text_feats = ["w:" + w for w in words]
        text_feats += ["c:" + joined[i:i + 3] for i in range(len(joined) - 2)]
        feats.append([f.encode("utf-8") for f in text_feats])
    return feats


def time_call(fn, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_lda(args, rows):
    rng = np.random.default_rng(1)
    doc_ids, term_ids = synthetic_corpus(rng, args.docs, args.tokens, args.vocab)

    def run(mod):
        return lambda: mod.lda_gibbs(doc_ids, term_ids, args.docs, args.vocab,
                                     args.topics, 50.0 / args.topics, 0.01,
                                     args.iters, 42)

    t_pure, out_pure = time_call(run(_kernels_py), repeat=1)
    rows.append(("lda_gibbs", "pure", t_pure, 1.0))
    if _kernels_c is not None:
        t_comp, out_comp = time_call(run(_kernels_c), repeat=args.repeat)
        for a, b in zip(out_pure, out_comp):
            assert np.array_equal(a, b), "backends diverged on lda_gibbs"
        rows.append(("lda_gibbs", "compiled", t_comp, t_pure / t_comp))


def bench_hashing(args, rows):
    rng = np.random.default_rng(2)
    feats = synthetic_features(rng, args.texts, args.words)

    def run(mod):
        def inner():
            acc = 0
            for text_feats in feats:
                for feat in text_feats:
                    acc ^= mod.fnv1a64(feat, 42)
            return acc
        return inner

    t_pure, out_pure = time_call(run(_kernels_py), repeat=args.repeat)
    rows.append(("fnv1a64 stream", "pure", t_pure, 1.0))
    if _kernels_c is not None:
        t_comp, out_comp = time_call(run(_kernels_c), repeat=args.repeat)
        assert out_pure == out_comp, "backends diverged on fnv1a64"
        rows.append(("fnv1a64 stream", "compiled", t_comp, t_pure / t_comp))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=120)
    parser.add_argument("--tokens", type=int, default=80, help="tokens per doc")
    parser.add_argument("--vocab", type=int, default=800)
    parser.add_argument("--topics", type=int, default=10)
    parser.add_argument("--iters", type=int, default=40)
    parser.add_argument("--texts", type=int, default=200)
    parser.add_argument("--words", type=int, default=120, help="words per text")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if _kernels_c is None:
        print("compiled extension not built; timing the pure backend only\n")

    rows: list[tuple[str, str, float, float]] = []
    bench_lda(args, rows)
    bench_hashing(args, rows)

    print(f"{'operation':<16} {'backend':<10} {'seconds':>10} {'speedup':>9}")
    for op, backend, seconds, speedup in rows:
        print(f"{op:<16} {backend:<10} {seconds:>10.4f} {speedup:>8.1f}x")


if __name__ == "__main__":
    main()
