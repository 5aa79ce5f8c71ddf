"""Embedding providers and an exact cosine top-k vector index.

Two providers share one contract: a deterministic feature-hashing embedder
for offline runs and tests, and a remote HTTP embedder for real models.
All vectors are L2-normalized; empty text maps to a flagged all-zero
sentinel that can never be indexed or used as a query.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from metabench import _textutil, kernels
from metabench.errors import BackendError, DataError

DEFAULT_DIM = 256
DEFAULT_SEED = 42

INDEX_FORMAT = "metabench-index"
INDEX_VERSION = 1


@dataclass
class EmbeddingVector:
    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        """True for the empty-text sentinel."""
        return not bool(np.any(self.values))


def _normalized(acc: np.ndarray) -> EmbeddingVector:
    norm = math.sqrt(float(np.dot(acc, acc)))
    if norm == 0.0:
        return EmbeddingVector(np.zeros_like(acc))
    return EmbeddingVector(acc / norm)


def hash_embed(text: str, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED) -> EmbeddingVector:
    """Deterministic signed feature-hashing embedding.

    Features are case-folded word unigrams plus character trigrams of the
    whitespace-collapsed casefolded text, namespaced "w:" and "c:". Each
    feature hashes (with the seed) to a bucket and a sign; signed counts are
    accumulated and L2-normalized. Empty or whitespace-only text yields the
    zero sentinel.
    """
    if dim < 8:
        raise ValueError(f"embedding dim must be >= 8, got {dim}")
    acc = np.zeros(dim, dtype=np.float64)
    toks = _textutil.words(text)
    if not toks:
        return EmbeddingVector(acc)
    feats = ["w:" + t for t in toks]
    joined = " ".join(toks)
    feats.extend("c:" + joined[i : i + 3] for i in range(len(joined) - 2))
    for feat in feats:
        h = kernels.fnv1a64(feat.encode("utf-8"), seed)
        idx = (h >> 1) % dim
        acc[idx] += 1.0 if h & 1 else -1.0
    return _normalized(acc)


class HashEmbedder:
    """Offline embedding provider backed by hash_embed."""

    name = "hash"

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        if dim < 8:
            raise ValueError(f"embedding dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        return [hash_embed(t, self.dim, self.seed) for t in texts]


class RemoteEmbedder:
    """HTTP embedding provider.

    Wire contract: POST {"texts": [...]} -> {"vectors": [[...], ...]} with a
    constant dimension per endpoint. Batches are retried on transient
    failures; a persistent failure raises BackendError naming the failed
    input indices.
    """

    name = "remote"

    def __init__(self, endpoint: str, api_key_env: str = "MAB_EMBED_API_KEY",
                 batch_size: int = 64, max_retries: int = 3, timeout: float = 30.0,
                 backoff_s: float = 1.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_s = backoff_s
        self.dim: int | None = None
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_batch(self, texts: list[str]) -> list[list[float]]:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    self.endpoint, json={"texts": texts},
                    headers=self._headers(), timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = BackendError(f"embedding endpoint returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(
                    f"embedding endpoint rejected request ({resp.status_code}): {resp.text[:200]}"
                )
            vectors = resp.json().get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(texts):
                raise BackendError("embedding endpoint returned a malformed vector batch")
            return vectors
        raise BackendError(f"embedding endpoint failed after {self.max_retries} retries: {last_error}")

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        out: list[EmbeddingVector | None] = [None] * len(texts)
        pending: list[int] = []
        for i, text in enumerate(texts):
            if text.strip():
                pending.append(i)
            else:
                out[i] = EmbeddingVector(np.zeros(self.dim or DEFAULT_DIM, dtype=np.float64))
        for start in range(0, len(pending), self.batch_size):
            chunk = pending[start : start + self.batch_size]
            try:
                vectors = self._post_batch([texts[i] for i in chunk])
            except BackendError as exc:
                raise BackendError(f"embedding failed for input indices {chunk}: {exc}") from exc
            for i, vec in zip(chunk, vectors):
                arr = np.asarray(vec, dtype=np.float64)
                if self.dim is None:
                    self.dim = int(arr.shape[0])
                if arr.shape[0] != self.dim:
                    raise BackendError(
                        f"embedding dimension mismatch: expected {self.dim}, got {arr.shape[0]}"
                    )
                out[i] = _normalized(arr)
        # zero sentinels created before the dimension was known get resized
        return [
            v if v.dim == (self.dim or DEFAULT_DIM)
            else EmbeddingVector(np.zeros(self.dim or DEFAULT_DIM, dtype=np.float64))
            for v in out  # type: ignore[union-attr]
        ]


def embed_texts(texts: list[str], provider) -> list[EmbeddingVector]:
    """Embed a batch of texts with any provider, order-preserving."""
    if not texts:
        raise ValueError("embed_texts requires a non-empty list")
    return provider.embed(texts)


@dataclass
class SearchParams:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass
class VectorIndex:
    """Immutable exact-scan index: unit row vectors plus their dataset ids."""

    ids: list[str]
    matrix: np.ndarray
    excluded_ids: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)


def build_index(items: list[tuple[str, str]], embedder) -> VectorIndex:
    """Embed (dataset_id, text) pairs into a searchable index.

    Items whose text is empty (or embeds to the zero sentinel) are excluded
    and reported on the index: they could never be retrieved.
    """
    seen: set[str] = set()
    for dataset_id, _ in items:
        if dataset_id in seen:
            raise DataError(f"duplicate dataset_id in index build: {dataset_id!r}")
        seen.add(dataset_id)
    vectors = embedder.embed([text for _, text in items]) if items else []
    kept_ids: list[str] = []
    rows: list[np.ndarray] = []
    excluded: list[str] = []
    for (dataset_id, _), vec in zip(items, vectors):
        if vec.is_zero:
            excluded.append(dataset_id)
        else:
            kept_ids.append(dataset_id)
            rows.append(vec.values)
    if not rows:
        raise DataError("no indexable items: every text was empty")
    return VectorIndex(ids=kept_ids, matrix=np.vstack(rows), excluded_ids=excluded)


def search_topk(index: VectorIndex, query: EmbeddingVector,
                params: SearchParams) -> list[tuple[str, float]]:
    """Exact exhaustive top-k scan.

    Results sorted by cosine descending, ties broken by ascending dataset_id;
    length is min(k, index size).
    """
    if query.is_zero:
        raise DataError("cannot search with the zero-sentinel query vector")
    if query.dim != index.dim:
        raise DataError(f"query dim {query.dim} != index dim {index.dim}")
    scores = index.matrix @ query.values
    order = sorted(range(len(index.ids)), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order[: params.k]]


def save_index(index: VectorIndex, path) -> None:
    """Persist an index as JSONL with a version header line."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "dim": index.dim,
            "count": len(index),
            "excluded_ids": index.excluded_ids,
        }
        fh.write(json.dumps(header) + "\n")
        for dataset_id, row in zip(index.ids, index.matrix):
            fh.write(json.dumps({"id": dataset_id, "values": row.tolist()}) + "\n")


def load_index(path) -> VectorIndex:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise DataError(f"empty index file: {path}")
        header = json.loads(header_line)
        if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
            raise DataError(f"unrecognized index header in {path}")
        ids: list[str] = []
        rows: list[list[float]] = []
        for line in fh:
            entry = json.loads(line)
            ids.append(entry["id"])
            rows.append(entry["values"])
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != header["dim"]:
        raise DataError(f"index body does not match header dim in {path}")
    return VectorIndex(ids=ids, matrix=matrix, excluded_ids=list(header.get("excluded_ids", [])))
