"""Shared text primitives: tokenization, stopwords, cell sanitization.

Every module that splits text into terms goes through tokenize() so the
vocabulary rules stay consistent across TF-IDF, topic models and keyphrase
candidates.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources

_WORD_RE = re.compile(r"[0-9a-z]+")
_WS_RE = re.compile(r"\s+")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    """The bundled English stopword list (frozen in-repo)."""
    text = resources.files("metabench").joinpath("data/stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=1)
def default_gazetteer() -> dict[str, str]:
    """Bundled surface -> label map for the rule-based entity tagger."""
    text = resources.files("metabench").joinpath("data/gazetteer.json").read_text("utf-8")
    return json.loads(text)


def words(text: str) -> list[str]:
    """Case-folded maximal alphanumeric runs, in order, no filtering."""
    return _WORD_RE.findall(text.casefold())


def tokenize(text: str, stopwords: frozenset[str] | set[str] | None = None) -> list[str]:
    """Corpus tokenizer: case-fold, split on non-alphanumeric, drop stopwords
    and tokens shorter than 2 characters."""
    if stopwords is None:
        stopwords = default_stopwords()
    return [w for w in words(text) if len(w) >= 2 and w not in stopwords]


def collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def sanitize_cell(raw: str, cap: int = 80) -> str:
    """Flatten a cell value to a single clean line.

    Newlines and tabs become spaces, whitespace runs collapse, and values
    longer than cap are cut to cap-1 characters plus an ellipsis.
    """
    if cap < 4:
        raise ValueError(f"sanitize cap must be >= 4, got {cap}")
    out = collapse_ws(raw)
    if len(out) > cap:
        out = out[: cap - 1] + "…"
    return out
