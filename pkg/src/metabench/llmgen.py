"""Prompt construction, pluggable text-generation backends, and synthetic
query generation.

The backend contract is a single complete(prompt, temperature) -> text call.
Two implementations ship: a deterministic mock (echoes the first 350 words
of the prompt body) for offline runs, and an HTTP chat-style client with
exponential-backoff retries. Query generation sees exactly the dataset
title and id as context.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from metabench._textutil import sanitize_cell  # noqa: F401  (public contract lives here)
from metabench.catalog import DatasetRecord, TableSample
from metabench.errors import AuthError, ConfigError, DataError, GenerationFailed

STYLES = ("requesting", "describing", "implying")

DESCRIBE_TEMPLATE_ID = "describe_v1"
QUERY_TEMPLATE_IDS = {style: f"query_{style}_v1" for style in STYLES}

WORD_LIMIT_INSTRUCTION = "Please generate a descriptive summary of the dataset (max. 350 words)."
QUERY_INSTRUCTION = "Write only the query text."

# Style directives embed the three prompting-style definitions verbatim.
STYLE_DIRECTIVES = {
    "requesting": (
        "Write one natural-sounding search query in the requesting style: "
        "goal-oriented and specific, naming the exact dataset you need."
    ),
    "describing": (
        "Write one natural-sounding search query in the describing style: "
        "specify the features or structure of the data you need, without "
        "naming the dataset title."
    ),
    "implying": (
        "Write one natural-sounding search query in the implying style: "
        "open-ended and abstract, revealing your broader goal or interest "
        "rather than a specific dataset."
    ),
}


@dataclass
class GenPrompt:
    dataset_id: str
    template_id: str
    text: str


@dataclass
class GenBackendConfig:
    backend: str = "mock"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "MAB_LLM_API_KEY"
    max_retries: int = 3
    timeout: float = 30.0
    temperature: float = 0.0
    backoff_s: float = 1.0
    concurrency: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")


@dataclass
class QueryRecord:
    query_id: str
    gold_dataset_id: str
    style: str
    text: str

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown query style {self.style!r}")
        if not self.text.strip():
            raise ValueError(f"query {self.query_id} has empty text")


class AuditLog:
    """Append-only JSONL log of backend calls, ordered by completion.

    Carries timestamps, so it is excluded from reproducibility guarantees.
    """

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, **entry) -> None:
        entry = {"ts": time.time(), **entry}
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------

def _render_rows(rows: list[list[str]]) -> list[str]:
    return ["- " + " | ".join(row) for row in rows]


def build_description_prompt(record: DatasetRecord,
                             sample: TableSample | None) -> GenPrompt:
    """Render the description-generation prompt for one dataset.

    With a table sample the prompt carries the record count, headers and
    example rows; without one only the metadata is rendered. The text always
    ends with the 350-word instruction.
    """
    if not record.lds_title.strip():
        raise ValueError(f"record {record.dataset_id} has no title")
    lines: list[str] = []
    if sample is not None:
        lines.append(
            f'Dataset "{record.lds_title}" contains {sample.record_count} records '
            f"with column headers: {', '.join(sample.headers)}."
        )
        rows = sample.head_rows + [r for r in sample.tail_rows if r not in sample.head_rows]
        if rows:
            lines.append("Example records include:")
            lines.extend(_render_rows(rows))
    else:
        lines.append(f'Dataset "{record.lds_title}".')
    if record.lds_description and record.lds_description.strip():
        lines.append(f'The publisher describes it as: "{record.lds_description.strip()}"')
    lines.append(WORD_LIMIT_INSTRUCTION)
    return GenPrompt(dataset_id=record.dataset_id, template_id=DESCRIBE_TEMPLATE_ID,
                     text="\n".join(lines))


def build_query_prompt(record: DatasetRecord, style: str) -> GenPrompt:
    """Render one query-generation prompt; context is title and id only."""
    if style not in STYLES:
        raise ValueError(f"unknown query style {style!r}")
    text = "\n".join(
        [
            "You are a user of an open data portal searching for the dataset "
            f'titled "{record.lds_title}" (dataset id: {record.dataset_id}).',
            STYLE_DIRECTIVES[style],
            QUERY_INSTRUCTION,
        ]
    )
    return GenPrompt(dataset_id=record.dataset_id,
                     template_id=QUERY_TEMPLATE_IDS[style], text=text)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

_INSTRUCTION_PREFIXES = ("Please generate", QUERY_INSTRUCTION)


def _prompt_body(prompt_text: str) -> str:
    lines = prompt_text.splitlines()
    while lines and lines[-1].startswith(_INSTRUCTION_PREFIXES):
        lines.pop()
    return " ".join(" ".join(lines).split())


class MockBackend:
    """Deterministic offline backend: echoes the first 350 words of the
    prompt body (the prompt minus its trailing instruction lines)."""

    name = "mock"

    def __init__(self, audit: AuditLog | None = None):
        self.audit = audit

    def complete(self, prompt: str, temperature: float = 0.0,
                 context: dict | None = None) -> str:
        text = " ".join(_prompt_body(prompt).split()[:350])
        if self.audit is not None:
            self.audit.append(event="llm_call", backend=self.name, status="ok",
                              attempt=1, prompt=prompt, response=text,
                              **(context or {}))
        return text


class HttpBackend:
    """Chat-style HTTP backend.

    POSTs {"model", "messages", "temperature"} and accepts either
    {"choices": [{"message": {"content": ...}}]} or a plain {"text": ...}
    response body. Transient failures (connection errors, HTTP 5xx, 429)
    are retried with exponential backoff; any other 4xx is an auth/config
    rejection and aborts the run.
    """

    name = "http"

    def __init__(self, config: GenBackendConfig, audit: AuditLog | None = None):
        if not config.endpoint:
            raise ConfigError("http backend requires an endpoint")
        self.config = config
        self.audit = audit
        self._session = requests.Session()

    def _log(self, status: str, context: dict | None, attempt: int, **extra) -> None:
        if self.audit is not None:
            self.audit.append(event="llm_call", backend=self.name, status=status,
                              attempt=attempt, **(context or {}), **extra)

    def _extract_text(self, payload) -> str:
        if isinstance(payload, dict):
            choices = payload.get("choices")
            if isinstance(choices, list) and choices:
                message = choices[0].get("message", {})
                if isinstance(message, dict) and isinstance(message.get("content"), str):
                    return message["content"]
            if isinstance(payload.get("text"), str):
                return payload["text"]
        raise GenerationFailed("backend response had no text payload")

    def complete(self, prompt: str, temperature: float | None = None,
                 context: dict | None = None) -> str:
        cfg = self.config
        if temperature is None:
            temperature = cfg.temperature
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last_error = "no attempt made"
        for attempt in range(1, cfg.max_retries + 2):
            if attempt > 1:
                time.sleep(cfg.backoff_s * 2 ** (attempt - 2))
            try:
                resp = self._session.post(cfg.endpoint, json=body, headers=headers,
                                          timeout=cfg.timeout)
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                self._log("retry", context, attempt, error=last_error)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
                self._log("retry", context, attempt, error=last_error)
                continue
            if resp.status_code >= 400:
                self._log("auth_error", context, attempt,
                          error=f"HTTP {resp.status_code}")
                raise AuthError(
                    f"backend rejected request with HTTP {resp.status_code}: "
                    f"{resp.text[:200]}"
                )
            text = self._extract_text(resp.json())
            self._log("ok", context, attempt, prompt=prompt, response=text)
            return text
        self._log("failed", context, cfg.max_retries + 1, error=last_error)
        raise GenerationFailed(
            f"backend failed after {cfg.max_retries} retries: {last_error}"
        )


def make_backend(config: GenBackendConfig, audit: AuditLog | None = None):
    if config.backend == "mock":
        return MockBackend(audit)
    if config.backend == "http":
        return HttpBackend(config, audit)
    raise ConfigError(f"unknown LLM backend {config.backend!r}")


# ---------------------------------------------------------------------------
# Generation operations
# ---------------------------------------------------------------------------

def generate_description(prompt: GenPrompt, backend) -> str:
    """Run one description generation; whitespace-only output is a failure."""
    text = backend.complete(
        prompt.text,
        context={"dataset_id": prompt.dataset_id, "template_id": prompt.template_id},
    ).strip()
    if not text:
        raise GenerationFailed(
            f"backend returned empty text for dataset {prompt.dataset_id}"
        )
    return text


def generate_queries(record: DatasetRecord, backend) -> list[QueryRecord]:
    """Generate one query per style for a dataset; any style failing makes
    the whole dataset fail (callers exclude it with a warning)."""
    if not record.dataset_id.strip() or not record.lds_title.strip():
        raise ValueError("query generation requires dataset_id and title")
    out = []
    for style in STYLES:
        prompt = build_query_prompt(record, style)
        text = backend.complete(
            prompt.text,
            context={"dataset_id": record.dataset_id, "template_id": prompt.template_id},
        ).strip()
        if not text:
            raise GenerationFailed(
                f"backend returned empty {style} query for dataset {record.dataset_id}"
            )
        out.append(QueryRecord(
            query_id=f"{record.dataset_id}:{style}",
            gold_dataset_id=record.dataset_id,
            style=style,
            text=text,
        ))
    return out


def map_concurrent(fn, items: list, max_workers: int) -> list:
    """Apply fn over items with bounded concurrency.

    Returns results in input order; GenerationFailed is captured per item,
    any other exception (notably AuthError) propagates and aborts the run.
    """
    if max_workers <= 1 or len(items) <= 1:
        results = []
        for item in items:
            try:
                results.append(fn(item))
            except GenerationFailed as exc:
                results.append(exc)
        return results
    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
        for future, i in futures.items():
            try:
                results[i] = future.result()
            except GenerationFailed as exc:
                results[i] = exc
    return results


# ---------------------------------------------------------------------------
# Query set IO
# ---------------------------------------------------------------------------

def save_queries(queries: list[QueryRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(
                {"query_id": q.query_id, "gold_dataset_id": q.gold_dataset_id,
                 "style": q.style, "text": q.text},
                ensure_ascii=False) + "\n")


def load_queries(path) -> list[QueryRecord]:
    queries = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    queries.append(QueryRecord(
                        query_id=str(entry["query_id"]),
                        gold_dataset_id=str(entry["gold_dataset_id"]),
                        style=str(entry["style"]),
                        text=str(entry["text"]),
                    ))
                except (KeyError, ValueError, json.JSONDecodeError) as exc:
                    raise DataError(f"{path}:{lineno}: bad query record: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read query set {path}: {exc}") from exc
    return queries
