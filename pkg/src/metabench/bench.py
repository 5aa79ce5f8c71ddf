"""Ablation benchmark: assemble field configurations, run retrieval for
every (condition x query), and score Hit@1/3/5 and MRR overall and per
query style.

Join rule for searchable text: scalar fields verbatim, list fields joined
with ", ", fields concatenated in configuration order separated by a single
newline, empty fields skipped. Reciprocal rank is truncated at the search
cutoff: a gold dataset outside the top-k contributes 0 to MRR.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from metabench.catalog import DatasetRecord
from metabench.errors import ConfigError, DataError
from metabench.llmgen import STYLES, QueryRecord
from metabench.vectors import SearchParams, build_index, search_topk

# The 14 ablation conditions and the metadata fields each one indexes.
CONDITION_FIELDS: dict[str, tuple[str, ...]] = {
    "key_original": ("lds_keywords", "lds_topic"),
    "key_nlp": ("lds_desc_keywords", "lds_desc_topics"),
    "key_llm": ("llm_desc_keywords", "llm_desc_topics"),
    "desc_original": ("lds_description",),
    "desc_llm": ("llm_description",),
    "full_original": ("lds_description", "lds_keywords", "lds_topic"),
    "full_nlp": ("lds_description", "lds_desc_keywords", "lds_desc_topics"),
    "full_llm": ("llm_description", "llm_desc_keywords", "llm_desc_topics"),
    "onlykey_original": ("lds_keywords",),
    "onlykey_nlp": ("lds_desc_keywords",),
    "onlykey_llm": ("llm_desc_keywords",),
    "onlytopic_original": ("lds_topic",),
    "onlytopic_nlp": ("lds_desc_topics",),
    "onlytopic_llm": ("llm_desc_topics",),
}

CONDITION_NAMES = tuple(CONDITION_FIELDS)
ALL_STYLES = STYLES + ("all",)


@dataclass(frozen=True)
class AblationConfig:
    name: str
    fields: tuple[str, ...]

    @classmethod
    def by_name(cls, name: str) -> "AblationConfig":
        if name not in CONDITION_FIELDS:
            raise ConfigError(
                f"unknown ablation condition {name!r}; "
                f"expected one of: {', '.join(CONDITION_NAMES)}"
            )
        return cls(name=name, fields=CONDITION_FIELDS[name])


def resolve_conditions(names) -> list[AblationConfig]:
    """Expand a condition selection; "all" or None means the full grid."""
    if names is None or names == "all" or list(names) == ["all"]:
        return [AblationConfig.by_name(n) for n in CONDITION_NAMES]
    return [AblationConfig.by_name(n) for n in names]


def assemble_ablation_text(record: DatasetRecord, config: AblationConfig) -> str:
    """Concatenate a record's configured fields into its searchable text."""
    parts: list[str] = []
    for field_name in config.fields:
        value = getattr(record, field_name)
        if value is None:
            continue
        if isinstance(value, str):
            rendered = value
        else:
            rendered = ", ".join(v for v in value if v.strip())
        if rendered.strip():
            parts.append(rendered)
    return "\n".join(parts)


@dataclass
class RetrievalOutcome:
    query_id: str
    condition: str
    ranked_ids: list[str]
    scores: list[float]
    gold_rank: int | None  # None encodes a miss

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "condition": self.condition,
            "ranked_ids": list(self.ranked_ids),
            "scores": list(self.scores),
            "gold_rank": self.gold_rank if self.gold_rank is not None else "miss",
        }

    @classmethod
    def from_dict(cls, entry: dict) -> "RetrievalOutcome":
        rank = entry["gold_rank"]
        return cls(
            query_id=entry["query_id"],
            condition=entry["condition"],
            ranked_ids=list(entry["ranked_ids"]),
            scores=[float(s) for s in entry["scores"]],
            gold_rank=None if rank == "miss" else int(rank),
        )


def run_condition(records: list[DatasetRecord], config: AblationConfig,
                  queries: list[QueryRecord], embedder,
                  params: SearchParams | None = None,
                  query_vectors=None) -> tuple[list[RetrievalOutcome], list[str]]:
    """Run retrieval for one condition over every query.

    Returns (outcomes, excluded_ids) where excluded_ids lists records whose
    assembled text was empty (they can never be retrieved; their queries are
    misses). An entirely empty index marks the condition degenerate: every
    query is a miss rather than an error, so sparse-field conditions still
    produce rows.

    query_vectors may carry pre-computed embeddings aligned with queries so
    the matrix evaluator embeds each query once, not once per condition.
    """
    if not queries:
        raise DataError("run_condition requires a non-empty query set")
    params = params or SearchParams()
    items = [(r.dataset_id, assemble_ablation_text(r, config)) for r in records]
    if all(not text.strip() for _, text in items):
        excluded = [r.dataset_id for r in records]
        return (
            [RetrievalOutcome(q.query_id, config.name, [], [], None) for q in queries],
            excluded,
        )
    index = build_index(items, embedder)
    if query_vectors is None:
        query_vectors = embedder.embed([q.text for q in queries])
    outcomes = []
    for query, vec in zip(queries, query_vectors):
        ranked = search_topk(index, vec, params)
        gold_rank = None
        for pos, (dataset_id, _) in enumerate(ranked, start=1):
            if dataset_id == query.gold_dataset_id:
                gold_rank = pos
                break
        outcomes.append(RetrievalOutcome(
            query_id=query.query_id,
            condition=config.name,
            ranked_ids=[d for d, _ in ranked],
            scores=[s for _, s in ranked],
            gold_rank=gold_rank,
        ))
    return outcomes, index.excluded_ids


def compute_metrics(outcomes: list[RetrievalOutcome]) -> tuple[float, float, float, float]:
    """(hit1, hit3, hit5, mrr) over a set of outcomes; misses contribute 0."""
    if not outcomes:
        raise DataError("metrics over an empty outcome set are undefined")
    n = len(outcomes)
    hit1 = hit3 = hit5 = 0
    mrr_sum = 0.0
    for outcome in outcomes:
        rank = outcome.gold_rank
        if rank is None:
            continue
        if rank <= 1:
            hit1 += 1
        if rank <= 3:
            hit3 += 1
        if rank <= 5:
            hit5 += 1
        mrr_sum += 1.0 / rank
    return hit1 / n, hit3 / n, hit5 / n, mrr_sum / n


@dataclass
class MetricBlock:
    hit1: float
    hit3: float
    hit5: float
    mrr: float
    n_queries: int


@dataclass
class EvalReport:
    """Per (condition, style) metric grid plus provenance counts."""

    k: int
    conditions: list[str]
    rows: dict[tuple[str, str], MetricBlock] = field(default_factory=dict)
    exclusions: dict[str, int] = field(default_factory=dict)
    query_counts: dict[str, int] = field(default_factory=dict)

    def block(self, condition: str, style: str = "all") -> MetricBlock:
        return self.rows[(condition, style)]

    def to_json(self) -> str:
        payload = {
            "k": self.k,
            "conditions": list(self.conditions),
            "rows": [
                {"condition": cond, "style": style, "hit1": b.hit1, "hit3": b.hit3,
                 "hit5": b.hit5, "mrr": b.mrr, "n_queries": b.n_queries}
                for (cond, style), b in self.rows.items()
            ],
            "exclusions": dict(self.exclusions),
            "query_counts": dict(self.query_counts),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        report = cls(k=payload["k"], conditions=list(payload["conditions"]))
        for row in payload["rows"]:
            report.rows[(row["condition"], row["style"])] = MetricBlock(
                hit1=row["hit1"], hit3=row["hit3"], hit5=row["hit5"],
                mrr=row["mrr"], n_queries=row["n_queries"],
            )
        report.exclusions = {k: int(v) for k, v in payload["exclusions"].items()}
        report.query_counts = {k: int(v) for k, v in payload["query_counts"].items()}
        return report


def evaluate_matrix(records: list[DatasetRecord], queries: list[QueryRecord],
                    conditions=None, embedder=None,
                    params: SearchParams | None = None,
                    ) -> tuple[EvalReport, list[RetrievalOutcome]]:
    """Run every condition once and aggregate metrics overall and per style.

    Condition names are validated before any work. Queries are embedded once
    and shared across conditions; each condition's index is built once and
    reused for all its queries.
    """
    configs = resolve_conditions(conditions)
    if embedder is None:
        raise ValueError("evaluate_matrix requires an embedder")
    if not queries:
        raise DataError("evaluate_matrix requires a non-empty query set")
    params = params or SearchParams()
    query_vectors = embedder.embed([q.text for q in queries])

    report = EvalReport(k=params.k, conditions=[c.name for c in configs])
    for style in STYLES:
        report.query_counts[style] = sum(1 for q in queries if q.style == style)
    report.query_counts["all"] = len(queries)

    all_outcomes: list[RetrievalOutcome] = []
    style_of = {q.query_id: q.style for q in queries}
    for config in configs:
        outcomes, excluded = run_condition(
            records, config, queries, embedder, params, query_vectors=query_vectors
        )
        all_outcomes.extend(outcomes)
        report.exclusions[config.name] = len(excluded)
        for style in ALL_STYLES:
            if style == "all":
                subset = outcomes
            else:
                subset = [o for o in outcomes if style_of[o.query_id] == style]
            if subset:
                hit1, hit3, hit5, mrr = compute_metrics(subset)
                report.rows[(config.name, style)] = MetricBlock(
                    hit1=hit1, hit3=hit3, hit5=hit5, mrr=mrr, n_queries=len(subset)
                )
    return report, all_outcomes


# ---------------------------------------------------------------------------
# Rendering and IO
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.3f}"


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Render an EvalReport as markdown (two tables: overall, and MRR /
    Hit@1 per style), csv (full grid), or json."""
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        lines = ["condition,style,hit1,hit3,hit5,mrr,n_queries"]
        for (cond, style), b in report.rows.items():
            lines.append(
                f"{cond},{style},{_fmt(b.hit1)},{_fmt(b.hit3)},{_fmt(b.hit5)},"
                f"{_fmt(b.mrr)},{b.n_queries}"
            )
        return "\n".join(lines) + "\n"
    if fmt != "markdown":
        raise ValueError(f"unknown report format {fmt!r}")

    lines = ["# Retrieval benchmark report", ""]
    lines.append(f"Search cutoff k={report.k}. Queries per style: " + ", ".join(
        f"{style}={report.query_counts.get(style, 0)}" for style in ALL_STYLES
    ) + ".")
    lines.append("")
    lines.append("## Overall retrieval performance")
    lines.append("")
    lines.append("| Condition | Hit@1 | Hit@3 | Hit@5 | MRR |")
    lines.append("|---|---|---|---|---|")
    for cond in report.conditions:
        b = report.rows.get((cond, "all"))
        if b is None:
            lines.append(f"| {cond} | - | - | - | - |")
        else:
            lines.append(
                f"| {cond} | {_fmt(b.hit1)} | {_fmt(b.hit3)} | {_fmt(b.hit5)} "
                f"| {_fmt(b.mrr)} |"
            )
    lines.append("")
    lines.append("## Performance by query style (MRR / Hit@1)")
    lines.append("")
    lines.append("| Condition | Requesting | Describing | Implying |")
    lines.append("|---|---|---|---|")
    for cond in report.conditions:
        cells = []
        for style in STYLES:
            b = report.rows.get((cond, style))
            cells.append("-" if b is None else f"{_fmt(b.mrr)} / {_fmt(b.hit1)}")
        lines.append(f"| {cond} | " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("## Index exclusions (records with empty searchable text)")
    lines.append("")
    lines.append("| Condition | Excluded records |")
    lines.append("|---|---|")
    for cond in report.conditions:
        lines.append(f"| {cond} | {report.exclusions.get(cond, 0)} |")
    lines.append("")
    return "\n".join(lines)


def save_outcomes(outcomes: list[RetrievalOutcome], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome.to_dict(), ensure_ascii=False) + "\n")


def load_outcomes(path) -> list[RetrievalOutcome]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RetrievalOutcome.from_dict(json.loads(line)))
    return out
