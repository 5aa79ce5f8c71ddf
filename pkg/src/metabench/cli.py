"""Pipeline CLI: ingest, analyze, enrich-nlp, enrich-llm, gen-queries,
evaluate, report, and the composite pipeline subcommand.

Stages hand off through file artifacts in the output directory so the
expensive LLM stages stay cached and individually re-runnable. Exit
statuses: 0 success, 2 config error, 3 data error, 4 backend error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from metabench import bench, catalog, llmgen, textmine, vectors
from metabench.config import RunConfig, load_config
from metabench.errors import (
    AuthError,
    BackendError,
    ConfigError,
    DataError,
    GenerationFailed,
    SamplingError,
)

log = logging.getLogger("metabench")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4

STAGE_ORDER = ("ingest", "analyze", "enrich-nlp", "enrich-llm",
               "gen-queries", "evaluate", "report")


@dataclass
class Artifacts:
    out: Path
    enriched_override: Path | None = None
    queries_override: Path | None = None

    @property
    def catalog(self) -> Path:
        return self.out / "catalog.jsonl"

    @property
    def completeness(self) -> Path:
        return self.out / "completeness.csv"

    @property
    def enriched(self) -> Path:
        return self.enriched_override or self.out / "enriched.jsonl"

    @property
    def queries(self) -> Path:
        return self.queries_override or self.out / "queries.jsonl"

    @property
    def outcomes(self) -> Path:
        return self.out / "outcomes.jsonl"

    @property
    def report_json(self) -> Path:
        return self.out / "report.json"

    @property
    def report_md(self) -> Path:
        return self.out / "report.md"

    @property
    def report_csv(self) -> Path:
        return self.out / "report.csv"

    @property
    def audit(self) -> Path:
        return self.out / "llm_audit.jsonl"


# stage -> (inputs as (artifact attr, producing stage), outputs as attrs)
STAGE_FILES: dict[str, tuple[tuple[tuple[str, str], ...], tuple[str, ...]]] = {
    "ingest": ((), ("catalog",)),
    "analyze": ((("catalog", "ingest"),), ("completeness",)),
    "enrich-nlp": ((("catalog", "ingest"),), ("enriched",)),
    "enrich-llm": ((("enriched", "enrich-nlp"),), ("enriched",)),
    "gen-queries": ((("enriched", "enrich-nlp"),), ("queries",)),
    "evaluate": ((("enriched", "enrich-nlp"), ("queries", "gen-queries")),
                 ("outcomes", "report_json")),
    "report": ((("report_json", "evaluate"),), ("report_md", "report_csv")),
}


def _require(path: Path, producer: str) -> None:
    if not path.exists():
        raise DataError(
            f"missing prerequisite artifact {path}; run the {producer} stage first"
        )


def _make_embedder(cfg: RunConfig):
    if cfg.embed_provider == "hash":
        return vectors.HashEmbedder(dim=cfg.embed_dim, seed=cfg.embed_seed)
    if cfg.embed_provider == "remote":
        if not cfg.embed_endpoint:
            raise ConfigError("remote embedder requires [embed] endpoint")
        return vectors.RemoteEmbedder(cfg.embed_endpoint, api_key_env=cfg.embed_api_key_env)
    raise ConfigError(f"unknown embedding provider {cfg.embed_provider!r}")


def validate_config(cfg: RunConfig, stages: list[str]) -> None:
    """Fail fast, before any stage writes a file."""
    for stage in stages:
        if stage not in STAGE_ORDER:
            raise ConfigError(
                f"unknown stage {stage!r}; expected one of: {', '.join(STAGE_ORDER)}"
            )
    bench.resolve_conditions(cfg.conditions)
    if cfg.search_k < 1:
        raise ConfigError(f"search k must be >= 1, got {cfg.search_k}")
    if cfg.embed_dim < 8:
        raise ConfigError(f"embedding dim must be >= 8, got {cfg.embed_dim}")
    if cfg.embed_provider not in ("hash", "remote"):
        raise ConfigError(f"unknown embedding provider {cfg.embed_provider!r}")
    if cfg.embed_provider == "remote" and not cfg.embed_endpoint:
        raise ConfigError("remote embedder requires [embed] endpoint")
    if cfg.llm.backend not in ("mock", "http"):
        raise ConfigError(f"unknown LLM backend {cfg.llm.backend!r}")
    if cfg.llm.backend == "http" and not cfg.llm.endpoint:
        raise ConfigError("http LLM backend requires [llm] endpoint")
    if cfg.catalog_format not in ("array-json", "jsonl"):
        raise ConfigError(f"unknown catalogue format {cfg.catalog_format!r}")
    if "ingest" in stages:
        if not cfg.catalog:
            raise ConfigError("ingest requires a catalogue path (--catalog)")
        if not Path(cfg.catalog).exists():
            raise DataError(f"catalogue file not found: {cfg.catalog}")
    if cfg.data_dir and not Path(cfg.data_dir).is_dir():
        raise DataError(f"data directory not found: {cfg.data_dir}")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_ingest(cfg: RunConfig, art: Artifacts) -> None:
    records = catalog.parse_catalog(cfg.catalog, format=cfg.catalog_format)
    catalog.save_records_jsonl(records, art.catalog)
    log.info("ingest: %d records -> %s", len(records), art.catalog)


def stage_analyze(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.catalog, "ingest")
    records = catalog.load_records_jsonl(art.catalog)
    report = catalog.completeness_report(records)
    catalog.write_completeness_csv(report, art.completeness)
    for field_name in catalog.DEFAULT_COMPLETENESS_FIELDS:
        display = catalog.COMPLETENESS_DISPLAY[field_name]
        log.info("analyze: %s %.3f (%d/%d)", display, report.fractions[field_name],
                 report.present[field_name], report.total_count)
    log.info("analyze: %d of %d datasets have at least one structured file",
             report.structured_count, report.total_count)
    log.info("analyze: completeness -> %s", art.completeness)


def _textmine_enrich(records, get_text, set_fields, cfg: RunConfig) -> int:
    """Shared NLP enrichment pass: build the corpus context over the chosen
    description field, then fill its derived keyword/topic fields."""
    corpus = [get_text(r) for r in records if get_text(r) and get_text(r).strip()]
    if not corpus:
        log.warning("enrich: no non-empty descriptions; derived fields left empty")
        for record in records:
            set_fields(record, [], [])
        return 0
    embedder = _make_embedder(cfg)
    enricher = textmine.DescriptionEnricher(corpus, embedder, params=cfg.textmine)
    enriched_count = 0
    for record in records:
        result = enricher.enrich(get_text(record))
        set_fields(record, result.keywords, result.topics)
        if result.enriched:
            enriched_count += 1
        else:
            log.debug("enrich: record %s not enriched (empty description)",
                      record.dataset_id)
    return enriched_count


def stage_enrich_nlp(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.catalog, "ingest")
    records = catalog.load_records_jsonl(art.catalog)
    structured = catalog.filter_structured(records)
    log.info("enrich-nlp: %d of %d records have structured files",
             len(structured), len(records))

    def set_fields(record, keywords, topics):
        record.lds_desc_keywords = keywords
        record.lds_desc_topics = topics

    count = _textmine_enrich(structured, lambda r: r.lds_description, set_fields, cfg)
    catalog.save_records_jsonl(structured, art.enriched)
    log.info("enrich-nlp: enriched %d records -> %s", count, art.enriched)


def _sample_for(record, cfg: RunConfig):
    if not cfg.data_dir:
        return None
    path = Path(cfg.data_dir) / f"{record.dataset_id}.csv"
    if not path.exists():
        return None
    try:
        return catalog.sample_table(path, head_n=cfg.sample_head,
                                    tail_n=cfg.sample_tail)
    except SamplingError as exc:
        log.warning("enrich-llm: no sample available for %s: %s",
                    record.dataset_id, exc)
        return None


def stage_enrich_llm(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.enriched, "enrich-nlp")
    records = catalog.load_records_jsonl(art.enriched)
    backend = llmgen.make_backend(cfg.llm, llmgen.AuditLog(art.audit))

    prompts = []
    for record in records:
        prompt = llmgen.build_description_prompt(record, _sample_for(record, cfg))
        record.llm_prompt = prompt.text
        prompts.append(prompt)

    results = llmgen.map_concurrent(
        lambda p: llmgen.generate_description(p, backend), prompts,
        cfg.llm.concurrency,
    )
    failed = 0
    for record, result in zip(records, results):
        if isinstance(result, GenerationFailed):
            record.llm_description = None
            failed += 1
            log.warning("enrich-llm: llm_description missing for %s: %s",
                        record.dataset_id, result)
        else:
            record.llm_description = result

    def set_fields(record, keywords, topics):
        record.llm_desc_keywords = keywords
        record.llm_desc_topics = topics

    count = _textmine_enrich(records, lambda r: r.llm_description, set_fields, cfg)
    tmp = art.enriched.with_suffix(".jsonl.tmp")
    catalog.save_records_jsonl(records, tmp)
    os.replace(tmp, art.enriched)
    log.info("enrich-llm: generated %d descriptions (%d failed), enriched %d -> %s",
             len(records) - failed, failed, count, art.enriched)


def stage_gen_queries(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.enriched, "enrich-nlp")
    records = catalog.load_records_jsonl(art.enriched)
    backend = llmgen.make_backend(cfg.llm, llmgen.AuditLog(art.audit))
    results = llmgen.map_concurrent(
        lambda r: llmgen.generate_queries(r, backend), records,
        cfg.llm.concurrency,
    )
    queries = []
    for record, result in zip(records, results):
        if isinstance(result, GenerationFailed):
            log.warning("gen-queries: excluding dataset %s: %s",
                        record.dataset_id, result)
        else:
            queries.extend(result)
    llmgen.save_queries(queries, art.queries)
    log.info("gen-queries: %d queries over %d datasets -> %s",
             len(queries), len(records), art.queries)


def stage_evaluate(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.enriched, "enrich-nlp")
    _require(art.queries, "gen-queries")
    records = catalog.load_records_jsonl(art.enriched)
    queries = llmgen.load_queries(art.queries)
    if not queries:
        raise DataError(f"query set {art.queries} is empty")
    known = {r.dataset_id for r in records}
    orphans = [q.query_id for q in queries if q.gold_dataset_id not in known]
    if orphans:
        raise DataError(
            f"{len(orphans)} queries reference unknown datasets "
            f"(first: {orphans[0]})"
        )
    styles_per_gold: dict[str, set[str]] = {}
    for q in queries:
        styles_per_gold.setdefault(q.gold_dataset_id, set()).add(q.style)
    incomplete = sum(1 for styles in styles_per_gold.values()
                     if len(styles) != len(llmgen.STYLES))
    if incomplete:
        log.warning("evaluate: %d datasets lack a complete 3-style query set",
                    incomplete)
    embedder = _make_embedder(cfg)
    report, outcomes = bench.evaluate_matrix(
        records, queries, conditions=cfg.conditions, embedder=embedder,
        params=vectors.SearchParams(k=cfg.search_k),
    )
    bench.save_outcomes(outcomes, art.outcomes)
    art.report_json.write_text(report.to_json(), encoding="utf-8")
    log.info("evaluate: %d conditions x %d queries -> %s, %s",
             len(report.conditions), len(queries), art.outcomes, art.report_json)


def stage_report(cfg: RunConfig, art: Artifacts) -> None:
    _require(art.report_json, "evaluate")
    report = bench.EvalReport.from_json(art.report_json.read_text(encoding="utf-8"))
    art.report_md.write_text(bench.render_report(report, "markdown"), encoding="utf-8")
    art.report_csv.write_text(bench.render_report(report, "csv"), encoding="utf-8")
    log.info("report: -> %s, %s", art.report_md, art.report_csv)


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "analyze": stage_analyze,
    "enrich-nlp": stage_enrich_nlp,
    "enrich-llm": stage_enrich_llm,
    "gen-queries": stage_gen_queries,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_pipeline(cfg: RunConfig, stages: list[str], dry_run: bool = False) -> None:
    """Run the requested stages in order; validation happens up front."""
    validate_config(cfg, stages)
    art = Artifacts(Path(cfg.out))
    if dry_run:
        for stage in stages:
            inputs, outputs = STAGE_FILES[stage]
            reads = ", ".join(str(getattr(art, attr)) for attr, _ in inputs) or "-"
            writes = ", ".join(str(getattr(art, attr)) for attr in outputs)
            print(f"{stage}: reads {reads}; writes {writes}")
        return
    art.out.mkdir(parents=True, exist_ok=True)
    for stage in stages:
        log.info("--- stage %s ---", stage)
        STAGE_FUNCS[stage](cfg, art)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="TOML config file")
    parent.add_argument("--out", help="output directory (default: out)")
    parent.add_argument("--seed", type=int,
                        help="override the textmine and hash-embedder seeds")
    parent.add_argument("--verbose", action="store_true", help="debug logging")
    parent.add_argument("--dry-run", action="store_true",
                        help="print the stage plan and touch no files")
    return parent


def _llm_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--backend", choices=["mock", "http"], help="LLM backend")
    sub.add_argument("--endpoint", help="LLM endpoint URL")
    sub.add_argument("--model", help="LLM model name")
    sub.add_argument("--concurrency", type=int, help="max in-flight LLM requests")
    sub.add_argument("--max-retries", type=int, help="retries per LLM request")


def _eval_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--conditions",
                     help='comma-separated condition names, or "all"')
    sub.add_argument("--k", type=int, help="search cutoff (default 5)")
    sub.add_argument("--embedder", choices=["hash", "remote"],
                     help="embedding provider")


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = argparse.ArgumentParser(
        prog="metabench",
        description="Metadata-field ablation benchmark for dataset search.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("ingest", parents=[parent], help="load a catalogue dump")
    sub.add_argument("--catalog", help="catalogue file (JSON array or JSONL)")
    sub.add_argument("--format", choices=["array-json", "jsonl"],
                     help="catalogue file format")

    subs.add_parser("analyze", parents=[parent],
                    help="measure metadata completeness")

    sub = subs.add_parser("enrich-nlp", parents=[parent],
                          help="derive keywords/topics from publisher descriptions")
    sub.add_argument("--lda", action="store_true",
                     help="append LDA topic labels to the derived topics")

    sub = subs.add_parser("enrich-llm", parents=[parent],
                          help="generate descriptions and derive their keywords/topics")
    _llm_flags(sub)
    sub.add_argument("--data-dir", help="directory of <dataset_id>.csv table files")
    sub.add_argument("--lda", action="store_true",
                     help="append LDA topic labels to the derived topics")

    sub = subs.add_parser("gen-queries", parents=[parent],
                          help="generate the three-style query set")
    _llm_flags(sub)

    sub = subs.add_parser("evaluate", parents=[parent],
                          help="run the ablation retrieval matrix")
    sub.add_argument("--catalog", help="enriched catalogue JSONL (default: <out>/enriched.jsonl)")
    sub.add_argument("--queries", help="query set JSONL (default: <out>/queries.jsonl)")
    _eval_flags(sub)

    subs.add_parser("report", parents=[parent],
                    help="render report.md and report.csv from report.json")

    sub = subs.add_parser("pipeline", parents=[parent], help="run multiple stages")
    sub.add_argument("--stages",
                     help="comma-separated stage subset (default: all stages)")
    sub.add_argument("--catalog", help="catalogue file for the ingest stage")
    sub.add_argument("--format", choices=["array-json", "jsonl"])
    sub.add_argument("--data-dir", help="directory of <dataset_id>.csv table files")
    sub.add_argument("--lda", action="store_true")
    _llm_flags(sub)
    _eval_flags(sub)
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> None:
    arg_map = {
        "out": ("out",),
        "catalog": ("catalog",),
        "format": ("catalog_format",),
        "data_dir": ("data_dir",),
        "backend": ("llm", "backend"),
        "endpoint": ("llm", "endpoint"),
        "model": ("llm", "model"),
        "concurrency": ("llm", "concurrency"),
        "max_retries": ("llm", "max_retries"),
        "embedder": ("embed_provider",),
        "k": ("search_k",),
    }
    for arg, path in arg_map.items():
        value = getattr(args, arg, None)
        if value is None:
            continue
        target = cfg
        for attr in path[:-1]:
            target = getattr(target, attr)
        setattr(target, path[-1], value)
    if getattr(args, "lda", False):
        cfg.textmine.use_lda = True
    if getattr(args, "conditions", None):
        names = [n.strip() for n in args.conditions.split(",") if n.strip()]
        cfg.conditions = names or ["all"]
    if getattr(args, "seed", None) is not None:
        cfg.textmine.seed = args.seed
        cfg.embed_seed = args.seed


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
        _apply_overrides(cfg, args)

        if args.command == "pipeline":
            if getattr(args, "stages", None):
                stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            else:
                stages = list(STAGE_ORDER)
        elif args.command == "evaluate":
            stages = ["evaluate", "report"]
        else:
            stages = [args.command]

        if args.command == "evaluate":
            # --catalog/--queries bypass the default artifact locations
            art = Artifacts(
                Path(cfg.out),
                enriched_override=Path(args.catalog) if args.catalog else None,
                queries_override=Path(args.queries) if args.queries else None,
            )
            validate_config(cfg, stages)
            if args.dry_run:
                print(f"evaluate: reads {art.enriched}, {art.queries}; writes "
                      f"{art.outcomes}, {art.report_json}, {art.report_md}, "
                      f"{art.report_csv}")
                return EXIT_OK
            art.out.mkdir(parents=True, exist_ok=True)
            stage_evaluate(cfg, art)
            stage_report(cfg, art)
            return EXIT_OK

        run_pipeline(cfg, stages, dry_run=args.dry_run)
        return EXIT_OK
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except AuthError as exc:
        log.error("backend auth error: %s", exc)
        return EXIT_BACKEND
    except BackendError as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
