from __future__ import annotations

import json

import pytest

from metabench.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from metabench.config import RunConfig, config_from_dict, dumps_config, load_config
from metabench.errors import ConfigError

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TestConfigFile:
    def test_roundtrip_lossless(self, tmp_path):
        cfg = RunConfig(catalog="cat.json", out="results", search_k=3,
                        conditions=["desc_llm", "key_nlp"])
        cfg.textmine.topics_k = 4
        cfg.textmine.use_lda = True
        cfg.textmine.lda_alpha = 0.25
        cfg.llm.backend = "http"
        cfg.llm.endpoint = "http://example.invalid/chat"
        path = tmp_path / "run.toml"
        path.write_text(dumps_config(cfg))
        again = load_config(path)
        assert again == cfg

    def test_dumps_parses_as_toml(self):
        text = dumps_config(RunConfig())
        parsed = tomllib.loads(text)
        assert parsed["search"]["k"] == 5
        assert parsed["embed"]["provider"] == "hash"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"mystery": {"a": 1}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"search": {"depth": 9}})
        with pytest.raises(ConfigError):
            config_from_dict({"textmine": {"topic_count": 9}})

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.toml")


def run_cli(*args: str) -> int:
    return main(list(args))


class TestCliPaths:
    def test_dry_run_touches_nothing(self, tmp_path, fixture_catalog_path, capsys):
        out = tmp_path / "out"
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out), "--dry-run")
        assert code == EXIT_OK
        assert not out.exists()
        plan = capsys.readouterr().out
        for stage in ("ingest", "analyze", "enrich-nlp", "enrich-llm",
                      "gen-queries", "evaluate", "report"):
            assert stage in plan

    def test_unknown_condition_exits_2_before_writing(self, tmp_path,
                                                      fixture_catalog_path):
        out = tmp_path / "out"
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out), "--conditions", "desc_original,nonsense")
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_evaluate_without_queries_exits_3_naming_producer(
            self, tmp_path, fixture_catalog_path, caplog):
        import logging

        caplog.set_level(logging.INFO, logger="metabench")
        out = tmp_path / "out"
        assert run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out),
                       "--stages", "ingest,enrich-nlp") == EXIT_OK
        code = run_cli("pipeline", "--out", str(out), "--stages", "evaluate")
        assert code == EXIT_DATA
        assert "gen-queries" in caplog.text

    def test_missing_catalog_file_exits_3(self, tmp_path):
        code = run_cli("pipeline", "--catalog", str(tmp_path / "missing.json"),
                       "--out", str(tmp_path / "out"))
        assert code == EXIT_DATA

    def test_unknown_stage_exits_2(self, tmp_path, fixture_catalog_path):
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(tmp_path / "out"), "--stages", "ingest,transmogrify")
        assert code == EXIT_CONFIG

    def test_bad_flag_exits_2(self):
        assert run_cli("pipeline", "--no-such-flag") == EXIT_CONFIG


class TestFullPipeline:
    def test_fixture_end_to_end(self, tmp_path, fixture_catalog_path, files_dir):
        out = tmp_path / "out"
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--data-dir", str(files_dir), "--out", str(out))
        assert code == EXIT_OK
        for name in ("catalog.jsonl", "completeness.csv", "enriched.jsonl",
                     "queries.jsonl", "outcomes.jsonl", "report.json",
                     "report.md", "report.csv"):
            assert (out / name).exists(), name

        enriched = [json.loads(line) for line in
                    (out / "enriched.jsonl").read_text().splitlines()]
        assert len(enriched) == 15  # structured subset
        assert all(e["llm_description"] for e in enriched)
        assert all(e["llm_prompt"] for e in enriched)
        with_desc = [e for e in enriched if e["lds_description"]]
        assert all(e["lds_desc_keywords"] for e in with_desc)
        assert all(e["lds_desc_topics"] for e in with_desc)

        queries = [json.loads(line) for line in
                   (out / "queries.jsonl").read_text().splitlines()]
        assert len(queries) == 45  # 3 styles x 15 structured records

        report = json.loads((out / "report.json").read_text())
        assert len(report["conditions"]) == 14
        md = (out / "report.md").read_text()
        assert "| desc_llm |" in md

    def test_stage_rerun_is_idempotent(self, tmp_path, fixture_catalog_path,
                                       files_dir):
        out = tmp_path / "out"
        args = ("pipeline", "--catalog", str(fixture_catalog_path),
                "--data-dir", str(files_dir), "--out", str(out),
                "--stages", "ingest,analyze,enrich-nlp")
        assert run_cli(*args) == EXIT_OK
        first = (out / "enriched.jsonl").read_bytes()
        assert run_cli(*args) == EXIT_OK
        assert (out / "enriched.jsonl").read_bytes() == first

    def test_evaluate_subcommand_with_explicit_files(self, tmp_path,
                                                     fixture_catalog_path):
        out = tmp_path / "out"
        assert run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out),
                       "--stages", "ingest,enrich-nlp,gen-queries") == EXIT_OK
        out2 = tmp_path / "out2"
        code = run_cli("evaluate", "--catalog", str(out / "enriched.jsonl"),
                       "--queries", str(out / "queries.jsonl"),
                       "--conditions", "desc_original,onlykey_original",
                       "--k", "3", "--embedder", "hash", "--out", str(out2))
        assert code == EXIT_OK
        report = json.loads((out2 / "report.json").read_text())
        assert report["conditions"] == ["desc_original", "onlykey_original"]
        assert report["k"] == 3
        assert (out2 / "report.md").exists()

    def test_analyze_logs_figure_style_coverage(self, tmp_path,
                                                fixture_catalog_path, caplog):
        import logging

        caplog.set_level(logging.INFO, logger="metabench")
        out = tmp_path / "out"
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out), "--stages", "ingest,analyze")
        assert code == EXIT_OK
        assert "title 1.000" in caplog.text
        assert "theme 0.950" in caplog.text
        assert "description 0.500" in caplog.text
        assert "download link 0.850" in caplog.text
        assert "keywords 0.600" in caplog.text
        lines = (out / "completeness.csv").read_text().splitlines()
        assert lines[0] == "field,present,total,fraction"

    def test_lda_flag_appends_topic_labels(self, tmp_path, fixture_catalog_path):
        out_plain = tmp_path / "plain"
        out_lda = tmp_path / "lda"
        base = ("--catalog", str(fixture_catalog_path),
                "--stages", "ingest,enrich-nlp")
        assert run_cli("pipeline", *base, "--out", str(out_plain)) == EXIT_OK
        assert run_cli("pipeline", *base, "--out", str(out_lda), "--lda") == EXIT_OK

        def topics(out):
            return [json.loads(line)["lds_desc_topics"] for line in
                    (out / "enriched.jsonl").read_text().splitlines()]

        plain, with_lda = topics(out_plain), topics(out_lda)
        assert any(len(a) > len(b) for a, b in zip(with_lda, plain))
        assert all(set(b) <= set(a) for a, b in zip(with_lda, plain))

    def test_config_file_with_flag_override(self, tmp_path, fixture_catalog_path):
        cfg = RunConfig(catalog=str(fixture_catalog_path), out=str(tmp_path / "cfg_out"),
                        conditions=["desc_original"])
        config_path = tmp_path / "run.toml"
        config_path.write_text(dumps_config(cfg))
        out = tmp_path / "flag_out"
        code = run_cli("pipeline", "--config", str(config_path),
                       "--out", str(out),
                       "--stages", "ingest,enrich-nlp,gen-queries,evaluate")
        assert code == EXIT_OK
        assert not (tmp_path / "cfg_out").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["conditions"] == ["desc_original"]


class TestBackendFailures:
    def test_persistent_auth_failure_exits_4(self, tmp_path, fixture_catalog_path):
        from llm_stub import StubLLMServer

        out = tmp_path / "out"
        assert run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out), "--stages", "ingest,enrich-nlp") == EXIT_OK
        with StubLLMServer(after=("error", 401)) as stub:
            code = run_cli("pipeline", "--out", str(out),
                           "--stages", "enrich-llm",
                           "--backend", "http", "--endpoint", stub.url,
                           "--max-retries", "0")
        assert code == EXIT_BACKEND

    def test_http_backend_without_endpoint_exits_2(self, tmp_path,
                                                   fixture_catalog_path):
        code = run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(tmp_path / "out"), "--backend", "http")
        assert code == EXIT_CONFIG

    def test_dataset_with_failed_style_excluded_with_warning(
            self, tmp_path, fixture_catalog_path, caplog):
        import logging

        from llm_stub import StubLLMServer

        caplog.set_level(logging.WARNING, logger="metabench")
        out = tmp_path / "out"
        assert run_cli("pipeline", "--catalog", str(fixture_catalog_path),
                       "--out", str(out), "--stages", "ingest,enrich-nlp") == EXIT_OK
        # f001's three queries succeed; f002's first style returns empty text
        # (a generation failure after zero retries), so f002 drops out
        script = [("ok", None)] * 3 + [("ok", "")]
        with StubLLMServer(script=script, default_text="a query") as stub:
            code = run_cli("pipeline", "--out", str(out), "--stages", "gen-queries",
                           "--backend", "http", "--endpoint", stub.url,
                           "--concurrency", "1", "--max-retries", "0")
        assert code == EXIT_OK
        assert "excluding dataset f002" in caplog.text
        queries = [json.loads(line) for line in
                   (out / "queries.jsonl").read_text().splitlines()]
        assert len(queries) == 42  # 14 of 15 structured datasets x 3 styles
        assert not any(q["gold_dataset_id"] == "f002" for q in queries)
