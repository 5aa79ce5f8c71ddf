from __future__ import annotations

import json

import pytest

from metabench.catalog import sample_table
from metabench.errors import AuthError, GenerationFailed
from metabench.llmgen import (
    STYLES,
    AuditLog,
    GenBackendConfig,
    HttpBackend,
    MockBackend,
    QueryRecord,
    build_description_prompt,
    build_query_prompt,
    generate_description,
    generate_queries,
    load_queries,
    make_backend,
    map_concurrent,
    sanitize_cell,
    save_queries,
)
from llm_stub import StubLLMServer


class TestSanitizeCell:
    @pytest.mark.parametrize("raw,expected", [
        ("a\n b\tc", "a b c"),
        ("ok", "ok"),
        ("  padded  ", "padded"),
        ("multi   space", "multi space"),
    ])
    def test_rules(self, raw, expected):
        assert sanitize_cell(raw) == expected

    def test_truncation(self):
        out = sanitize_cell("x" * 100, cap=80)
        assert len(out) == 80
        assert out == "x" * 79 + "…"

    def test_cap_floor(self):
        with pytest.raises(ValueError):
            sanitize_cell("abc", cap=3)


@pytest.fixture()
def police_record(records):
    return next(r for r in records if r.dataset_id == "f001")


class TestDescriptionPrompt:
    def test_fixture_prompt_contents(self, police_record, files_dir):
        sample = sample_table(files_dir / "f001.csv", head_n=3, tail_n=3)
        prompt = build_description_prompt(police_record, sample)
        text = prompt.text
        assert "Police Force Strength" in text
        assert "contains 4 records" in text
        for header in ("Force", "Year", "Officers"):
            assert header in text
        for row_value in ("34541", "990", "3124", "33984"):
            assert row_value in text
        assert "max. 350 words" in text

    def test_ends_with_word_limit_instruction(self, police_record):
        prompt = build_description_prompt(police_record, None)
        assert prompt.text.rstrip().endswith("(max. 350 words).")

    def test_no_sample_omits_structural_sentence(self, police_record):
        prompt = build_description_prompt(police_record, None)
        assert "column headers" not in prompt.text
        assert "Police Force Strength" in prompt.text
        assert "Monthly counts of police officers" in prompt.text

    def test_deterministic(self, police_record, files_dir):
        sample = sample_table(files_dir / "f001.csv")
        a = build_description_prompt(police_record, sample)
        b = build_description_prompt(police_record, sample)
        assert a == b

    def test_no_residual_placeholders(self, police_record, files_dir):
        sample = sample_table(files_dir / "f001.csv")
        for prompt in (build_description_prompt(police_record, sample),
                       *(build_query_prompt(police_record, s) for s in STYLES)):
            assert "{title}" not in prompt.text
            assert "{n}" not in prompt.text
            assert "{headers}" not in prompt.text

    def test_prompt_building_does_not_mutate_record(self, police_record, files_dir):
        before = police_record.copy()
        build_description_prompt(police_record, sample_table(files_dir / "f001.csv"))
        assert police_record == before


class TestQueryPrompt:
    def test_context_is_title_and_id_only(self, police_record):
        prompt = build_query_prompt(police_record, "describing")
        assert "Police Force Strength" in prompt.text
        assert "f001" in prompt.text
        # metadata beyond title and id stays out of the context
        assert "Monthly counts" not in prompt.text

    def test_unknown_style_rejected(self, police_record):
        with pytest.raises(ValueError):
            build_query_prompt(police_record, "demanding")


class TestMockBackend:
    def test_echo_contract(self, police_record, files_dir):
        sample = sample_table(files_dir / "f001.csv")
        prompt = build_description_prompt(police_record, sample)
        backend = MockBackend()
        text = backend.complete(prompt.text)
        body_words = text.split()
        assert len(body_words) <= 350
        assert "Police" in text
        assert "max. 350 words" not in text  # instruction is not part of the body

    def test_deterministic(self):
        backend = MockBackend()
        assert backend.complete("line one\nPlease generate x") == \
            backend.complete("line one\nPlease generate x")


class TestGenerateDescription:
    def test_mock_roundtrip(self, police_record):
        prompt = build_description_prompt(police_record, None)
        text = generate_description(prompt, MockBackend())
        assert text == MockBackend().complete(prompt.text).strip()

    def test_whitespace_response_is_failure(self, police_record):
        class BlankBackend:
            def complete(self, prompt, temperature=0.0, context=None):
                return "   \n "

        prompt = build_description_prompt(police_record, None)
        with pytest.raises(GenerationFailed):
            generate_description(prompt, BlankBackend())


class TestGenerateQueries:
    def test_three_styles_one_each(self, police_record):
        queries = generate_queries(police_record, MockBackend())
        assert [q.style for q in queries] == list(STYLES)
        assert all(q.gold_dataset_id == "f001" for q in queries)
        assert [q.query_id for q in queries] == [f"f001:{s}" for s in STYLES]
        assert all(q.text for q in queries)

    def test_deterministic_across_runs(self, police_record):
        a = generate_queries(police_record, MockBackend())
        b = generate_queries(police_record, MockBackend())
        assert a == b

    def test_full_query_set_size(self, records):
        backend = MockBackend()
        queries = []
        for record in records:
            queries.extend(generate_queries(record, backend))
        assert len(queries) == 3 * len(records)
        per_dataset = {}
        for q in queries:
            per_dataset.setdefault(q.gold_dataset_id, set()).add(q.style)
        assert all(styles == set(STYLES) for styles in per_dataset.values())


class TestHttpBackend:
    def _config(self, url, **kw):
        return GenBackendConfig(backend="http", endpoint=url, model="stub-model",
                                max_retries=3, timeout=5.0, backoff_s=0.01, **kw)

    def test_transient_5xx_then_success_retries_once(self, tmp_path):
        audit_path = tmp_path / "audit.jsonl"
        with StubLLMServer(script=[("error", 500)], default_text="recovered") as stub:
            backend = HttpBackend(self._config(stub.url), AuditLog(audit_path))
            out = backend.complete("hello", context={"dataset_id": "d1"})
        assert out == "recovered"
        entries = [json.loads(line) for line in audit_path.read_text().splitlines()]
        retries = [e for e in entries if e["status"] == "retry"]
        assert len(retries) == 1
        assert any(e["status"] == "ok" and e["attempt"] == 2 for e in entries)

    def test_persistent_4xx_raises_auth_error(self):
        with StubLLMServer(after=("error", 401)) as stub:
            backend = HttpBackend(self._config(stub.url))
            with pytest.raises(AuthError):
                backend.complete("hello")

    def test_429_is_transient(self):
        with StubLLMServer(script=[("error", 429)], default_text="after limit") as stub:
            backend = HttpBackend(self._config(stub.url))
            assert backend.complete("hello") == "after limit"

    def test_retries_exhausted_raises_generation_failed(self):
        with StubLLMServer(after=("error", 503)) as stub:
            backend = HttpBackend(self._config(stub.url))
            with pytest.raises(GenerationFailed):
                backend.complete("hello")

    def test_plain_text_response_shape(self):
        # stub returns the chat shape; exercise the {"text": ...} fallback directly
        backend = HttpBackend(self._config("http://unused.invalid/"))
        assert backend._extract_text({"text": "plain"}) == "plain"
        with pytest.raises(GenerationFailed):
            backend._extract_text({"unexpected": 1})

    def test_missing_endpoint_rejected(self):
        from metabench.errors import ConfigError

        with pytest.raises(ConfigError):
            HttpBackend(GenBackendConfig(backend="http"))

    def test_make_backend_dispatch(self):
        assert isinstance(make_backend(GenBackendConfig()), MockBackend)
        with pytest.raises(Exception):
            make_backend(GenBackendConfig(backend="carrier-pigeon"))


class TestMapConcurrent:
    def test_results_in_input_order(self):
        out = map_concurrent(lambda x: x * 2, [1, 2, 3, 4], max_workers=3)
        assert out == [2, 4, 6, 8]

    def test_generation_failures_captured(self):
        def flaky(x):
            if x == 2:
                raise GenerationFailed("nope")
            return x

        out = map_concurrent(flaky, [1, 2, 3], max_workers=2)
        assert out[0] == 1 and out[2] == 3
        assert isinstance(out[1], GenerationFailed)

    def test_auth_error_propagates(self):
        def fatal(x):
            raise AuthError("bad key")

        with pytest.raises(AuthError):
            map_concurrent(fatal, [1, 2], max_workers=2)


class TestQueryIO:
    def test_roundtrip(self, tmp_path, records):
        backend = MockBackend()
        queries = generate_queries(records[0], backend)
        path = tmp_path / "queries.jsonl"
        save_queries(queries, path)
        assert load_queries(path) == queries

    def test_invalid_style_rejected_on_load(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({
            "query_id": "q1", "gold_dataset_id": "d", "style": "shouting",
            "text": "x"}) + "\n")
        from metabench.errors import DataError

        with pytest.raises(DataError):
            load_queries(path)

    def test_query_record_validation(self):
        with pytest.raises(ValueError):
            QueryRecord(query_id="q", gold_dataset_id="d", style="requesting", text="  ")
