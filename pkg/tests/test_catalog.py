from __future__ import annotations

import json
import random

import pytest

from metabench.catalog import (
    CatalogLoadError,
    CatalogParseError,
    Distribution,
    completeness_report,
    filter_structured,
    parse_catalog,
    record_from_dict,
    record_to_dict,
    sample_table,
    write_completeness_csv,
)
from metabench.errors import DataError, SamplingError


class TestParseCatalog:
    def test_fixture_loads_20_records(self, fixture_catalog_path):
        records = parse_catalog(fixture_catalog_path, format="array-json")
        assert len(records) == 20
        assert [r.dataset_id for r in records] == [f"f{i:03d}" for i in range(1, 21)]

    def test_empty_array_file(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("[]")
        assert parse_catalog(path, format="array-json") == []

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "dup.json"
        path.write_text(json.dumps([
            {"dataset_id": "x", "lds_title": "One"},
            {"dataset_id": "x", "lds_title": "Two"},
        ]))
        with pytest.raises(CatalogLoadError, match=r"'x'.*entries 0 and 1"):
            parse_catalog(path, format="array-json")

    def test_missing_title_names_entry_index(self, tmp_path):
        path = tmp_path / "notitle.json"
        path.write_text(json.dumps([{"dataset_id": "a", "lds_title": "ok"},
                                    {"dataset_id": "b"}]))
        with pytest.raises(CatalogLoadError, match="entry 1"):
            parse_catalog(path, format="array-json")

    def test_missing_id_names_entry_index(self, tmp_path):
        path = tmp_path / "noid.json"
        path.write_text(json.dumps([{"lds_title": "t"}]))
        with pytest.raises(CatalogLoadError, match="entry 0"):
            parse_catalog(path, format="array-json")

    def test_malformed_json_reports_byte_offset(self, tmp_path):
        path = tmp_path / "bad.json"
        text = '[{"dataset_id": "a", "lds_title": }]'
        path.write_text(text)
        with pytest.raises(CatalogParseError) as exc_info:
            parse_catalog(path, format="array-json")
        assert exc_info.value.byte_offset == text.index("}")

    def test_malformed_jsonl_reports_byte_offset(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = '{"dataset_id": "a", "lds_title": "t"}\n'
        path.write_text(good + "{broken\n")
        with pytest.raises(CatalogParseError) as exc_info:
            parse_catalog(path, format="jsonl")
        assert exc_info.value.byte_offset is not None
        assert exc_info.value.byte_offset >= len(good.encode())

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            parse_catalog(tmp_path / "nope.json")

    def test_scalar_keyword_coerced_to_list(self, records):
        f002 = next(r for r in records if r.dataset_id == "f002")
        assert f002.lds_keywords == ["air quality"]
        f005 = next(r for r in records if r.dataset_id == "f005")
        assert f005.lds_topic == ["Housing"]

    def test_roundtrip_parse_serialize_parse(self, records, tmp_path):
        path = tmp_path / "roundtrip.jsonl"
        with open(path, "w") as fh:
            for record in records:
                fh.write(json.dumps(record_to_dict(record)) + "\n")
        again = parse_catalog(path, format="jsonl")
        assert again == records

    def test_non_ascii_roundtrip(self, tmp_path):
        record = record_from_dict({
            "dataset_id": "u1", "lds_title": "Cafés of Lambeth — 2023",
            "lds_description": "Ångström-level précision",
        })
        path = tmp_path / "unicode.jsonl"
        path.write_text(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n",
                        encoding="utf-8")
        assert parse_catalog(path, format="jsonl") == [record]

    def test_byte_offset_accounts_for_multibyte_chars(self, tmp_path):
        path = tmp_path / "multibyte.json"
        # é is two bytes in UTF-8, so byte offset > char offset
        text = '[{"dataset_id": "cafééé", "lds_title": }]'
        path.write_text(text, encoding="utf-8")
        with pytest.raises(CatalogParseError) as exc_info:
            parse_catalog(path, format="array-json")
        char_pos = text.index("}")
        assert exc_info.value.byte_offset == char_pos + 3


class TestDistribution:
    @pytest.mark.parametrize("url,label,expected", [
        ("https://x.org/a.csv", None, True),
        ("https://x.org/a.CSV", None, True),
        ("https://x.org/a.pdf", "xlsx", True),
        ("https://x.org/a.pdf", "PDF", False),
        ("https://x.org/a", "xls", True),
        ("files/local.csv", None, True),
        ("https://x.org/a.csv?v=2", None, True),
        ("https://x.org/a.docx", None, False),
    ])
    def test_is_structured(self, url, label, expected):
        assert Distribution(url=url, format_label=label).is_structured is expected


class TestCompleteness:
    def test_fixture_hand_counts(self, records):
        report = completeness_report(records)
        assert report.total_count == 20
        assert report.fractions["lds_title"] == 1.0
        assert report.fractions["lds_description"] == 0.5
        assert report.fractions["lds_keywords"] == 12 / 20
        assert report.fractions["lds_topic"] == 19 / 20
        assert report.fractions["distributions"] == 17 / 20
        assert report.structured_count == 15

    def test_whitespace_description_counts_absent(self):
        records = [
            record_from_dict({"dataset_id": "a", "lds_title": "t", "lds_description": "   "}),
            record_from_dict({"dataset_id": "b", "lds_title": "t", "lds_description": "real"}),
        ]
        report = completeness_report(records, fields=["lds_description"])
        assert report.fractions["lds_description"] == 0.5

    def test_empty_catalogue_rejected(self):
        with pytest.raises(DataError):
            completeness_report([])

    def test_reordering_invariance(self, records):
        base = completeness_report(records).fractions
        rng = random.Random(3)
        for _ in range(5):
            shuffled = records[:]
            rng.shuffle(shuffled)
            assert completeness_report(shuffled).fractions == base

    def test_csv_output_shape(self, records, tmp_path):
        report = completeness_report(records)
        out = tmp_path / "completeness.csv"
        write_completeness_csv(report, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "field,present,total,fraction"
        assert lines[1] == "lds_title,20,20,1.000"
        assert "lds_description,10,20,0.500" in lines
        assert "lds_topic,19,20,0.950" in lines
        assert "distributions,17,20,0.850" in lines
        assert "lds_keywords,12,20,0.600" in lines


class TestFilterStructured:
    def test_fixture_subset(self, records):
        structured = filter_structured(records)
        assert [r.dataset_id for r in structured] == [
            "f001", "f002", "f003", "f004", "f005", "f006", "f007", "f008",
            "f009", "f010", "f011", "f012", "f013", "f014", "f020",
        ]

    def test_pdf_only_excluded_csv_plus_pdf_included(self):
        pdf_only = record_from_dict({
            "dataset_id": "p", "lds_title": "t",
            "distributions": [{"url": "https://x.org/a.pdf", "format": "pdf"}],
        })
        mixed = record_from_dict({
            "dataset_id": "m", "lds_title": "t",
            "distributions": [{"url": "https://x.org/a.csv", "format": "csv"},
                              {"url": "https://x.org/a.pdf", "format": "pdf"}],
        })
        assert filter_structured([pdf_only, mixed]) == [mixed]

    def test_idempotent(self, records):
        once = filter_structured(records)
        assert filter_structured(once) == once

    def test_structured_count_matches_filter(self, records):
        report = completeness_report(records)
        assert report.structured_count == len(filter_structured(records))


class TestSampleTable:
    def test_four_row_fixture_no_overlap(self, files_dir):
        sample = sample_table(files_dir / "f001.csv", head_n=3, tail_n=3)
        assert sample.record_count == 4
        assert sample.headers == ["Force", "Year", "Officers"]
        assert len(sample.head_rows) == 3
        assert sample.tail_rows == [["Metropolitan Police", "2022", "33984"]]

    def test_zero_data_rows(self, tmp_path):
        path = tmp_path / "only_header.csv"
        path.write_text("a,b,c\n")
        sample = sample_table(path)
        assert sample.record_count == 0
        assert sample.head_rows == [] and sample.tail_rows == []

    def test_newline_cell_sanitized(self, files_dir):
        sample = sample_table(files_dir / "f002.csv", head_n=5, tail_n=0)
        cells = [cell for row in sample.head_rows for cell in row]
        assert "North Kensington Background" in cells
        assert not any("\n" in cell for cell in cells)

    def test_sanitize_rule_inline(self, tmp_path):
        path = tmp_path / "nl.csv"
        path.write_text('h1,h2\n"a\nb  c",x\n')
        sample = sample_table(path)
        assert sample.head_rows[0][0] == "a b c"

    def test_empty_file_is_sampling_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SamplingError):
            sample_table(path)

    def test_missing_file_is_sampling_error(self, tmp_path):
        with pytest.raises(SamplingError):
            sample_table(tmp_path / "gone.csv")

    def test_ragged_rows_padded_to_header_width(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b,c\n1,2\n1,2,3,4\n")
        sample = sample_table(path)
        assert all(len(row) == 3 for row in sample.head_rows)

    def test_cell_cap_respected(self, tmp_path):
        path = tmp_path / "long.csv"
        path.write_text("h\n" + "x" * 200 + "\n")
        sample = sample_table(path, cap=80)
        assert len(sample.head_rows[0][0]) == 80
        assert sample.head_rows[0][0].endswith("…")
