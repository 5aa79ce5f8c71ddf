"""Catalogue ingestion, metadata-field modelling, completeness analysis and
structured-file filtering.

Input is an array-of-objects JSON file or JSONL, one object per dataset,
with field names matching DatasetRecord and distributions as a list of
{url, format}. A loaded catalogue is immutable in spirit: downstream stages
replace derived fields wholesale rather than appending.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from urllib.parse import urlparse

from metabench._textutil import sanitize_cell
from metabench.errors import CatalogLoadError, CatalogParseError, DataError, SamplingError

STRUCTURED_FORMATS = frozenset({"csv", "xlsx", "xls"})
VALID_URL_SCHEMES = frozenset({"http", "https", "ftp"})

# The ten metadata fields, in serialization order.
METADATA_FIELDS = (
    "lds_title",
    "lds_description",
    "lds_keywords",
    "lds_topic",
    "lds_desc_keywords",
    "lds_desc_topics",
    "llm_prompt",
    "llm_description",
    "llm_desc_keywords",
    "llm_desc_topics",
)

# Field name -> display name used by the completeness analysis output.
COMPLETENESS_DISPLAY = {
    "lds_title": "title",
    "lds_topic": "theme",
    "lds_description": "description",
    "distributions": "download link",
    "lds_keywords": "keywords",
}
DEFAULT_COMPLETENESS_FIELDS = tuple(COMPLETENESS_DISPLAY)


def is_structured_format(url: str, format_label: str | None) -> bool:
    """True when the format label, or failing that the URL extension, names a
    machine-readable spreadsheet format (csv/xlsx/xls)."""
    if format_label and format_label.strip().lower().lstrip(".") in STRUCTURED_FORMATS:
        return True
    ext = Path(urlparse(url).path).suffix.lstrip(".").lower()
    return ext in STRUCTURED_FORMATS


def is_valid_download_url(url: str) -> bool:
    """Syntactic validity check: absolute URL with a known scheme and a host."""
    try:
        parsed = urlparse(url.strip())
    except ValueError:
        return False
    return parsed.scheme in VALID_URL_SCHEMES and bool(parsed.netloc)


@dataclass
class Distribution:
    url: str
    format_label: str | None = None

    @property
    def is_structured(self) -> bool:
        return is_structured_format(self.url, self.format_label)


@dataclass
class DatasetRecord:
    """One catalogue entry with original, NLP-derived and LLM-derived fields.

    Derived fields stay empty until the corresponding enrichment stage has
    run; re-running a stage replaces them.
    """

    dataset_id: str
    lds_title: str
    lds_description: str | None = None
    lds_keywords: list[str] = field(default_factory=list)
    lds_topic: list[str] = field(default_factory=list)
    distributions: list[Distribution] = field(default_factory=list)
    lds_desc_keywords: list[str] = field(default_factory=list)
    lds_desc_topics: list[str] = field(default_factory=list)
    llm_prompt: str | None = None
    llm_description: str | None = None
    llm_desc_keywords: list[str] = field(default_factory=list)
    llm_desc_topics: list[str] = field(default_factory=list)

    def has_structured_file(self) -> bool:
        return any(d.is_structured for d in self.distributions)

    def copy(self) -> "DatasetRecord":
        return replace(
            self,
            lds_keywords=list(self.lds_keywords),
            lds_topic=list(self.lds_topic),
            distributions=list(self.distributions),
            lds_desc_keywords=list(self.lds_desc_keywords),
            lds_desc_topics=list(self.lds_desc_topics),
            llm_desc_keywords=list(self.llm_desc_keywords),
            llm_desc_topics=list(self.llm_desc_topics),
        )


@dataclass
class CompletenessReport:
    fractions: dict[str, float]
    present: dict[str, int]
    total_count: int
    structured_count: int


@dataclass
class TableSample:
    """Headers plus sanitized head/tail rows from a structured file."""

    record_count: int
    headers: list[str]
    head_rows: list[list[str]]
    tail_rows: list[list[str]]


def _as_text(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, str):
        return value
    return str(value)


def _as_text_list(value) -> list[str]:
    # a scalar keyword becomes a one-element list
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if isinstance(value, (int, float, bool)):
        return [str(value)]
    return [v if isinstance(v, str) else str(v) for v in value]


def record_from_dict(entry: dict, index: int | None = None) -> DatasetRecord:
    where = f"entry {index}" if index is not None else "entry"
    dataset_id = _as_text(entry.get("dataset_id"))
    if not dataset_id or not dataset_id.strip():
        raise CatalogLoadError(f"{where}: missing dataset_id")
    title = _as_text(entry.get("lds_title"))
    if not title or not title.strip():
        raise CatalogLoadError(f"{where} (dataset_id={dataset_id!r}): missing lds_title")
    distributions = []
    for dist in entry.get("distributions") or []:
        if isinstance(dist, str):
            distributions.append(Distribution(url=dist))
        else:
            distributions.append(
                Distribution(url=_as_text(dist.get("url")) or "",
                             format_label=_as_text(dist.get("format")))
            )
    return DatasetRecord(
        dataset_id=dataset_id,
        lds_title=title,
        lds_description=_as_text(entry.get("lds_description")),
        lds_keywords=_as_text_list(entry.get("lds_keywords")),
        lds_topic=_as_text_list(entry.get("lds_topic")),
        distributions=distributions,
        lds_desc_keywords=_as_text_list(entry.get("lds_desc_keywords")),
        lds_desc_topics=_as_text_list(entry.get("lds_desc_topics")),
        llm_prompt=_as_text(entry.get("llm_prompt")),
        llm_description=_as_text(entry.get("llm_description")),
        llm_desc_keywords=_as_text_list(entry.get("llm_desc_keywords")),
        llm_desc_topics=_as_text_list(entry.get("llm_desc_topics")),
    )


def record_to_dict(record: DatasetRecord) -> dict:
    return {
        "dataset_id": record.dataset_id,
        "lds_title": record.lds_title,
        "lds_description": record.lds_description,
        "lds_keywords": list(record.lds_keywords),
        "lds_topic": list(record.lds_topic),
        "distributions": [
            {"url": d.url, "format": d.format_label} for d in record.distributions
        ],
        "lds_desc_keywords": list(record.lds_desc_keywords),
        "lds_desc_topics": list(record.lds_desc_topics),
        "llm_prompt": record.llm_prompt,
        "llm_description": record.llm_description,
        "llm_desc_keywords": list(record.llm_desc_keywords),
        "llm_desc_topics": list(record.llm_desc_topics),
    }


def _char_to_byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def parse_catalog(path, format: str = "array-json") -> list[DatasetRecord]:
    """Load a catalogue dump into records.

    format is "array-json" (a single JSON array of objects) or "jsonl" (one
    object per line). Duplicate dataset_ids, missing ids/titles and
    unparseable files are load errors; nothing is ever fabricated for
    missing optional fields.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"catalogue file not found: {path}")
    raw = path.read_bytes()
    text = raw.decode("utf-8")

    entries: list[dict]
    if format == "array-json":
        try:
            parsed = json.loads(text)
        except json.JSONDecodeError as exc:
            offset = _char_to_byte_offset(text, exc.pos)
            raise CatalogParseError(
                f"{path}: malformed JSON at byte {offset}: {exc.msg}", offset
            ) from exc
        if not isinstance(parsed, list):
            raise CatalogParseError(f"{path}: expected a top-level JSON array")
        entries = parsed
    elif format == "jsonl":
        entries = []
        line_start = 0
        for line in text.splitlines(keepends=True):
            stripped = line.strip()
            if stripped:
                try:
                    entries.append(json.loads(stripped))
                except json.JSONDecodeError as exc:
                    offset = line_start + _char_to_byte_offset(line, exc.pos)
                    raise CatalogParseError(
                        f"{path}: malformed JSON at byte {offset}: {exc.msg}", offset
                    ) from exc
            line_start += len(line.encode("utf-8"))
    else:
        raise ValueError(f"unknown catalogue format: {format!r}")

    records: list[DatasetRecord] = []
    seen: dict[str, int] = {}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise CatalogParseError(f"{path}: entry {i} is not an object")
        record = record_from_dict(entry, index=i)
        if record.dataset_id in seen:
            raise CatalogLoadError(
                f"duplicate dataset_id {record.dataset_id!r} "
                f"(entries {seen[record.dataset_id]} and {i})"
            )
        seen[record.dataset_id] = i
        records.append(record)
    return records


def save_records_jsonl(records: list[DatasetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")


def load_records_jsonl(path) -> list[DatasetRecord]:
    return parse_catalog(path, format="jsonl")


def _field_present(record: DatasetRecord, field_name: str) -> bool:
    if field_name == "distributions":
        return any(is_valid_download_url(d.url) for d in record.distributions)
    value = getattr(record, field_name)
    if value is None:
        return False
    if isinstance(value, str):
        return bool(value.strip())
    return any(v.strip() for v in value)


def completeness_report(records: list[DatasetRecord],
                        fields: tuple[str, ...] | list[str] = DEFAULT_COMPLETENESS_FIELDS,
                        ) -> CompletenessReport:
    """Per-field presence fractions over a catalogue.

    Presence means non-empty after whitespace trim; a list counts when it
    has at least one non-empty element, distributions when at least one
    entry carries a syntactically valid absolute URL.
    """
    if not records:
        raise DataError("completeness report over an empty catalogue is undefined")
    present = {f: 0 for f in fields}
    for record in records:
        for f in fields:
            if _field_present(record, f):
                present[f] += 1
    total = len(records)
    return CompletenessReport(
        fractions={f: present[f] / total for f in fields},
        present=present,
        total_count=total,
        structured_count=sum(1 for r in records if r.has_structured_file()),
    )


def write_completeness_csv(report: CompletenessReport, path) -> None:
    """CSV output: field,present,total,fraction with fraction at 3 decimals."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "present", "total", "fraction"])
        for field_name, count in report.present.items():
            writer.writerow(
                [field_name, count, report.total_count,
                 f"{report.fractions[field_name]:.3f}"]
            )


def filter_structured(records: list[DatasetRecord]) -> list[DatasetRecord]:
    """Keep records with at least one structured (csv/xlsx/xls) file, in order."""
    return [r for r in records if r.has_structured_file()]


def _sniff_dialect(sample: str):
    try:
        return csv.Sniffer().sniff(sample, delimiters=",;\t|")
    except csv.Error:
        return csv.excel


def sample_table(file, head_n: int = 3, tail_n: int = 3, cap: int = 80) -> TableSample:
    """Extract headers plus sanitized head/tail rows from a delimited file.

    The first row is the header. Rows overlapping between head and tail are
    kept in the head only. Ragged rows are padded or truncated to the header
    width; every cell goes through sanitize_cell.
    """
    path = Path(file)
    try:
        text = path.read_text("utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise SamplingError(f"cannot read table file {path}: {exc}") from exc

    rows = [row for row in csv.reader(io.StringIO(text), _sniff_dialect(text[:8192]))]
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if not rows:
        raise SamplingError(f"table file {path} has no header row")
    headers = [sanitize_cell(cell, cap) for cell in rows[0]]
    if not any(headers):
        raise SamplingError(f"table file {path} has a blank header row")

    width = len(headers)

    def fit(row: list[str]) -> list[str]:
        cells = [sanitize_cell(cell, cap) for cell in row[:width]]
        cells.extend("" for _ in range(width - len(cells)))
        return cells

    data = [fit(row) for row in rows[1:]]
    count = len(data)
    head = data[: min(head_n, count)]
    tail = data[max(len(head), count - tail_n):]
    return TableSample(record_count=count, headers=headers, head_rows=head, tail_rows=tail)
