from __future__ import annotations

from pathlib import Path

import pytest

from metabench.catalog import parse_catalog
from metabench.vectors import HashEmbedder

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_catalog_path() -> Path:
    return DATA_DIR / "fixture_catalog.json"


@pytest.fixture(scope="session")
def files_dir() -> Path:
    return DATA_DIR / "files"


@pytest.fixture()
def records(fixture_catalog_path):
    return parse_catalog(fixture_catalog_path, format="array-json")


@pytest.fixture(scope="session")
def embedder() -> HashEmbedder:
    return HashEmbedder()


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.rsplit("::", 1)[-1]
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        print(f"\n[acceptance] {name}: {status}")
