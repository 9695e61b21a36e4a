"""Shared paths and corpus fixtures; the PNG oracle lives in png_codec."""

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def e2e_corpus() -> tuple[Path, Path]:
    """(metadata CSV, images dir) of the committed 40-study corpus."""
    return FIXTURES / "e2e" / "metadata.csv", FIXTURES / "e2e" / "images"
