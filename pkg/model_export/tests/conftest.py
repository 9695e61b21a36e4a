"""Shared fixtures: deterministic study images and one session-wide export.

The package imports live inside the fixtures so that collecting this
directory without cxr-model-export installed skips cleanly instead of
failing; every test module starts with an importorskip guard.
"""

import numpy as np
import pytest
from PIL import Image

WEIGHTS = "random:3"


@pytest.fixture(scope="session")
def weights_id():
    """Identifier every test exports and rebuilds with."""
    return WEIGHTS


@pytest.fixture(scope="session")
def fixture_images(tmp_path_factory):
    """Four grayscale studies of assorted sizes, written once per session."""
    rng = np.random.default_rng(91)
    root = tmp_path_factory.mktemp("studies")
    paths = []
    for i, (h, w) in enumerate([(224, 224), (320, 280), (64, 100), (150, 150)]):
        arr = rng.integers(0, 256, size=(h, w)).astype(np.uint8)
        path = root / f"study{i:02d}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def exported(tmp_path_factory, fixture_images):
    """One seeded export reused read-only across tests (tracing is slow)."""
    from cxr_model_export import ExportSpec, emit_fixture, export_graph

    out = tmp_path_factory.mktemp("export")
    spec = ExportSpec(
        weights_identifier=WEIGHTS,
        output_graph_path=str(out / "features.pt"),
        fixture_image_path=str(fixture_images[0]),
        fixture_output_path=str(out / "fixture_features.csv"),
    )
    metadata = export_graph(spec)
    emit_fixture(spec)
    return spec, metadata
