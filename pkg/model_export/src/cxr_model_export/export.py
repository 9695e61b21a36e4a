"""Graph export, dry-run shape verification and reference-fixture emission."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from cxr_triage.embedding import (
    GRAPH_INPUT_NAME,
    GRAPH_INPUT_SHAPE,
    GRAPH_META_FILE,
    GRAPH_OUTPUT_NAME,
    GRAPH_OUTPUT_SHAPE,
    GraphExtractor,
)
from cxr_triage.imaging import preprocess_png

from .builder import build_feature_extractor

EXPORTED_AT_KEY = "exported_at"


class ShapeCheckError(RuntimeError):
    """The traced graph did not produce the declared output shape."""


@dataclass(frozen=True)
class ExportSpec:
    """Everything one export run needs; fixture paths may be empty when
    only the graph is wanted."""

    weights_identifier: str
    output_graph_path: str
    fixture_image_path: str = ""
    fixture_output_path: str = ""


class _FeatureHead(torch.nn.Module):
    """Backbone truncated to the pre-pooling feature map, ReLU applied."""

    def __init__(self, features: torch.nn.Module):
        super().__init__()
        self.features = features

    def forward(self, x):
        return torch.nn.functional.relu(self.features(x))


def graph_meta() -> dict:
    """The tensor contract embedded in every exported graph."""
    return {
        "input": {"name": GRAPH_INPUT_NAME, "shape": list(GRAPH_INPUT_SHAPE)},
        "output": {"name": GRAPH_OUTPUT_NAME, "shape": list(GRAPH_OUTPUT_SHAPE)},
    }


def metadata_path(graph_path) -> Path:
    return Path(graph_path).with_suffix(".meta.json")


def native_feature_map(backbone: torch.nn.Module, image_path) -> np.ndarray:
    """Eager-mode feature map for one image; the oracle an export must match."""
    image = preprocess_png(Path(image_path).read_bytes())
    head = _FeatureHead(backbone.features).eval()
    x = torch.from_numpy(image.values.astype(np.float32))[None, None]
    with torch.no_grad():
        out = head(x)
    return out[0].numpy()


def export_graph(spec: ExportSpec) -> dict:
    """Trace the feature head, dry-run it on zeros, write graph + metadata.

    The metadata dict is returned and also written as JSON next to the
    graph (see :func:`metadata_path`).
    """
    backbone = build_feature_extractor(spec.weights_identifier)
    head = _FeatureHead(backbone.features).eval()
    example = torch.zeros(GRAPH_INPUT_SHAPE)
    with torch.no_grad():
        traced = torch.jit.trace(head, example)
        dry = traced(example)
    if tuple(dry.shape) != GRAPH_OUTPUT_SHAPE:
        raise ShapeCheckError(
            f"dry run produced shape {list(dry.shape)}, "
            f"contract requires {list(GRAPH_OUTPUT_SHAPE)}")
    meta = graph_meta()
    out_path = Path(spec.output_graph_path)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.jit.save(traced, str(out_path), _extra_files={GRAPH_META_FILE: json.dumps(meta)})
    metadata = {
        EXPORTED_AT_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "weights": spec.weights_identifier,
        "graph_file": out_path.name,
        "declared": meta,
        "preprocessing": {
            "grayscale": "channel mean",
            "resize": "bilinear center-crop to 224x224",
            "value_range": [-1024.0, 1024.0],
        },
        "torch_version": torch.__version__,
    }
    metadata_path(out_path).write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return metadata


def emit_fixture(spec: ExportSpec) -> np.ndarray:
    """Run the exported graph on the fixture image and write its feature map.

    The CSV holds 1024 rows, one per channel, each with the 49 cells of
    the 7x7 map row-major at 9 significant digits. Returns the feature
    map that was written.
    """
    image_path = Path(spec.fixture_image_path)
    if not image_path.is_file():
        raise FileNotFoundError(f"fixture image not found: {image_path}")
    extractor = GraphExtractor(spec.output_graph_path)
    fmap = extractor.extract(preprocess_png(image_path.read_bytes()))
    values = fmap.values.reshape(fmap.values.shape[0], -1)
    lines = [",".join(f"{v:.9g}" for v in row) for row in values]
    Path(spec.fixture_output_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return fmap.values


def load_fixture(path) -> np.ndarray:
    """Read an emitted fixture CSV back as (channels, cells) float64."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return np.array([[float(v) for v in line.split(",")] for line in lines if line])


def write_verification_bundle(weights_identifier: str, image_paths, out_dir) -> Path:
    """Assemble a graph-parity bundle: graph.pt plus <name>.png/<name>.npy.

    The .npy tensors come from the eager forward pass, so a consumer that
    runs the graph and compares against them is checking the export across
    runtimes, not the graph against itself.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_graph(ExportSpec(weights_identifier, str(out / "graph.pt")))
    backbone = build_feature_extractor(weights_identifier)
    for src in image_paths:
        src = Path(src)
        shutil.copyfile(src, out / src.name)
        np.save(out / (src.stem + ".npy"), native_feature_map(backbone, src))
    return out
