"""1024-dim image representations: graph-backed extraction, test stub, disk format.

GRAPH mode runs an externally exported TorchScript feature graph (declared
input ``input`` [1,1,224,224], output ``features`` [1,1024,7,7], declaration
embedded in the file) and needs the optional ``torch`` dependency. STUB mode
is a deterministic linear stand-in so everything downstream can be exercised
without the real model.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence, TextIO

import numpy as np

from .imaging import SIDE, PreprocessedImage
from .rng import make_rng

EMBEDDING_DIM = 1024
MAP_SIDE = 7
GRAPH_META_FILE = "graph_meta.json"
GRAPH_INPUT_NAME = "input"
GRAPH_OUTPUT_NAME = "features"
GRAPH_INPUT_SHAPE = (1, 1, SIDE, SIDE)
GRAPH_OUTPUT_SHAPE = (1, EMBEDDING_DIM, MAP_SIDE, MAP_SIDE)

_STUB_GRID = 16          # 224 -> 16x16 block means -> 256 inputs
_STUB_SCALE = 1.0 / 256.0


class ExtractorMode(Enum):
    GRAPH = "graph"
    STUB = "stub"


class GraphLoadError(RuntimeError):
    """Graph file missing, unreadable or not a valid exported graph."""


class GraphShapeError(ValueError):
    """Graph declaration or output disagrees with the extractor contract."""


class EmbeddingsParseError(ValueError):
    """Embeddings CSV is malformed; ``row`` is the 1-based data row."""

    def __init__(self, message: str, *, row: int | None = None):
        super().__init__(message)
        self.row = row


@dataclass(frozen=True)
class ExtractorConfig:
    mode: ExtractorMode
    graph_path: str | None = None
    stub_seed: int = 0

    def __post_init__(self):
        if self.mode is ExtractorMode.GRAPH and not self.graph_path:
            raise ValueError("GRAPH mode requires graph_path")


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (1024, 7, 7), channel-major

    def __post_init__(self):
        if self.values.shape != GRAPH_OUTPUT_SHAPE[1:]:
            raise ValueError(
                f"feature map must be {GRAPH_OUTPUT_SHAPE[1:]}, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("feature map contains non-finite values")


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray  # (1024,) float64
    image_id: str = ""

    def __post_init__(self):
        if self.values.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding must have {EMBEDDING_DIM} values, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite values")


class GraphExtractor:
    """Loads an exported feature graph once and runs single-image inference.

    One inference in flight per instance; make one instance per worker for
    parallel extraction.
    """

    def __init__(self, graph_path: str):
        try:
            import torch
        except ImportError as e:  # pragma: no cover - torch is an optional extra
            raise GraphLoadError(
                "GRAPH mode needs the optional 'torch' dependency (pip install cxr-triage[graph])"
            ) from e
        self._torch = torch
        extra = {GRAPH_META_FILE: ""}
        try:
            self.module = torch.jit.load(graph_path, map_location="cpu", _extra_files=extra)
        except Exception as e:
            raise GraphLoadError(f"cannot load graph {graph_path!r}: {e}") from e
        try:
            meta = json.loads(extra[GRAPH_META_FILE])
            declared_in = tuple(meta["input"]["shape"])
            declared_out = tuple(meta["output"]["shape"])
            names = (meta["input"]["name"], meta["output"]["name"])
        except (KeyError, TypeError, ValueError) as e:
            raise GraphLoadError(f"graph {graph_path!r} lacks a valid {GRAPH_META_FILE}: {e}") from e
        if declared_in != GRAPH_INPUT_SHAPE:
            raise GraphShapeError(
                f"graph declares input shape {list(declared_in)}, "
                f"contract requires {list(GRAPH_INPUT_SHAPE)}")
        if declared_out != GRAPH_OUTPUT_SHAPE:
            raise GraphShapeError(
                f"graph declares output shape {list(declared_out)}, "
                f"contract requires {list(GRAPH_OUTPUT_SHAPE)}")
        if names != (GRAPH_INPUT_NAME, GRAPH_OUTPUT_NAME):
            raise GraphLoadError(
                f"graph declares tensors {names}, expected "
                f"({GRAPH_INPUT_NAME!r}, {GRAPH_OUTPUT_NAME!r})")
        self.module.eval()
        self.meta = meta

    def extract(self, image: PreprocessedImage) -> FeatureMap:
        torch = self._torch
        x = torch.from_numpy(image.values.astype(np.float32))[None, None]
        with torch.no_grad():
            out = self.module(x)
        shape = tuple(out.shape)
        if shape != GRAPH_OUTPUT_SHAPE:
            raise GraphShapeError(
                f"graph produced output shape {list(shape)}, "
                f"contract requires {list(GRAPH_OUTPUT_SHAPE)}")
        return FeatureMap(out[0].numpy().astype(np.float32))


def extract_features(config: ExtractorConfig, image: PreprocessedImage) -> FeatureMap:
    """Run the exported graph on one image (GRAPH mode only)."""
    if config.mode is not ExtractorMode.GRAPH:
        raise ValueError("extract_features requires GRAPH mode")
    return GraphExtractor(config.graph_path).extract(image)


def global_average_pool(fmap: FeatureMap, image_id: str = "") -> Embedding:
    """Mean over the 49 spatial cells of each channel.

    Accumulates in float64 whatever the map's dtype. The floating mean of
    49 cells can land one ulp outside the cell range (49x is not always
    representable), so the result is clamped back into [cell min, cell max];
    the clamped value is never farther from the exact mean.
    """
    vals = fmap.values.astype(np.float64)
    pooled = vals.mean(axis=(1, 2))
    np.clip(pooled, vals.min(axis=(1, 2)), vals.max(axis=(1, 2)), out=pooled)
    return Embedding(pooled, image_id)


@lru_cache(maxsize=4)
def _stub_projection(seed: int) -> np.ndarray:
    return make_rng(seed).standard_normal((EMBEDDING_DIM, _STUB_GRID * _STUB_GRID))


def stub_extract(config: ExtractorConfig, image: PreprocessedImage, image_id: str = "") -> Embedding:
    """Deterministic linear stand-in for the real extractor.

    Block-mean the image down to 16x16, flatten, then apply a fixed
    1024x256 projection drawn once from the package PRNG at ``stub_seed``
    and scale by 1/256.
    """
    if config.mode is not ExtractorMode.STUB:
        raise ValueError("stub_extract requires STUB mode")
    block = SIDE // _STUB_GRID
    pooled = image.values.reshape(_STUB_GRID, block, _STUB_GRID, block).mean(axis=(1, 3))
    x = pooled.reshape(-1)
    # elementwise product + pairwise reduction keeps the result platform-stable
    projected = (_stub_projection(config.stub_seed) * x[None, :]).sum(axis=1) * _STUB_SCALE
    return Embedding(projected, image_id)


def _header() -> list[str]:
    return ["id", "label"] + [f"f{i:04d}" for i in range(EMBEDDING_DIM)]


def save_embeddings(embeddings: Sequence[Embedding], labels: Sequence[int], sink: TextIO) -> int:
    """Write the embeddings CSV (one row per image, 9 significant digits).

    Returns the number of rows written. The 9-digit decimal form is a fixed
    point of load-then-save, so files survive round-trips byte for byte.
    """
    if len(embeddings) != len(labels):
        raise ValueError(f"{len(embeddings)} embeddings vs {len(labels)} labels")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(_header())
    for emb, label in zip(embeddings, labels):
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        writer.writerow([emb.image_id, label] + [f"{v:.9g}" for v in emb.values.tolist()])
    return len(embeddings)


def load_embeddings(source: TextIO | str) -> tuple[list[Embedding], list[int]]:
    """Parse an embeddings CSV back into (embeddings, labels)."""
    lines = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise EmbeddingsParseError("embeddings file is empty: no header row") from None
    if header != _header():
        raise EmbeddingsParseError(
            f"bad header: expected id,label,f0000..f{EMBEDDING_DIM - 1:04d} "
            f"({len(_header())} columns), got {len(header)} columns")

    embeddings: list[Embedding] = []
    labels: list[int] = []
    row_index = 0
    for row in reader:
        if not row:
            continue
        row_index += 1
        if len(row) != 2 + EMBEDDING_DIM:
            raise EmbeddingsParseError(
                f"row {row_index}: expected {2 + EMBEDDING_DIM} columns, got {len(row)}",
                row=row_index)
        if row[1] not in ("0", "1"):
            raise EmbeddingsParseError(
                f"row {row_index}: label must be 0 or 1, got {row[1]!r}", row=row_index)
        try:
            values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            embeddings.append(Embedding(values, row[0]))
        except ValueError as e:
            raise EmbeddingsParseError(f"row {row_index}: {e}", row=row_index) from e
        labels.append(int(row[1]))
    return embeddings, labels
