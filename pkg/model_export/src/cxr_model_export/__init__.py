"""Portable export of the chest X-ray DenseNet-121 feature extractor.

Produces a TorchScript graph exposing the pre-pooling 1024x7x7 feature
map under the embedding contract of the triage pipeline, a metadata JSON
describing the export, and reference feature tensors for fixture images.
"""

from .builder import WeightLoadError, build_feature_extractor
from .export import (
    EXPORTED_AT_KEY,
    ExportSpec,
    ShapeCheckError,
    emit_fixture,
    export_graph,
    graph_meta,
    load_fixture,
    metadata_path,
    native_feature_map,
    write_verification_bundle,
)

__all__ = [
    "EXPORTED_AT_KEY",
    "ExportSpec",
    "ShapeCheckError",
    "WeightLoadError",
    "build_feature_extractor",
    "emit_fixture",
    "export_graph",
    "graph_meta",
    "load_fixture",
    "metadata_path",
    "native_feature_map",
    "write_verification_bundle",
]
