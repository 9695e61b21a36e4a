"""Chest X-ray triage: PNG preprocessing, deep-feature embeddings, KNN evaluation."""

__version__ = "0.1.0"

from . import dataset, embedding, imaging, knn, metrics, report  # noqa: F401,E402
