"""Exact k-nearest-neighbors binary classifier over embedding vectors.

Brute-force Euclidean search (the data never exceeds a few hundred points),
majority-vote prediction and a neighbor-fraction score usable as a ROC
statistic. Every tie has a documented deterministic rule: equal distances
rank by training index, a split vote goes to the class with the smaller
summed neighbor distance, and a dead heat predicts positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np


@dataclass(frozen=True)
class KnnModel:
    train: np.ndarray   # (n, d) float64
    labels: np.ndarray  # (n,) values in {0, 1}
    k: int

    def __post_init__(self):
        n = self.train.shape[0]
        if n < 1:
            raise ValueError("training set must be non-empty")
        if self.labels.shape != (n,):
            raise ValueError(f"{n} embeddings vs {self.labels.shape[0]} labels")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not 1 <= self.k <= n:
            raise ValueError(f"k must be in [1, {n}], got {self.k}")


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """sqrt of the summed squared componentwise differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def fit(embeddings, labels, k: int) -> KnnModel:
    """Store the training data verbatim (KNN is a lazy learner)."""
    train = np.asarray(embeddings, dtype=np.float64)
    if train.ndim != 2:
        raise ValueError("embeddings must form a 2D array of equal-length vectors")
    return KnnModel(train, np.asarray(labels), int(k))


def _query_vector(model: KnnModel, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (model.train.shape[1],):
        raise ValueError(f"dimension mismatch: {q.shape[0]} vs {model.train.shape[1]}")
    return q


def neighbors(model: KnnModel, query) -> list[tuple[int, float]]:
    """The k nearest training points as (index, distance), ascending.

    Exact search; equal distances are ordered by training index so results
    are reproducible everywhere.
    """
    q = _query_vector(model, query)
    dist = np.sqrt(((model.train - q) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[: model.k]
    return [(int(i), float(dist[i])) for i in order]


def score(model: KnnModel, query) -> float:
    """Fraction of the k nearest neighbors labeled positive."""
    near = neighbors(model, query)
    positives = sum(int(model.labels[i]) for i, _ in near)
    return positives / model.k


def predict(model: KnnModel, query) -> int:
    """Majority vote of the k nearest neighbors.

    An even split falls back to the class with the smaller summed distance
    among those neighbors; if the sums are equal too, predict 1.
    """
    near = neighbors(model, query)
    positives = sum(int(model.labels[i]) for i, _ in near)
    if 2 * positives > model.k:
        return 1
    if 2 * positives < model.k:
        return 0
    pos_sum = sum(d for i, d in near if model.labels[i] == 1)
    neg_sum = sum(d for i, d in near if model.labels[i] == 0)
    if pos_sum < neg_sum:
        return 1
    if neg_sum < pos_sum:
        return 0
    return 1


def predict_batch(model: KnnModel, queries) -> np.ndarray:
    """Per-query :func:`predict`; output order always matches input order."""
    return np.array([predict(model, q) for q in queries], dtype=np.int64)


def score_batch(model: KnnModel, queries) -> np.ndarray:
    """Per-query :func:`score`; output order always matches input order."""
    return np.array([score(model, q) for q in queries], dtype=np.float64)


def write_model_descriptor(k: int, train_embedding_file: str, sink: TextIO) -> None:
    """Write the JSON sidecar pairing a k with its training embeddings CSV.

    The training data itself stays in the embeddings file; this descriptor is
    all that is needed on top of it to rebuild the model with :func:`fit`.
    """
    json.dump({"k": int(k), "train_embedding_file": train_embedding_file}, sink, indent=2, sort_keys=True)
    sink.write("\n")


def read_model_descriptor(source: TextIO | str) -> tuple[int, str]:
    """Parse a model descriptor back into (k, train_embedding_file)."""
    text = source if isinstance(source, str) else source.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid model descriptor JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValueError("model descriptor must be a JSON object")
    for key in ("k", "train_embedding_file"):
        if key not in data:
            raise ValueError(f"model descriptor is missing {key!r}")
    k = data["k"]
    path = data["train_embedding_file"]
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ValueError(f"model descriptor k must be a positive integer, got {k!r}")
    if not isinstance(path, str):
        raise ValueError("model descriptor train_embedding_file must be a string")
    return k, path
