"""Release gate: every headline guarantee of the pipeline runs here.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` and in the
captured output of failures) and enforces the guarantee's time budget on
top of its tolerance. Oracles are imported from the per-module suites so
the implementations are checked against independently written code.
"""

import json
import time
from contextlib import contextmanager

import numpy as np

from png_codec import GRAY, RGB, encode_png
from cxr_triage import cli, knn, metrics
from cxr_triage.dataset import SplitSpec, split
from cxr_triage.embedding import EMBEDDING_DIM, FeatureMap, global_average_pool
from cxr_triage.imaging import SIDE, preprocess_png
from cxr_triage.report import CREATED_AT_KEY, REPORT_FILES
from test_knn import lattice_instance, oracle_predict, oracle_score
from test_metrics import (
    PLANTED_LABELS,
    PLANTED_SCORES,
    mann_whitney,
    naive_bootstrap_ci,
    random_scored_sample,
)


@contextmanager
def gate(name, budget=None):
    """Time a check, enforce its budget, and print one status line."""
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget is not None and elapsed >= budget:
            raise AssertionError(f"{name}: took {elapsed:.2f}s, budget {budget:g}s")
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        limit = f" (budget {budget:g}s)" if budget is not None else ""
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {elapsed:.2f}s{limit}")


def test_confusion_arithmetic_from_fixed_counts():
    with gate("confusion arithmetic from fixed counts", budget=1.0):
        labels = [1] * 26 + [0] * 14
        predictions = [1] * 20 + [0] * 6 + [0] * 10 + [1] * 4
        cm = metrics.confusion_matrix(predictions, labels)
        assert (cm.tp, cm.tn, cm.fn, cm.fp) == (20, 10, 6, 4)
        m = metrics.compute_metrics(cm)
        assert abs(m.precision - 0.833333) <= 1e-6
        assert abs(m.recall - 0.769231) <= 1e-6
        assert abs(m.accuracy - 0.75) <= 1e-6


def test_split_sizes_follow_floor_rule_exactly():
    with gate("split sizes", budget=1.0):
        for n, fraction, want in ((535, 0.8, (428, 107)), (159, 0.75, (119, 40))):
            for seed in (0, 42, 991):
                train, test = split(list(range(n)), SplitSpec(fraction, seed))
                assert (len(train), len(test)) == want


def test_knn_matches_sort_and_vote_oracle():
    with gate("knn vs sort-and-vote oracle, 500 instances", budget=10.0):
        # distance tie: two points equidistant from the query with opposite
        # labels; the lower training index must win at k=1
        train = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
        labels = np.array([1, 0, 0])
        model = knn.fit(train, labels, k=1)
        query = np.zeros(2)
        assert knn.predict(model, query) == oracle_predict(train, labels, 1, query) == 1

        # vote tie broken by summed distance, then a sums-equal fallback
        train = np.array([[1.0], [-4.0], [2.0], [-5.0]])
        labels = np.array([1, 0, 1, 0])
        model = knn.fit(train, labels, k=4)
        query = np.zeros(1)
        assert knn.predict(model, query) == oracle_predict(train, labels, 4, query) == 1
        train = np.array([[2.0], [-1.0], [4.0], [-5.0]])
        model = knn.fit(train, labels, k=4)
        assert knn.predict(model, query) == oracle_predict(train, labels, 4, query) == 1

        rng = np.random.default_rng(20260814)
        for _ in range(500):
            train, labels, k, query = lattice_instance(rng)
            model = knn.fit(train, labels, k)
            assert knn.predict(model, query) == oracle_predict(train, labels, k, query)
            assert knn.score(model, query) == oracle_score(train, labels, k, query)


def test_auc_equals_pair_statistic():
    with gate("trapezoid auc vs pair statistic, 500 instances", budget=10.0):
        rng = np.random.default_rng(4042)
        for _ in range(500):
            scores, labels = random_scored_sample(rng)
            _, trapezoid = metrics.roc_auc(scores, labels)
            assert abs(trapezoid - mann_whitney(scores, labels)) <= 1e-12
        all_tied = np.full(12, 0.7)
        labels = np.array([1, 0] * 6)
        assert metrics.roc_auc(all_tied, labels)[1] == 0.5


def test_bootstrap_deterministic_and_matches_naive_resampler():
    with gate("bootstrap determinism and naive oracle", budget=30.0):
        first = metrics.bootstrap_auc_ci(
            PLANTED_SCORES, PLANTED_LABELS, n_resamples=10_000, level=0.95, seed=42)
        second = metrics.bootstrap_auc_ci(
            PLANTED_SCORES, PLANTED_LABELS, n_resamples=10_000, level=0.95, seed=42)
        assert (first.low, first.high) == (second.low, second.high)

        naive_low, naive_high = naive_bootstrap_ci(
            PLANTED_SCORES, PLANTED_LABELS, n_resamples=10_000, level=0.95, seed=42)
        assert abs(first.low - naive_low) <= 1e-12
        assert abs(first.high - naive_high) <= 1e-12

        separable = np.array([0.0] * 20 + [1.0] * 20)
        labels = np.array([0] * 20 + [1] * 20)
        ci = metrics.bootstrap_auc_ci(separable, labels, n_resamples=10_000, level=0.95, seed=7)
        assert (ci.low, ci.high) == (1.0, 1.0)


def test_preprocessing_bounds_across_depths_and_colors():
    with gate("preprocessing bounds, 8/16-bit gray/rgb up to 1000px", budget=30.0):
        rng = np.random.default_rng(224)
        sizes = [(1, 1), (1, 1000), (737, 3)] + [
            (int(rng.integers(1, 1001)), int(rng.integers(1, 1001))) for _ in range(3)
        ]
        for bit_depth, color_type in ((8, GRAY), (16, GRAY), (8, RGB), (16, RGB)):
            top = 2**bit_depth - 1
            dtype = np.uint16 if bit_depth == 16 else np.uint8
            for h, w in sizes:
                shape = (h, w) if color_type == GRAY else (h, w, 3)
                arr = rng.integers(0, top + 1, size=shape).astype(dtype)
                img = preprocess_png(encode_png(arr, bit_depth=bit_depth, color_type=color_type))
                assert img.values.shape == (SIDE, SIDE)
                assert img.values.min() >= -1024.0
                assert img.values.max() <= 1024.0
            zero_shape = (30, 41) if color_type == GRAY else (30, 41, 3)
            zero = np.zeros(zero_shape, dtype=dtype)
            out = preprocess_png(encode_png(zero, bit_depth=bit_depth, color_type=color_type))
            assert (out.values == -1024.0).all()
            full = np.full(zero_shape, top, dtype=dtype)
            out = preprocess_png(encode_png(full, bit_depth=bit_depth, color_type=color_type))
            assert (out.values == 1024.0).all()


def test_stub_pipeline_end_to_end_reproducible(e2e_corpus, tmp_path, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV_VAR, raising=False)
    with gate("end-to-end stub pipeline, two identical runs", budget=30.0):
        metadata, images = e2e_corpus
        reports = []
        for run in ("a", "b"):
            root = tmp_path / run
            root.mkdir()
            manifest = root / "dataset.json"
            embeddings = root / "embeddings.csv"
            report = root / "report"
            assert cli.main([
                "ingest", "--metadata", str(metadata), "--images-dir", str(images),
                "--task", "covid", "--out", str(manifest),
            ]) == 0
            assert cli.main([
                "embed", "--dataset", str(manifest), "--task", "covid", "--stub",
                "--seed", "7", "--out", str(embeddings),
            ]) == 0
            assert cli.main([
                "eval", "--embeddings", str(embeddings), "--report-dir", str(report),
                "--seed", "42",
            ]) == 0
            assert sorted(p.name for p in report.iterdir()) == sorted(REPORT_FILES)
            reports.append(report)
        for name in REPORT_FILES:
            first, second = (report / name for report in reports)
            if name == "manifest.json":
                a, b = (json.loads(p.read_text()) for p in (first, second))
                a.pop(CREATED_AT_KEY)
                b.pop(CREATED_AT_KEY)
                assert a == b
            else:
                assert first.read_bytes() == second.read_bytes()


def test_pooling_linearity_and_constant_maps():
    with gate("pooling linearity and constant maps, 200 maps"):
        rng = np.random.default_rng(77)
        for _ in range(100):
            m1 = rng.uniform(-50.0, 50.0, size=(EMBEDDING_DIM, 7, 7))
            m2 = rng.uniform(-50.0, 50.0, size=(EMBEDDING_DIM, 7, 7))
            a, b = rng.uniform(-3.0, 3.0, size=2)
            p1 = global_average_pool(FeatureMap(m1)).values
            p2 = global_average_pool(FeatureMap(m2)).values
            combined = global_average_pool(FeatureMap(a * m1 + b * m2)).values
            scale = abs(a) * np.abs(p1) + abs(b) * np.abs(p2) + 1e-30
            assert (np.abs(combined - (a * p1 + b * p2)) / scale).max() <= 1e-12

            c = float(rng.uniform(-1000.0, 1000.0))
            pooled = global_average_pool(FeatureMap(np.full((EMBEDDING_DIM, 7, 7), c))).values
            assert (np.abs(pooled - c) <= 1e-12 * abs(c)).all()
