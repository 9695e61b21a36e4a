"""Evaluation artifacts: confusion tables, an SVG ROC drawing, and run manifests.

Every artifact is a deterministic byte stream for a given input, so report
directories can be diffed across runs and machines. The one wall-clock value
(when the run happened) is confined to a single manifest key that byte-level
comparisons are expected to skip.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from pathlib import Path

from .metrics import ConfidenceInterval, ConfusionMatrix, MetricSet, RocCurve, roc_to_csv, zero_denominator_flags

REPORT_FILES = (
    "confusion_matrix.csv",
    "confusion_matrix.txt",
    "roc.csv",
    "roc.svg",
    "metrics.json",
    "manifest.json",
)

# The manifest key holding run wall-clock time. Determinism comparisons
# between reruns must ignore exactly this key and nothing else.
CREATED_AT_KEY = "created_at"

_HEX = set(string.hexdigits.lower())

_SVG_MARGIN = 48
_SVG_PLOT = 400


class ManifestError(ValueError):
    """Run manifest is structurally invalid."""


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to trace and rerun one evaluation.

    ``digests`` maps input names to sha256 hex strings; the embeddings file
    digest is mandatory because every evaluation consumes one. ``task`` and
    ``extractor_mode`` may be None when the run was given only an embeddings
    file, which carries neither.
    """

    task: str | None
    split: dict
    k: int
    extractor_mode: str | None
    digests: dict
    metrics: dict
    tool_version: str
    created_at: str

    def __post_init__(self):
        if "embeddings" not in self.digests:
            raise ManifestError("manifest must carry the embeddings file digest")
        for name, digest in self.digests.items():
            if not (isinstance(digest, str) and len(digest) == 64 and set(digest) <= _HEX):
                raise ManifestError(f"digest for {name!r} is not a sha256 hex string")
        for key in ("train_fraction", "seed", "n_train", "n_test"):
            if key not in self.split:
                raise ManifestError(f"split spec lacks {key!r}")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "split": dict(self.split),
            "k": self.k,
            "extractor_mode": self.extractor_mode,
            "ci_method": "percentile",
            "digests": dict(self.digests),
            "metrics": dict(self.metrics),
            "tool_version": self.tool_version,
            CREATED_AT_KEY: self.created_at,
        }


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_metrics_dict(
    task: str | None,
    k: int,
    n_train: int,
    n_test: int,
    cm: ConfusionMatrix,
    ms: MetricSet,
    auc_value: float,
    ci: ConfidenceInterval,
) -> dict:
    """The metrics.json payload, flat and fully self-describing."""
    return {
        "task": task,
        "k": k,
        "n_train": n_train,
        "n_test": n_test,
        "tp": cm.tp,
        "fp": cm.fp,
        "tn": cm.tn,
        "fn": cm.fn,
        "precision": ms.precision,
        "recall": ms.recall,
        "f1": ms.f1,
        "accuracy": ms.accuracy,
        "auc": auc_value,
        "ci_low": ci.low,
        "ci_high": ci.high,
        "ci_level": ci.level,
        "n_resamples": ci.n_resamples,
        "seed": ci.seed,
        "flags": zero_denominator_flags(cm),
    }


def confusion_csv(cm: ConfusionMatrix) -> str:
    """2x2 table, predictions across, truth down."""
    return (
        ",pred_0,pred_1\n"
        f"true_0,{cm.tn},{cm.fp}\n"
        f"true_1,{cm.fn},{cm.tp}\n"
    )


def confusion_text(cm: ConfusionMatrix) -> str:
    """The same table column-aligned for terminals and plain-text logs."""
    rows = [
        ("", "pred_0", "pred_1"),
        ("true_0", str(cm.tn), str(cm.fp)),
        ("true_1", str(cm.fn), str(cm.tp)),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "".join(
        "  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() + "\n"
        for row in rows
    )


def render_roc(curve: RocCurve, auc_value: float, ci: ConfidenceInterval) -> str:
    """Standalone SVG: unit-square frame, chance diagonal, ROC polyline, caption.

    Hand-emitted markup (rect, line, polyline, text) so the byte stream is
    stable and reviewable in a diff.
    """
    m, s = _SVG_MARGIN, _SVG_PLOT
    px = lambda x: m + x * s
    py = lambda y: m + s - y * s
    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in curve.points)
    caption = (
        f"AUC={auc_value:.3f} ({ci.level * 100:.0f}% CI {ci.low:.3f}, {ci.high:.3f})"
    )
    w = s + 2 * m
    h = s + 2 * m + 32
    font = 'font-family="sans-serif" font-size="14"'
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'  <rect x="{m}" y="{m}" width="{s}" height="{s}" fill="none" stroke="black"/>',
        f'  <line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(1):.2f}" y2="{py(1):.2f}"'
        ' stroke="gray" stroke-dasharray="4 4"/>',
        f'  <polyline points="{pts}" fill="none" stroke="black" stroke-width="2"/>',
        f'  <text x="{m + s / 2:.2f}" y="{m + s + 30:.2f}" text-anchor="middle" {font}>FPR</text>',
        f'  <text x="14" y="{m + s / 2:.2f}" text-anchor="middle" {font}'
        f' transform="rotate(-90 14 {m + s / 2:.2f})">TPR</text>',
        f'  <text x="{w / 2:.2f}" y="{h - 10:.2f}" text-anchor="middle" {font}>{caption}</text>',
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def manifest_json(manifest: RunManifest) -> str:
    return json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"


def write_report(
    report_dir,
    cm: ConfusionMatrix,
    curve: RocCurve,
    auc_value: float,
    ci: ConfidenceInterval,
    manifest: RunManifest,
) -> list[Path]:
    """Write all six artifacts into ``report_dir`` (created if needed)."""
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    content = {
        "confusion_matrix.csv": confusion_csv(cm),
        "confusion_matrix.txt": confusion_text(cm),
        "roc.csv": roc_to_csv(curve),
        "roc.svg": render_roc(curve, auc_value, ci),
        "metrics.json": json.dumps(manifest.metrics, indent=2, sort_keys=True) + "\n",
        "manifest.json": manifest_json(manifest),
    }
    paths = []
    for name in REPORT_FILES:
        path = out / name
        path.write_text(content[name], encoding="utf-8", newline="\n")
        paths.append(path)
    return paths
