"""Metadata parsing, per-task labels, view filtering and reproducible splits.

The input is the covid-chestxray-dataset style metadata table: one row per
study with a multi-label ``finding`` column (labels joined by ``/``), an
``intubated`` flag (Y/N/blank) and a radiographic ``view``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Sequence, TextIO, TypeVar

from .rng import fisher_yates, make_rng

REQUIRED_COLUMNS = ("patientid", "view", "finding", "intubated", "filename")

COVID_TOKEN = "COVID-19"

T = TypeVar("T")


class View(Enum):
    AP = "AP"
    PA = "PA"
    OTHER = "OTHER"


class Intubated(Enum):
    YES = "Y"
    NO = "N"
    UNKNOWN = ""


class Task(Enum):
    COVID = "covid"
    INTUBATION = "intubation"


class MetadataError(ValueError):
    """Raised when the metadata table cannot be parsed.

    ``column`` names a missing required column, ``row`` the offending
    1-based data row (header excluded); at most one of the two is set.
    """

    def __init__(self, message: str, *, column: str | None = None, row: int | None = None):
        super().__init__(message)
        self.column = column
        self.row = row


class DatasetManifestError(ValueError):
    """Raised when a dataset manifest JSON document is malformed."""


@dataclass(frozen=True)
class StudyRecord:
    patient_id: str
    view: View
    pathologies: tuple[str, ...]
    intubated: Intubated
    image_filename: str

    def __post_init__(self):
        if not self.pathologies:
            raise ValueError("pathologies must be non-empty")
        if not self.image_filename:
            raise ValueError("image_filename must be non-empty")


@dataclass(frozen=True)
class LabeledExample:
    record: StudyRecord
    label: int
    task: Task

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.task is Task.INTUBATION and self.record.intubated is Intubated.UNKNOWN:
            raise ValueError("intubation example built from a record with unknown status")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _parse_view(raw: str) -> View:
    v = raw.strip().upper()
    if v == "PA":
        return View.PA
    # supine / erect AP variants in the metadata encode AP projections
    if v == "AP" or v.startswith("AP "):
        return View.AP
    return View.OTHER


def _parse_intubated(raw: str, row_index: int) -> Intubated:
    v = raw.strip()
    if v == "":
        return Intubated.UNKNOWN
    if v.upper() == "Y":
        return Intubated.YES
    if v.upper() == "N":
        return Intubated.NO
    raise MetadataError(
        f"row {row_index}: intubated must be 'Y', 'N' or empty, got {raw!r}", row=row_index
    )


def _parse_finding(raw: str, row_index: int) -> tuple[str, ...]:
    tokens: list[str] = []
    for tok in raw.split("/"):
        tok = tok.strip()
        if tok and tok not in tokens:
            tokens.append(tok)
    if not tokens:
        raise MetadataError(f"row {row_index}: empty finding column", row=row_index)
    return tuple(tokens)


def parse_metadata(csv_text: str | Iterable[str]) -> list[StudyRecord]:
    """Parse the metadata CSV into study records.

    Accepts the file content as a string or any iterable of lines. The
    header row is required; unknown columns are ignored. Raises
    :class:`MetadataError` for a missing required column or a malformed row.
    """
    if isinstance(csv_text, str):
        lines: Iterable[str] = io.StringIO(csv_text)
    else:
        lines = csv_text
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise MetadataError("metadata is empty: no header row") from None

    positions = {name.strip().lower(): i for i, name in enumerate(header)}
    for name in REQUIRED_COLUMNS:
        if name not in positions:
            raise MetadataError(f"missing required column {name!r}", column=name)

    records = []
    row_index = 0
    for row in reader:
        if not row:  # blank line
            continue
        row_index += 1
        if len(row) != len(header):
            raise MetadataError(
                f"row {row_index}: expected {len(header)} fields, got {len(row)}",
                row=row_index,
            )
        field = lambda name: row[positions[name]]
        filename = field("filename").strip()
        if not filename:
            raise MetadataError(f"row {row_index}: empty filename", row=row_index)
        records.append(
            StudyRecord(
                patient_id=field("patientid").strip(),
                view=_parse_view(field("view")),
                pathologies=_parse_finding(field("finding"), row_index),
                intubated=_parse_intubated(field("intubated"), row_index),
                image_filename=filename,
            )
        )
    return records


def serialize_metadata(records: Sequence[StudyRecord]) -> str:
    """Render records back to the canonical metadata CSV (parse round-trips)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS)
    for r in records:
        writer.writerow(
            [r.patient_id, r.view.value, "/".join(r.pathologies), r.intubated.value, r.image_filename]
        )
    return out.getvalue()


def derive_labels(records: Sequence[StudyRecord], task: Task) -> list[LabeledExample]:
    """Attach binary labels for ``task``.

    COVID labels every record (1 iff the COVID-19 pathology is present).
    INTUBATION keeps only records with a known status (1 for intubated).
    """
    examples = []
    for r in records:
        if task is Task.COVID:
            examples.append(LabeledExample(r, int(COVID_TOKEN in r.pathologies), task))
        else:
            if r.intubated is Intubated.UNKNOWN:
                continue
            examples.append(LabeledExample(r, int(r.intubated is Intubated.YES), task))
    return examples


def filter_views(records: Sequence[StudyRecord]) -> list[StudyRecord]:
    """Keep AP and PA studies, preserving order."""
    return [r for r in records if r.view in (View.AP, View.PA)]


def _shuffled(items: Sequence[T], spec: SplitSpec) -> list[T]:
    perm = fisher_yates(len(items), make_rng(spec.seed))
    return [items[i] for i in perm]


def split(items: Sequence[T], spec: SplitSpec) -> tuple[list[T], list[T]]:
    """Deterministic train/test split: seeded shuffle, then prefix cut.

    Train gets the first ``floor(train_fraction * n)`` items of the
    shuffled order, test the remainder.
    """
    if not items:
        raise ValueError("cannot split an empty example list")
    shuffled = _shuffled(items, spec)
    n_train = math.floor(spec.train_fraction * len(items))
    return shuffled[:n_train], shuffled[n_train:]


def split_stratified(
    items: Sequence[T], spec: SplitSpec, label_of: Callable[[T], int]
) -> tuple[list[T], list[T]]:
    """Class-proportional variant of :func:`split`.

    After the same seeded shuffle, the first ``floor(train_fraction * n_c)``
    items of every class go to train, so both halves keep the class mix.
    """
    if not items:
        raise ValueError("cannot split an empty example list")
    shuffled = _shuffled(items, spec)
    quota = {
        label: math.floor(spec.train_fraction * sum(1 for it in items if label_of(it) == label))
        for label in {label_of(it) for it in items}
    }
    train, test = [], []
    taken: dict[int, int] = {}
    for it in shuffled:
        label = label_of(it)
        if taken.get(label, 0) < quota[label]:
            taken[label] = taken.get(label, 0) + 1
            train.append(it)
        else:
            test.append(it)
    return train, test


def split_grouped(
    items: Sequence[T], spec: SplitSpec, group_of: Callable[[T], str]
) -> tuple[list[T], list[T]]:
    """Split whole groups (e.g. patients) so no group spans both halves.

    Groups are shuffled in first-appearance order; they fill the train half
    until it holds at least ``floor(train_fraction * n)`` items.
    """
    if not items:
        raise ValueError("cannot split an empty example list")
    groups: list[str] = []
    for it in items:
        g = group_of(it)
        if g not in groups:
            groups.append(g)
    order = fisher_yates(len(groups), make_rng(spec.seed))
    n_train = math.floor(spec.train_fraction * len(items))
    train_groups = set()
    count = 0
    for gi in order:
        if count >= n_train:
            break
        train_groups.add(groups[gi])
        count += sum(1 for it in items if group_of(it) == groups[gi])
    train = [it for it in items if group_of(it) in train_groups]
    test = [it for it in items if group_of(it) not in train_groups]
    return train, test


def records_to_manifest(records: Sequence[StudyRecord]) -> list[dict]:
    return [
        {
            "patient_id": r.patient_id,
            "view": r.view.value,
            "pathologies": list(r.pathologies),
            "intubated": None if r.intubated is Intubated.UNKNOWN else r.intubated.value,
            "image_filename": r.image_filename,
        }
        for r in records
    ]


def write_dataset_manifest(records: Sequence[StudyRecord], sink: TextIO) -> None:
    """Write the canonical dataset manifest JSON (sorted keys, trailing newline)."""
    json.dump(records_to_manifest(records), sink, indent=2, sort_keys=True)
    sink.write("\n")


def read_dataset_manifest(source: TextIO | str) -> list[StudyRecord]:
    """Parse a dataset manifest JSON document back into records."""
    text = source if isinstance(source, str) else source.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetManifestError(f"invalid manifest JSON: {e}") from e
    if not isinstance(data, list):
        raise DatasetManifestError("manifest must be a JSON array of records")
    records = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise DatasetManifestError(f"record {i}: expected an object")
        try:
            view = View(obj["view"])
            raw_intubated = obj["intubated"]
            if raw_intubated not in ("Y", "N", None):
                raise DatasetManifestError(
                    f"record {i}: intubated must be 'Y', 'N' or null, got {raw_intubated!r}"
                )
            records.append(
                StudyRecord(
                    patient_id=obj["patient_id"],
                    view=view,
                    pathologies=tuple(obj["pathologies"]),
                    intubated=Intubated("" if raw_intubated is None else raw_intubated),
                    image_filename=obj["image_filename"],
                )
            )
        except KeyError as e:
            raise DatasetManifestError(f"record {i}: missing field {e.args[0]!r}") from e
        except (TypeError, ValueError) as e:
            raise DatasetManifestError(f"record {i}: {e}") from e
    return records


def with_image_root(record: StudyRecord, images_dir: str) -> StudyRecord:
    """Return a copy whose image_filename is joined under ``images_dir``."""
    import os.path

    return replace(record, image_filename=os.path.join(images_dir, record.image_filename))
