"""Confusion-matrix evaluation, stratified splitting, and report artifacts.

The matrix keeps one extra per-row overflow column for open-set runs: a
query the decision layer flags as a new category lands there instead of
being forced onto a known class, so row sums always equal the per-class
query counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ClassTooSmall, EmptyMatrix, IoFailure
from .features import FeatureVector
from .index import GallerySnapshot
from .plane import PlaneTopology, SearchRequest, plane_search
from .reid import KNOWN, NoveltyThreshold, decide

NEW_CATEGORY_COLUMN = "new_category"

_FIXTURE_FILES = {
    "vgg16": "table_vgg16.csv",
    "alexnet": "table_alexnet.csv",
    "alpha_alexnet": "table_alpha_alexnet.csv",
}


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes; columns are predicted classes plus the
    new-category overflow column (last)."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        c = len(self.classes)
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (c, c + 1):
            raise ValueError(f"counts must be ({c}, {c + 1}), got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if len(set(self.classes)) != c:
            raise ValueError("class labels must be unique")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        c = len(self.classes)
        return int(self.counts[np.arange(c), np.arange(c)].sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def at(self, true_label: str, predicted_label: str) -> int:
        i = self.classes.index(true_label)
        j = len(self.classes) if predicted_label == NEW_CATEGORY_COLUMN else self.classes.index(predicted_label)
        return int(self.counts[i, j])

    def mislabels(self) -> list[dict]:
        """Off-diagonal known-to-known confusions, in row-major order."""
        out = []
        c = len(self.classes)
        for i in range(c):
            for j in range(c):
                if i != j and self.counts[i, j] > 0:
                    out.append(
                        {
                            "true": self.classes[i],
                            "predicted": self.classes[j],
                            "count": int(self.counts[i, j]),
                        }
                    )
        return out

    def new_category_counts(self) -> dict[str, int]:
        return {
            cls: int(self.counts[i, -1])
            for i, cls in enumerate(self.classes)
            if self.counts[i, -1] > 0
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.classes, NEW_CATEGORY_COLUMN])
        for i, cls in enumerate(self.classes):
            w.writerow([cls, *(int(x) for x in self.counts[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        """Parse the canonical CSV layout; a missing overflow column (as in
        the closed-set paper transcriptions) is filled with zeros."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if len(rows) < 2:
            raise ValueError("confusion matrix CSV needs a header and at least one row")
        header = rows[0][1:]
        has_overflow = bool(header) and header[-1] == NEW_CATEGORY_COLUMN
        classes = tuple(header[:-1] if has_overflow else header)
        c = len(classes)
        counts = np.zeros((c, c + 1), dtype=np.int64)
        if len(rows) - 1 != c:
            raise ValueError(f"expected {c} data rows, got {len(rows) - 1}")
        for r, row in enumerate(rows[1:]):
            if row[0] != classes[r]:
                raise ValueError(f"row label {row[0]!r} does not match column order")
            vals = [int(x) for x in row[1:]]
            if len(vals) != c + (1 if has_overflow else 0):
                raise ValueError(f"row {row[0]!r} has {len(vals)} cells")
            counts[r, : len(vals)] = vals
        return cls(classes=classes, counts=counts)


def accuracy(m: ConfusionMatrix) -> float:
    """trace / total queries."""
    if m.total < 1:
        raise EmptyMatrix("confusion matrix has no queries")
    return m.trace / m.total


def per_class_recall(m: ConfusionMatrix) -> list[dict]:
    sums = m.row_sums()
    out = []
    for i, cls in enumerate(m.classes):
        support = int(sums[i])
        recall = (int(m.counts[i, i]) / support) if support else None
        out.append({"label": cls, "recall": recall, "support": support})
    return out


def evaluate(
    gallery: GallerySnapshot,
    queries,
    topology: PlaneTopology,
    tau: NoveltyThreshold,
    vote_k: int = 5,
) -> ConfusionMatrix:
    """Decide every query against the gallery and accumulate the matrix.

    Class order is the sorted union of gallery classes and query labels, so
    true classes absent from the gallery (novel queries) still get rows.
    """
    queries = list(queries)
    for q in queries:
        if not q.label:
            raise ValueError(f"query {q.id!r} carries no true label")
    classes = tuple(sorted(set(gallery.classes()) | {q.label for q in queries}))
    idx = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes) + 1), dtype=np.int64)
    k = max(vote_k, 1)
    for q in queries:
        response = plane_search(topology, gallery, SearchRequest(values=q.values, k=k))
        decision = decide(response.hits, tau, vote_k)
        col = idx[decision.class_label] if decision.verdict == KNOWN else len(classes)
        counts[idx[q.label], col] += 1
    return ConfusionMatrix(classes=classes, counts=counts)


def split(labeled_items, train_fraction: float, seed: int):
    """Per-class stratified split into (gallery, queries).

    Takes (label, item) pairs. Each class keeps ceil(fraction * n) items in
    the gallery, capped at n - 1 so at least one query remains; classes with
    fewer than two items cannot satisfy that and raise ClassTooSmall.
    Deterministic for a given input order and seed.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label: dict[str, list] = {}
    for label, item in labeled_items:
        by_label.setdefault(label, []).append(item)
    rng = random.Random(seed)
    gallery, queries = [], []
    for label in sorted(by_label):
        items = by_label[label]
        n = len(items)
        if n < 2:
            raise ClassTooSmall(f"class {label!r} has {n} item(s); need at least 2")
        take = min(math.ceil(train_fraction * n), n - 1)
        order = list(range(n))
        rng.shuffle(order)
        gallery.extend((label, items[i]) for i in order[:take])
        queries.extend((label, items[i]) for i in order[take:])
    return gallery, queries


def load_table_fixture(name: str) -> ConfusionMatrix:
    """Load one of the shipped identification-grid fixtures:
    'vgg16', 'alexnet', or 'alpha_alexnet'."""
    try:
        fname = _FIXTURE_FILES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(_FIXTURE_FILES)}") from None
    text = resources.files("prodreid").joinpath("fixtures", fname).read_text(encoding="utf-8")
    return ConfusionMatrix.from_csv(text)


def build_report(m: ConfusionMatrix, timings_us: dict | None = None) -> dict:
    return {
        "accuracy": accuracy(m),
        "per_class": per_class_recall(m),
        "mislabels": m.mislabels(),
        "timings_us": dict(timings_us or {}),
    }


def report(
    m: ConfusionMatrix,
    timings_us: dict | None = None,
    csv_path=None,
    json_path=None,
) -> dict:
    """Build the report dict and optionally write the CSV matrix and JSON."""
    payload = build_report(m, timings_us)
    try:
        if csv_path is not None:
            Path(csv_path).write_text(m.to_csv(), encoding="utf-8")
        if json_path is not None:
            Path(json_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(str(e)) from e
    return payload
