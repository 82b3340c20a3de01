"""Shared fixtures and independent oracles.

The oracles recompute results through deliberately different routes than
the package (plain sum reduction instead of einsum, full sorts instead
of bounded heaps) so agreement is evidence, not tautology.
"""

from __future__ import annotations

import struct

import numpy as np
import pytest

from prodreid.features import FeatureVector
from prodreid.imaging import ImageRGB
from prodreid.index import GallerySnapshot, SearchHit


def oracle_squared_distances(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise squared Euclidean distance, float64 accumulate via a plain
    elementwise product and sum (not einsum), rounded to float32."""
    diff = matrix.astype(np.float64) - q.astype(np.float64)
    return (diff * diff).sum(axis=1).astype(np.float32)


def oracle_topk(
    ids: tuple[str, ...], labels: tuple[str, ...], matrix: np.ndarray, q, k: int
) -> list[SearchHit]:
    """Concat-and-full-sort brute force: every record ranked, then truncated."""
    q = np.asarray(q, dtype=np.float32)
    dists = oracle_squared_distances(matrix, q).tolist()
    order = sorted(range(len(ids)), key=lambda i: (dists[i], ids[i]))
    return [SearchHit(id=ids[i], label=labels[i], distance=dists[i]) for i in order[:k]]


def serialize_hits(hits) -> bytes:
    """Canonical byte form of a hit list for byte-for-byte comparisons."""
    out = bytearray()
    for h in hits:
        out += struct.pack("<f", h.distance)
        out += h.id.encode("utf-8") + b"\x00"
        out += h.label.encode("utf-8") + b"\x00"
    return bytes(out)


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n random float32 rows of unit L2 norm."""
    m = rng.standard_normal((n, dim)).astype(np.float32)
    norms = np.linalg.norm(m.astype(np.float64), axis=1)
    norms[norms == 0] = 1.0
    return (m / norms[:, None]).astype(np.float32)


def make_snapshot(matrix: np.ndarray, ids=None, labels=None) -> GallerySnapshot:
    n = len(matrix)
    ids = ids if ids is not None else [f"rec-{i:05d}" for i in range(n)]
    labels = labels if labels is not None else [f"class-{i % 5}" for i in range(n)]
    records = tuple(
        FeatureVector(id=ids[i], label=labels[i], values=np.asarray(matrix[i], dtype=np.float32))
        for i in range(n)
    )
    return GallerySnapshot(records)


def random_image(rng: np.random.Generator, height: int, width: int) -> ImageRGB:
    return ImageRGB(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260815)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of every run."""
    lines = []
    for status in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                lines.append(f"{nodeid.split('::')[-1]}: {status.upper()}")
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in sorted(lines):
            terminalreporter.write_line("  " + line)
