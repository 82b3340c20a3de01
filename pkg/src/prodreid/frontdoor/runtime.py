"""Shared runtime for the CLI and the TCP service.

The Engine owns the live snapshot. Mutations serialize through one lock
and persist before becoming visible; queries bind to whatever snapshot
is current when they arrive, so concurrent readers never block behind a
writer and every read is linearizable with respect to enrolls.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from prodreid import index as index_mod
from prodreid.errors import NoImages
from prodreid.features import ExtractorConfig, FeatureVector, pipeline
from prodreid.index import GallerySnapshot
from prodreid.plane import PlaneTopology, SearchRequest, SearchResponse, plane_search
from prodreid.reid import NoveltyThreshold, ReIDDecision, decide, enroll

# Files without one of these suffixes are ignored when scanning a
# gallery directory, so stray metadata files do not break indexing.
IMAGE_SUFFIXES = frozenset(
    {".png", ".ppm", ".pgm", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}
)


def iter_image_files(root: Path) -> list[tuple[str, Path]]:
    """List (class_label, file) pairs under root, sorted for determinism.

    Layout is <class-label>/<image files>; the label is the immediate
    subdirectory name and nested files keep that top-level label.
    """
    pairs: list[tuple[str, Path]] = []
    root = Path(root)
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(
            p
            for p in class_dir.rglob("*")
            if p.is_file()
            and p.suffix.lower() in IMAGE_SUFFIXES
            and not p.name.startswith(".")
        )
        pairs.extend((class_dir.name, p) for p in files)
    return pairs


def extract_directory(
    root: Path, config: ExtractorConfig | None = None
) -> list[FeatureVector]:
    """Extract one feature vector per image file under root.

    Record ids are the file paths relative to root in posix form, which
    makes repeated builds over the same tree byte-identical.
    """
    config = config or ExtractorConfig()
    root = Path(root)
    pairs = iter_image_files(root)
    if not pairs:
        raise NoImages(f"no image files under {root}")
    vectors: list[FeatureVector] = []
    for label, path in pairs:
        record_id = path.relative_to(root).as_posix()
        vectors.append(pipeline(path, config, id=record_id, label=label))
    return vectors


@dataclass(frozen=True)
class ServiceConfig:
    """Configuration shared by serve and the query-side CLI paths."""

    index_path: Path
    topology: PlaneTopology = field(default_factory=PlaneTopology)
    threshold: NoveltyThreshold | None = None
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    port: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "index_path", Path(self.index_path))
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port must be in [0, 65535], got {self.port}")


class Engine:
    """Thread-safe facade: query against, and enroll into, one index file."""

    def __init__(self, config: ServiceConfig, snapshot: GallerySnapshot | None = None):
        self.config = config
        self._lock = threading.RLock()
        if snapshot is None:
            snapshot = index_mod.load(config.index_path)
        self._snapshot = snapshot
        # Monotonic counter so enroll-generated record ids never collide
        # even when labels repeat across calls.
        self._enroll_serial = 0

    def snapshot(self) -> GallerySnapshot:
        with self._lock:
            return self._snapshot

    def stats(self) -> dict:
        snap = self.snapshot()
        return {
            "records": len(snap.records),
            "classes": len(snap.classes()),
            "dim": snap.dim,
            "version": snap.version,
        }

    def query(
        self,
        values: np.ndarray,
        k: int | None = None,
        tau: float | None = None,
        vote_k: int = 5,
    ) -> tuple[SearchResponse, ReIDDecision]:
        snap = self.snapshot()
        topology = self.config.topology
        request = SearchRequest(values=values, k=k if k is not None else topology.k_default)
        response = plane_search(topology, snap, request)
        if tau is not None:
            threshold = NoveltyThreshold.fixed(float(tau))
        else:
            threshold = self.config.threshold or NoveltyThreshold.closed_set()
        decision = decide(response.hits, threshold, vote_k=vote_k)
        return response, decision

    def enroll(self, label: str, vectors: list[np.ndarray] | list[FeatureVector]) -> dict:
        """Add a new class and persist it before exposing the snapshot."""
        with self._lock:
            prepared: list[FeatureVector] = []
            for i, item in enumerate(vectors):
                if isinstance(item, FeatureVector):
                    prepared.append(item)
                else:
                    serial = self._enroll_serial + i
                    prepared.append(
                        FeatureVector(
                            id=f"{label}/enrolled-{serial:06d}",
                            label=label,
                            values=np.asarray(item, dtype=np.float32),
                        )
                    )
            new_snap = enroll(self._snapshot, prepared, label)
            index_mod.save(new_snap, self.config.index_path)
            self._snapshot = new_snap
            self._enroll_serial += len(prepared)
            return {
                "label": label,
                "added": len(prepared),
                "records": len(new_snap.records),
                "version": new_snap.version,
            }
