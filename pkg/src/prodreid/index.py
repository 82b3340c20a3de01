"""Partitioned flat vector store with exact k-NN scan and PRID persistence.

Snapshots are immutable: every mutation returns a new snapshot with the
version bumped, so concurrent readers keep a stable view while writers
publish updates that are immediately visible to subsequent searches.

Distances are squared Euclidean, accumulated in float64 and rounded to
float32. On unit vectors this is monotone-equivalent to cosine distance.
"""

from __future__ import annotations

import heapq
import math
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CorruptData,
    DimensionMismatch,
    DuplicateId,
    IoFailure,
    TruncatedFile,
    UnknownId,
    VersionUnsupported,
)
from .features import FeatureVector

PRID_MAGIC = b"PRID"
PRID_VERSION = 1
_HEADER = struct.Struct("<II Q")  # format version, dim, record count
_U16 = struct.Struct("<H")

# Scan granularity for the chunk-minimum early rejection in knn_scan.
_SCAN_CHUNK = 4096


@dataclass(frozen=True)
class SearchHit:
    """One ranked neighbor: record id, class label, squared distance."""

    id: str
    label: str
    distance: float

    def key(self) -> tuple[float, str]:
        return (self.distance, self.id)

    def as_dict(self) -> dict:
        return {"id": self.id, "label": self.label, "distance": self.distance}


def as_query(values) -> np.ndarray:
    q = np.ascontiguousarray(values, dtype=np.float32)
    if q.ndim != 1:
        raise DimensionMismatch(f"query must be a 1-D vector, got shape {q.shape}")
    return q


def squared_distances(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from q to every row, float32-rounded."""
    diff = matrix.astype(np.float64) - q.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff).astype(np.float32)


def pair_distance(a, b) -> float:
    a64 = np.asarray(a, dtype=np.float32).astype(np.float64)
    b64 = np.asarray(b, dtype=np.float32).astype(np.float64)
    d = a64 - b64
    return float(np.float32(np.einsum("i,i->", d, d)))


@dataclass(frozen=True)
class GallerySnapshot:
    """Immutable, versioned collection of feature vectors with unique ids."""

    records: tuple[FeatureVector, ...] = ()
    dim: int = 0
    version: int = 0

    def __post_init__(self):
        if self.records and self.dim == 0:
            object.__setattr__(self, "dim", self.records[0].dim)

    @classmethod
    def empty(cls) -> "GallerySnapshot":
        return cls()

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.records)

    @cached_property
    def _index_of(self) -> dict[str, int]:
        return {r.id: i for i, r in enumerate(self.records)}

    @cached_property
    def matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.dim), dtype=np.float32)
        m = np.stack([r.values for r in self.records])
        m.setflags(write=False)
        return m

    def classes(self) -> tuple[str, ...]:
        return tuple(sorted({r.label for r in self.records if r.label}))

    def get(self, id: str) -> FeatureVector:
        try:
            return self.records[self._index_of[id]]
        except KeyError:
            raise UnknownId(id) from None

    def __contains__(self, id: str) -> bool:
        return id in self._index_of

    def _check_dim(self, v: FeatureVector) -> None:
        if self.records and v.dim != self.dim:
            raise DimensionMismatch(f"record {v.id!r} has dim {v.dim}, snapshot has dim {self.dim}")

    def add(self, v: FeatureVector) -> "GallerySnapshot":
        """New snapshot containing v; an empty snapshot takes its dim from v."""
        if not v.id:
            raise ValueError("record id must be nonempty")
        if v.id in self._index_of:
            raise DuplicateId(v.id)
        self._check_dim(v)
        return GallerySnapshot(self.records + (v,), v.dim, self.version + 1)

    def remove(self, id: str) -> "GallerySnapshot":
        i = self._index_of.get(id)
        if i is None:
            raise UnknownId(id)
        records = self.records[:i] + self.records[i + 1 :]
        return GallerySnapshot(records, self.dim if records else 0, self.version + 1)

    def update(self, v: FeatureVector) -> "GallerySnapshot":
        i = self._index_of.get(v.id)
        if i is None:
            raise UnknownId(v.id)
        self._check_dim(v)
        records = self.records[:i] + (v,) + self.records[i + 1 :]
        return GallerySnapshot(records, self.dim, self.version + 1)

    def add_all(self, vectors) -> "GallerySnapshot":
        snap = self
        for v in vectors:
            snap = snap.add(v)
        return snap

    def partition(self, n: int) -> list["IndexPartition"]:
        """Split into n contiguous partitions of size ceil(N/n); trailing ones
        may be short or empty. The union is always exactly the record set."""
        if n < 1:
            raise ValueError(f"partition count must be >= 1, got {n}")
        total = len(self.records)
        chunk = math.ceil(total / n) if total else 0
        parts = []
        for i in range(n):
            lo = min(i * chunk, total)
            hi = min(lo + chunk, total)
            parts.append(IndexPartition(partition_id=i, snapshot=self, lo=lo, hi=hi))
        return parts


@dataclass(frozen=True)
class IndexPartition:
    """Contiguous slice of a snapshot's records, owned by one searcher."""

    partition_id: int
    snapshot: GallerySnapshot
    lo: int
    hi: int

    def __len__(self) -> int:
        return self.hi - self.lo

    @property
    def records(self) -> tuple[FeatureVector, ...]:
        return self.snapshot.records[self.lo : self.hi]

    @property
    def dim(self) -> int:
        return self.snapshot.dim

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.snapshot.matrix[self.lo : self.hi]

    @property
    def ids(self) -> tuple[str, ...]:
        return self.snapshot.ids[self.lo : self.hi]

    @property
    def labels(self) -> tuple[str, ...]:
        return self.snapshot.labels[self.lo : self.hi]


class _RevStr:
    """Inverts string ordering so heapq's min-heap acts as a max-heap on ids."""

    __slots__ = ("s",)

    def __init__(self, s: str):
        self.s = s

    def __lt__(self, other: "_RevStr") -> bool:
        return self.s > other.s


def knn_scan(part: IndexPartition, q, k: int) -> list[SearchHit]:
    """The k nearest records of one partition, ascending by (distance, id).

    Single pass with a bounded max-heap of size k: the heap root is the worst
    hit kept so far, and a candidate only displaces it when strictly closer or
    equally close with a smaller id. Whole chunks are skipped when their
    minimum distance exceeds the current worst; the comparison is strict so
    distance ties still reach the id tie-break.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    qv = as_query(q)
    n = len(part)
    if n == 0:
        return []
    if qv.size != part.dim:
        raise DimensionMismatch(f"query dim {qv.size} != partition dim {part.dim}")
    dists = squared_distances(part.matrix, qv)
    ids = part.ids
    heap: list[tuple[float, _RevStr, int]] = []  # (-distance, reversed id, row)
    worst_d = math.inf
    for s in range(0, n, _SCAN_CHUNK):
        e = min(s + _SCAN_CHUNK, n)
        if len(heap) == k and float(dists[s:e].min()) > worst_d:
            continue
        for j, d in enumerate(dists[s:e].tolist()):
            row = s + j
            if len(heap) < k:
                heapq.heappush(heap, (-d, _RevStr(ids[row]), row))
                if len(heap) == k:
                    worst_d = -heap[0][0]
            else:
                if d > worst_d or (d == worst_d and ids[row] >= heap[0][1].s):
                    continue
                heapq.heapreplace(heap, (-d, _RevStr(ids[row]), row))
                worst_d = -heap[0][0]
    labels = part.labels
    kept = sorted((-nd, rid.s, row) for nd, rid, row in heap)
    return [SearchHit(id=i, label=labels[row], distance=d) for d, i, row in kept]


def save(snap: GallerySnapshot, path) -> None:
    """Write a snapshot in PRID format, atomically (tmp file + rename).

    The version counter is runtime state and is not persisted, so rebuilding
    from identical records yields byte-identical files.
    """
    buf = bytearray()
    buf += PRID_MAGIC
    buf += _HEADER.pack(PRID_VERSION, snap.dim, len(snap.records))
    for r in snap.records:
        id_b = r.id.encode("utf-8")
        label_b = r.label.encode("utf-8")
        if len(id_b) > 0xFFFF or len(label_b) > 0xFFFF:
            raise IoFailure(f"id/label longer than 65535 bytes for record {r.id!r}")
        buf += _U16.pack(len(id_b))
        buf += id_b
        buf += _U16.pack(len(label_b))
        buf += label_b
        buf += r.values.astype("<f4").tobytes()
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    try:
        tmp.write_bytes(bytes(buf))
        os.replace(tmp, target)
    except OSError as e:
        raise IoFailure(f"cannot write {target}: {e}") from e


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.name = name
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedFile(f"{self.name}: ran out of bytes reading {what}")
        out = self.data[self.pos : end]
        self.pos = end
        return out


def load(path) -> GallerySnapshot:
    """Read a PRID file back into a snapshot; version resets to 0."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {p}: {e}") from e
    r = _Reader(data, str(p))
    magic = r.take(len(PRID_MAGIC), "magic")
    if magic != PRID_MAGIC:
        raise BadMagic(f"{p}: expected {PRID_MAGIC!r}, got {magic!r}")
    version, dim, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if version != PRID_VERSION:
        raise VersionUnsupported(f"{p}: format version {version}, supported: {PRID_VERSION}")
    vec_size = dim * 4
    records = []
    seen = set()
    for i in range(count):
        (id_len,) = _U16.unpack(r.take(_U16.size, f"record {i} id length"))
        id_ = r.take(id_len, f"record {i} id").decode("utf-8")
        (label_len,) = _U16.unpack(r.take(_U16.size, f"record {i} label length"))
        label = r.take(label_len, f"record {i} label").decode("utf-8")
        values = np.frombuffer(r.take(vec_size, f"record {i} values"), dtype="<f4").copy()
        if id_ in seen:
            raise DuplicateId(f"{p}: record id {id_!r} appears twice")
        seen.add(id_)
        try:
            records.append(FeatureVector(id=id_, label=label, values=values))
        except ValueError as e:
            raise CorruptData(f"{p}: record {id_!r}: {e}") from e
    if r.pos != len(data):
        raise TruncatedFile(f"{p}: {len(data) - r.pos} trailing bytes after the last record")
    return GallerySnapshot(tuple(records), dim, version=0)
