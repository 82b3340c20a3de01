"""Three-tier query path: blender fans out to brokers, brokers drive searchers.

The tiers are in-process roles. Each searcher owns one partition and scans it
with knn_scan; brokers merge their searchers' partial top-k lists as a batch
once all have completed, and the blender ranks the broker results. Results
are a pure function of (snapshot, request, topology): partitioning and tier
structure never change what comes back, only how the work is spread.
"""

from __future__ import annotations

import heapq
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice

import numpy as np

from .errors import DimensionMismatch, UnsortedInput
from .index import GallerySnapshot, IndexPartition, SearchHit, as_query, knn_scan


@dataclass(frozen=True)
class PlaneTopology:
    """Shape of the search plane: brokers x searchers-per-broker."""

    brokers: int = 1
    searchers_per_broker: int = 1
    k_default: int = 10

    def __post_init__(self):
        if self.brokers < 1 or self.searchers_per_broker < 1:
            raise ValueError("topology needs at least one broker and one searcher")
        if self.k_default < 1:
            raise ValueError("k_default must be >= 1")

    @property
    def total_searchers(self) -> int:
        return self.brokers * self.searchers_per_broker


@dataclass(frozen=True)
class SearchRequest:
    values: np.ndarray
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "values", as_query(self.values))


@dataclass(frozen=True)
class SearchResponse:
    """Ascending hits plus per-tier wall-clock timings in microseconds."""

    hits: tuple[SearchHit, ...]
    timings_us: dict
    empty_gallery: bool = False

    def as_dict(self) -> dict:
        return {
            "hits": [h.as_dict() for h in self.hits],
            "timings_us": dict(self.timings_us),
            "empty_gallery": self.empty_gallery,
        }


def _is_sorted(hits) -> bool:
    return all(hits[i].key() <= hits[i + 1].key() for i in range(len(hits) - 1))


def merge_topk(lists, k: int, verify: bool = __debug__) -> list[SearchHit]:
    """Merge ascending hit lists into the k globally smallest by (distance, id).

    Associative and commutative over input lists, so brokers and the blender
    can apply it at any tier. With ``verify`` (on unless running under -O),
    unsorted inputs raise instead of silently corrupting the ranking.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    lists = list(lists)
    if verify:
        for i, l in enumerate(lists):
            if not _is_sorted(l):
                raise UnsortedInput(f"input list {i} is not ascending by (distance, id)")
    return list(islice(heapq.merge(*lists, key=SearchHit.key), k))


def _timed_scan(part: IndexPartition, q: np.ndarray, k: int) -> tuple[list[SearchHit], int]:
    t0 = time.perf_counter()
    hits = knn_scan(part, q, k)
    return hits, int((time.perf_counter() - t0) * 1e6)


def plane_search(
    topology: PlaneTopology, snapshot: GallerySnapshot, request: SearchRequest
) -> SearchResponse:
    """Run one query through the full blender/broker/searcher plane.

    Searchers within a broker execute concurrently over immutable partition
    views; partial results are merged in fixed partition order, so the
    response is independent of thread completion order. An empty gallery is
    the valid cold-start state and yields zero hits with a flag, not an error.
    """
    t_start = time.perf_counter()
    q = request.values
    if len(snapshot) == 0:
        return SearchResponse(
            hits=(),
            timings_us={"searcher_us": 0, "broker_us": 0, "blender_us": 0, "total_us": 0},
            empty_gallery=True,
        )
    if q.size != snapshot.dim:
        raise DimensionMismatch(f"query dim {q.size} != gallery dim {snapshot.dim}")
    parts = snapshot.partition(topology.total_searchers)
    k = request.k

    searcher_us = 0
    broker_us = 0
    broker_lists: list[list[SearchHit]] = []
    per_broker = topology.searchers_per_broker
    for b in range(topology.brokers):
        owned = parts[b * per_broker : (b + 1) * per_broker]
        if per_broker == 1:
            scans = [_timed_scan(owned[0], q, k)]
        else:
            with ThreadPoolExecutor(max_workers=per_broker) as pool:
                scans = list(pool.map(lambda p: _timed_scan(p, q, k), owned))
        searcher_us = max(searcher_us, max(us for _, us in scans))
        t0 = time.perf_counter()
        broker_lists.append(merge_topk([hits for hits, _ in scans], k, verify=False))
        broker_us += int((time.perf_counter() - t0) * 1e6)

    t0 = time.perf_counter()
    ranked = merge_topk(broker_lists, k, verify=False)
    blender_us = int((time.perf_counter() - t0) * 1e6)

    return SearchResponse(
        hits=tuple(ranked),
        timings_us={
            "searcher_us": searcher_us,
            "broker_us": broker_us,
            "blender_us": blender_us,
            "total_us": int((time.perf_counter() - t_start) * 1e6),
        },
    )
