"""Open-set re-identification decisions, threshold calibration, enrollment.

The cold-start loop: search the gallery, decide Known-vs-NewCategory against
a squared-distance threshold, and enroll new categories so the immediately
following query sees them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import ClassExists, InsufficientData, UnsortedHits
from .features import ExtractorConfig, FeatureVector, pipeline
from .index import GallerySnapshot, SearchHit, squared_distances

KNOWN = "Known"
NEW_CATEGORY = "NewCategory"


@dataclass(frozen=True)
class NoveltyThreshold:
    """Squared-distance cutoff above which the nearest hit is a new category.

    ``calibration`` records how the value was obtained, because the cutoff is
    an artifact of the gallery, not something the decision rule can derive.
    """

    tau: float
    calibration: dict

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and non-negative, got {self.tau}")

    @classmethod
    def fixed(cls, tau: float) -> "NoveltyThreshold":
        return cls(tau=float(tau), calibration={"method": "fixed"})

    @classmethod
    def closed_set(cls) -> "NoveltyThreshold":
        """Largest-float32 cutoff. Distances are float32-rounded, so no finite
        hit can exceed it and decide() degenerates to closed-set voting."""
        return cls(tau=float(np.finfo(np.float32).max), calibration={"method": "closed_set"})


@dataclass(frozen=True)
class ReIDDecision:
    verdict: str
    class_label: str | None
    confidence: float
    nearest_distance: float

    def __post_init__(self):
        if self.verdict == KNOWN and not self.class_label:
            raise ValueError("a Known verdict requires a class label")
        if self.verdict == NEW_CATEGORY and self.class_label is not None:
            raise ValueError("a NewCategory verdict carries no class label")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "class": self.class_label,
            "confidence": self.confidence,
            # The empty-gallery sentinel is +inf, which JSON cannot carry.
            "nearest_distance": None if math.isinf(self.nearest_distance) else self.nearest_distance,
        }


def decide(hits: Sequence[SearchHit], tau: NoveltyThreshold, vote_k: int = 5) -> ReIDDecision:
    """Map ranked hits to Known(class) or NewCategory.

    No hits at all (empty gallery) or a nearest distance beyond tau means
    NewCategory. Otherwise the class is the majority label among the first
    min(vote_k, len(hits)) hits within tau; when the vote ties, the tied
    label whose first hit is nearest wins. Confidence is the winning share
    of the eligible hits.
    """
    if vote_k < 1:
        raise ValueError(f"vote_k must be >= 1, got {vote_k}")
    for i in range(len(hits) - 1):
        if hits[i].key() > hits[i + 1].key():
            raise UnsortedHits(f"hits out of order at position {i}")
    if not hits:
        return ReIDDecision(NEW_CATEGORY, None, 1.0, math.inf)
    nearest = hits[0].distance
    if nearest > tau.tau:
        return ReIDDecision(NEW_CATEGORY, None, 1.0, nearest)
    eligible = [h for h in hits[: min(vote_k, len(hits))] if h.distance <= tau.tau]
    votes = Counter(h.label for h in eligible)
    top = max(votes.values())
    first_seen = {}
    for i, h in enumerate(eligible):
        first_seen.setdefault(h.label, i)
    winner = min((lbl for lbl, n in votes.items() if n == top), key=first_seen.__getitem__)
    return ReIDDecision(KNOWN, winner, votes[winner] / len(eligible), nearest)


def same_class_nn_distances(snap: GallerySnapshot) -> np.ndarray:
    """Leave-one-out nearest same-class neighbor distance for every record
    whose class has at least two members. Unlabeled records are skipped."""
    by_label: dict[str, list[int]] = {}
    for i, r in enumerate(snap.records):
        if r.label:
            by_label.setdefault(r.label, []).append(i)
    out = []
    for label in sorted(by_label):
        rows = by_label[label]
        if len(rows) < 2:
            continue
        m = snap.matrix[rows]
        for i in range(len(rows)):
            d = squared_distances(m, m[i])
            d[i] = np.inf
            out.append(float(d.min()))
    return np.asarray(out, dtype=np.float64)


def calibrate_threshold(
    snap: GallerySnapshot, percentile: float = 95.0, margin: float = 0.1
) -> NoveltyThreshold:
    """tau = (percentile of leave-one-out same-class NN distances) * (1 + margin).

    Deterministic given the gallery; linear-interpolation percentile.
    """
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    dists = same_class_nn_distances(snap)
    if dists.size == 0:
        raise InsufficientData("calibration needs at least one class with two or more records")
    tau = float(np.percentile(dists, percentile, method="linear")) * (1.0 + margin)
    return NoveltyThreshold(
        tau=tau,
        calibration={
            "method": "same_class_nn_percentile",
            "percentile": percentile,
            "margin": margin,
            "samples": int(dists.size),
        },
    )


def enroll(snap: GallerySnapshot, vectors: Sequence[FeatureVector], class_label: str) -> GallerySnapshot:
    """Add all vectors under a brand-new class label, in one version step per
    vector; the final snapshot answers an identical query with Known(label)."""
    if not class_label:
        raise ValueError("class label must be nonempty")
    if class_label in snap.classes():
        raise ClassExists(class_label)
    return snap.add_all(v.with_identity(label=class_label) for v in vectors)


def enroll_images(
    snap: GallerySnapshot,
    paths: Sequence,
    class_label: str,
    cfg: ExtractorConfig,
    id_prefix: str = "",
) -> GallerySnapshot:
    """Extract features from image files and enroll them as a new class."""
    vectors = [
        pipeline(p, cfg, id=f"{id_prefix}{class_label}/{i:04d}", label=class_label)
        for i, p in enumerate(paths)
    ]
    return enroll(snap, vectors, class_label)


@runtime_checkable
class PairwiseVerifier(Protocol):
    """Hook for a final pairwise accept/reject stage after retrieval.

    Implementations score (query, candidate) vector pairs with an acceptance
    probability in [0, 1]. The learned verifier this slot was reserved for is
    not part of the artifact; the default accepts everything.
    """

    def verify(self, query: np.ndarray, candidate: np.ndarray) -> float: ...


class PassThroughVerifier:
    """Accepts every candidate; keeps the decision purely distance-based."""

    def verify(self, query: np.ndarray, candidate: np.ndarray) -> float:
        return 1.0


def apply_verifier(
    hits: Sequence[SearchHit],
    query,
    snap: GallerySnapshot,
    verifier: PairwiseVerifier,
    accept_threshold: float = 0.5,
) -> list[SearchHit]:
    """Filter hits through a pairwise verifier, preserving order."""
    q = np.asarray(query, dtype=np.float32)
    return [h for h in hits if verifier.verify(q, snap.get(h.id).values) >= accept_threshold]
