"""Central labels, dual means, and the generalized laws of total
expectation and variance.

All expectations here are weighted finite sums over a :class:`PredictionSet`
(an empirical law); nothing in this module samples.  That makes every
identity exactly checkable:

* central label:      argmin_z  E D[Y || z]  =  E Y
* dual mean:          argmin_z  E D[z || X]  =  (E X*)*         (written EX)
* model variance:     V X  =  E D[EX || X]
* total expectation:  EX  =  E_Z[ E(X|Z) ]   with E(X|Z) = (E_{X|Z} X*)*
* total variance:     V X  =  E_Z V[X|Z]  +  V[ E(X|Z) ]

Conditioning variables Z are carried as per-point group tags.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .bregman import ConvexGenerator, SimplexPoint, divergence_matrix, floor_probs
from .errors import UsageError


@dataclass(frozen=True)
class PointTag:
    """Provenance of one predictor output; ``group`` is the conditioning key."""

    seed: int | None = None
    train_id: str | None = None
    group: Hashable | None = None


_NO_TAG = PointTag()


@dataclass(frozen=True)
class PredictionSet:
    """A weighted empirical distribution of predictor outputs.

    ``points`` is an (n, d) array, one row per output; ``weights`` are
    non-negative and sum to one (uniform by default).  Rows are validated
    against a generator's domain by the operations that consume them, not
    here, since the set itself is generator-agnostic.
    """

    points: np.ndarray
    weights: np.ndarray
    tags: tuple[PointTag, ...] = field(default=())

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[0] == 0:
            raise UsageError("PredictionSet must be non-empty")
        if self.weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        else:
            weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (points.shape[0],):
            raise UsageError(
                f"weights shape {weights.shape} does not match {points.shape[0]} points"
            )
        if np.any(weights < 0):
            raise UsageError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise UsageError(f"weights sum to {weights.sum()!r}, expected 1")
        tags = self.tags or tuple(_NO_TAG for _ in range(points.shape[0]))
        if len(tags) != points.shape[0]:
            raise UsageError(f"{len(tags)} tags for {points.shape[0]} points")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "tags", tuple(tags))

    @classmethod
    def uniform(cls, points, tags: tuple[PointTag, ...] = ()) -> "PredictionSet":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]), tags)

    @classmethod
    def from_probs(cls, rows, weights=None, tags: tuple[PointTag, ...] = ()) -> "PredictionSet":
        """Build a set of simplex points, flooring each row first."""
        rows = floor_probs(np.atleast_2d(np.asarray(rows, dtype=float)))
        if weights is None:
            weights = np.full(rows.shape[0], 1.0 / rows.shape[0])
        return cls(rows, weights, tags)

    @classmethod
    def from_simplex_points(cls, pts: list[SimplexPoint], weights=None,
                            tags: tuple[PointTag, ...] = ()) -> "PredictionSet":
        rows = np.stack([p.probs for p in pts])
        if weights is None:
            weights = np.full(rows.shape[0], 1.0 / rows.shape[0])
        return cls(rows, weights, tags)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def group_keys(self) -> list[Hashable]:
        """Distinct group tags in sorted order; raises if any point is untagged."""
        keys = set()
        for tag in self.tags:
            if tag.group is None:
                raise UsageError("every point needs a group tag for conditioning")
            keys.add(tag.group)
        return sorted(keys, key=repr)

    def restrict_to_group(self, key: Hashable) -> "PredictionSet":
        """The conditional law X | Z = key, with weights renormalized."""
        idx = [i for i, tag in enumerate(self.tags) if tag.group == key]
        if not idx:
            raise UsageError(f"no points in group {key!r}")
        w = self.weights[idx]
        return PredictionSet(self.points[idx], w / w.sum(),
                             tuple(self.tags[i] for i in idx))

    def group_weight(self, key: Hashable) -> float:
        return float(sum(w for w, tag in zip(self.weights, self.tags) if tag.group == key))


@dataclass(frozen=True)
class VarianceSplit:
    """Model variance split by a conditioning variable.

    ``unexplained`` is E_Z V[X|Z], ``explained`` is V[E(X|Z)]; their sum is
    the total variance, which is validated at construction.
    """

    unexplained: float
    explained: float
    total: float

    def __post_init__(self):
        for name in ("unexplained", "explained", "total"):
            v = getattr(self, name)
            if v < -1e-12:
                raise UsageError(f"{name} variance is negative: {v!r}")
        if abs(self.total - (self.unexplained + self.explained)) > 1e-9:
            raise UsageError(
                "variance split violates the law of total variance: "
                f"{self.total!r} != {self.unexplained!r} + {self.explained!r}"
            )


def mean_label(dist: PredictionSet) -> np.ndarray:
    """The central label E Y: the weighted arithmetic mean of the points."""
    return np.sum(dist.points * dist.weights[:, None], axis=0)


def dual_mean(gen: ConvexGenerator, dist: PredictionSet) -> np.ndarray:
    """The central prediction EX = (E X*)*.

    Duals are averaged with numpy's pairwise-summation reductions, then
    mapped back through the primal map; for KL this is softmax of the
    weighted mean log-probabilities.
    """
    for row in dist.points:
        gen.validate(row)
    duals = gen.gradient_many(dist.points)
    mean_dual = np.sum(duals * dist.weights[:, None], axis=0)
    return gen.conjugate_gradient(mean_dual)


def conditional_dual_means(
    gen: ConvexGenerator, dist: PredictionSet
) -> dict[Hashable, tuple[float, np.ndarray]]:
    """Per-group dual means E(X | Z = g) with their marginal group weights.

    Groups are processed in sorted key order so reductions are deterministic.
    """
    out: dict[Hashable, tuple[float, np.ndarray]] = {}
    for key in dist.group_keys():
        sub = dist.restrict_to_group(key)
        out[key] = (dist.group_weight(key), dual_mean(gen, sub))
    return out


def variance(gen: ConvexGenerator, dist: PredictionSet) -> float:
    """Model variance V X = E D[EX || X]; zero iff all points coincide."""
    center = dual_mean(gen, dist)
    divs = divergence_matrix(gen, center[None, :], dist.points)[0]
    return float(divs @ dist.weights)


def total_variance_split(gen: ConvexGenerator, dist: PredictionSet) -> VarianceSplit:
    """Split V X into variance unexplained and explained by the group tag.

    The total is computed independently from the ungrouped law; the split
    identity is then enforced by the VarianceSplit invariant.
    """
    per_group = conditional_dual_means(gen, dist)
    unexplained = 0.0
    for key, (w, _) in per_group.items():
        unexplained += w * variance(gen, dist.restrict_to_group(key))
    centers = np.stack([center for _, center in per_group.values()])
    group_w = np.array([w for w, _ in per_group.values()])
    explained = variance(gen, PredictionSet(centers, group_w / group_w.sum()))
    total = variance(gen, dist)
    return VarianceSplit(unexplained=unexplained, explained=explained, total=total)
