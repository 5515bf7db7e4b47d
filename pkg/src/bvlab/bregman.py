"""Convex generators, primal/dual coordinate maps, and Bregman divergences.

A generator bundles a strictly convex differentiable F with everything the
rest of the package derives from it:

    value(x)               F(x)
    gradient(x)            the dual map x* = grad F(x)
    conjugate_value(z)     F*(z) = sup_x <z, x> - F(x)
    conjugate_gradient(z)  the primal map grad F*(z), inverse of gradient

and the divergence

    D_F[y || x] = F(y) - F(x) - <grad F(x), y - x>,

which is non-negative and zero iff y = x.  The conjugate divergence
D_{F*}, evaluated through the same formula applied to F*, satisfies
D_F[x || y] = D_{F*}[y* || x*].

Three generators ship with the package:

* ``SquaredEuclidean``: F(x) = ||x||^2 on all of R^d, so D is the squared
  Euclidean distance and the dual map is 2x.
* ``NegativeEntropy``: F(x) = sum_i x_i log x_i on the open probability
  simplex, so D is the KL divergence.  The dual map on the simplex is only
  defined up to an additive constant; we fix the gauge as log x, with
  softmax as the primal map (which quotients the constant back out).
  F* is logsumexp, evaluated with a max shift for overflow safety.
* ``GeneralizedIDivergence``: F(x) = sum_i x_i log x_i - x_i on the open
  positive orthant, an extra case to exercise the machinery beyond the
  two standard losses.

Probability vectors are floored at PROB_FLOOR = 1e-12 componentwise and
renormalized before use, so logarithms stay finite; the error introduced
is O(eps log eps), far below every tolerance used in the test suite.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, UsageError

PROB_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Points


def floor_probs(probs: np.ndarray) -> np.ndarray:
    """Clamp entries to at least PROB_FLOOR and renormalize to sum 1."""
    p = np.maximum(np.asarray(probs, dtype=float), PROB_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class SimplexPoint:
    """A floored probability vector with its log-probabilities cached.

    Logs are the canonical dual-space representation for KL work; the cache
    is computed once at construction so both views stay coherent.
    """

    probs: np.ndarray
    log_probs: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.probs.shape[0]


def simplex_point(probs) -> SimplexPoint:
    """Construct a SimplexPoint, flooring and renormalizing the input."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise UsageError(f"expected a 1-d probability vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("probability vector has non-finite entries")
    if np.any(p < -1e-9):
        bad = int(np.argmin(p))
        raise DomainError(f"negative probability {p[bad]!r} at index {bad}")
    total = p.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-6:
        raise DomainError(f"probabilities sum to {total!r}, expected 1")
    p = floor_probs(p)
    p.setflags(write=False)
    logs = np.log(p)
    logs.setflags(write=False)
    return SimplexPoint(probs=p, log_probs=logs)


def one_hot(index: int, n_classes: int) -> SimplexPoint:
    """The floored vertex of the simplex for a class label."""
    if not 0 <= index < n_classes:
        raise UsageError(f"class index {index} out of range for {n_classes} classes")
    v = np.zeros(n_classes)
    v[index] = 1.0
    return simplex_point(v)


@dataclass(frozen=True)
class DualPoint:
    """Dual coordinates of a primal point, bound to the generator that made them."""

    coords: np.ndarray
    generator_name: str


# ---------------------------------------------------------------------------
# Generators


class ConvexGenerator(abc.ABC):
    """A strictly convex differentiable F with closed-form conjugate maps."""

    name: str
    dimension: int
    domain: str

    def __init__(self, dimension: int):
        if dimension < 1:
            raise UsageError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension

    @abc.abstractmethod
    def value(self, x: np.ndarray) -> float:
        """F(x), assuming x already validated."""

    @abc.abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """The dual map grad F(x)."""

    @abc.abstractmethod
    def conjugate_value(self, z: np.ndarray) -> float:
        """F*(z)."""

    @abc.abstractmethod
    def conjugate_gradient(self, z: np.ndarray) -> np.ndarray:
        """The primal map grad F*(z)."""

    @abc.abstractmethod
    def validate(self, x) -> np.ndarray:
        """Check that x lies in the domain; return it as a float array."""

    # batch hooks, overridden where a vectorized form exists
    def value_many(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self.value(x) for x in xs])

    def gradient_many(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([self.gradient(x) for x in xs])

    def _as_vector(self, x) -> np.ndarray:
        if isinstance(x, SimplexPoint):
            x = x.probs
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != self.dimension:
            raise DomainError(
                f"{self.name}: expected a vector of dimension {self.dimension}, "
                f"got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DomainError(f"{self.name}: non-finite entry at index {bad}")
        return arr

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dimension={self.dimension})"


class SquaredEuclidean(ConvexGenerator):
    """F(x) = ||x||^2 on R^d; D_F is the squared Euclidean distance."""

    name = "mse"
    domain = "full space"

    def value(self, x):
        return float(x @ x)

    def gradient(self, x):
        return 2.0 * x

    def conjugate_value(self, z):
        # F*(z) = ||z||^2 / 4, attained at x = z / 2
        return float(z @ z) / 4.0

    def conjugate_gradient(self, z):
        return z / 2.0

    def validate(self, x):
        return self._as_vector(x)

    def value_many(self, xs):
        return np.einsum("ij,ij->i", xs, xs)

    def gradient_many(self, xs):
        return 2.0 * xs


class NegativeEntropy(ConvexGenerator):
    """F(x) = sum x_i log x_i on the open simplex; D_F is KL."""

    name = "kl"
    domain = "open probability simplex"

    def value(self, x):
        return float(x @ np.log(x))

    def gradient(self, x):
        # simplex gauge: log x, no +1 term; softmax inverts it
        return np.log(x)

    def conjugate_value(self, z):
        return logsumexp(z)

    def conjugate_gradient(self, z):
        return softmax(z)

    def validate(self, x):
        arr = self._as_vector(x)
        if np.any(arr <= 0):
            bad = int(np.argmin(arr))
            raise DomainError(
                f"{self.name}: entry {arr[bad]!r} at index {bad} is outside the "
                "open simplex (floor probabilities first)"
            )
        total = arr.sum()
        if abs(total - 1.0) > 1e-6:
            raise DomainError(f"{self.name}: entries sum to {total!r}, expected 1")
        return arr

    def value_many(self, xs):
        return np.einsum("ij,ij->i", xs, np.log(xs))

    def gradient_many(self, xs):
        return np.log(xs)


class GeneralizedIDivergence(ConvexGenerator):
    """F(x) = sum x_i log x_i - x_i on the open positive orthant."""

    name = "idiv"
    domain = "open positive orthant"

    def value(self, x):
        return float(x @ np.log(x) - x.sum())

    def gradient(self, x):
        return np.log(x)

    def conjugate_value(self, z):
        return float(np.exp(z).sum())

    def conjugate_gradient(self, z):
        return np.exp(z)

    def validate(self, x):
        arr = self._as_vector(x)
        if np.any(arr <= 0):
            bad = int(np.argmin(arr))
            raise DomainError(f"{self.name}: entry {arr[bad]!r} at index {bad} is not positive")
        return arr

    def value_many(self, xs):
        return np.einsum("ij,ij->i", xs, np.log(xs)) - xs.sum(axis=1)

    def gradient_many(self, xs):
        return np.log(xs)


# ---------------------------------------------------------------------------
# Stable softmax / logsumexp


def logsumexp(z: np.ndarray, axis: int | None = None) -> float | np.ndarray:
    """log(sum(exp(z))) with a max shift so large coordinates cannot overflow."""
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(z - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out)
    return np.squeeze(out, axis=axis)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# Public operations


def evaluate(gen: ConvexGenerator, x) -> float:
    """F(x) after domain validation."""
    return gen.value(gen.validate(x))


def to_dual(gen: ConvexGenerator, x) -> DualPoint:
    """Map a primal point to its dual coordinates x* = grad F(x)."""
    coords = gen.gradient(gen.validate(x))
    return DualPoint(coords=coords, generator_name=gen.name)


def to_primal(gen: ConvexGenerator, z: DualPoint | np.ndarray) -> np.ndarray:
    """Invert the dual map: grad F*(z).  Checks the generator binding."""
    if isinstance(z, DualPoint):
        if z.generator_name != gen.name:
            raise UsageError(
                f"dual point is bound to generator {z.generator_name!r}, "
                f"not {gen.name!r}"
            )
        coords = z.coords
    else:
        coords = np.asarray(z, dtype=float)
    if coords.shape != (gen.dimension,):
        raise DomainError(
            f"{gen.name}: dual coordinates have shape {coords.shape}, "
            f"expected ({gen.dimension},)"
        )
    return gen.conjugate_gradient(coords)


def divergence(gen: ConvexGenerator, y, x) -> float:
    """D_F[y || x] = F(y) - F(x) - <grad F(x), y - x>."""
    yv = gen.validate(y)
    xv = gen.validate(x)
    fy = gen.value(yv)
    fx = gen.value(xv)
    gx = gen.gradient(xv)
    if not (np.isfinite(fy) and np.isfinite(fx)):
        raise NumericalError(f"{gen.name}: non-finite generator value in divergence")
    if not np.all(np.isfinite(gx)):
        raise NumericalError(f"{gen.name}: non-finite gradient in divergence")
    d = fy - fx - float(gx @ (yv - xv))
    if not np.isfinite(d):
        raise NumericalError(f"{gen.name}: non-finite divergence result")
    return d


def divergence_matrix(gen: ConvexGenerator, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """All pairwise D_F[y_i || x_j] as an (n, m) matrix.

    Same formula as :func:`divergence`, vectorized; rows must already be
    domain-valid.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    fy = gen.value_many(ys)
    fx = gen.value_many(xs)
    gx = gen.gradient_many(xs)
    cross = ys @ gx.T                      # (n, m): <grad F(x_j), y_i>
    gxx = np.einsum("ij,ij->i", gx, xs)    # <grad F(x_j), x_j>
    out = fy[:, None] - fx[None, :] - cross + gxx[None, :]
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{gen.name}: non-finite divergence in pairwise matrix")
    return out


def conjugate_divergence(gen: ConvexGenerator, a, b) -> float:
    """D_{F*}[a || b] through the divergence formula applied to F*.

    Accepts DualPoints (binding-checked) or raw dual coordinate arrays.
    Satisfies D_F[x || y] = D_{F*}[y* || x*].
    """

    def coords(p) -> np.ndarray:
        if isinstance(p, DualPoint):
            if p.generator_name != gen.name:
                raise UsageError(
                    f"dual point is bound to generator {p.generator_name!r}, "
                    f"not {gen.name!r}"
                )
            return p.coords
        return np.asarray(p, dtype=float)

    av, bv = coords(a), coords(b)
    fa = gen.conjugate_value(av)
    fb = gen.conjugate_value(bv)
    gb = gen.conjugate_gradient(bv)
    d = fa - fb - float(gb @ (av - bv))
    if not np.isfinite(d):
        raise NumericalError(f"{gen.name}: non-finite conjugate divergence")
    return d


# ---------------------------------------------------------------------------
# Registry

_FACTORIES: dict[str, type[ConvexGenerator]] = {}


def check_strict_convexity(
    gen: ConvexGenerator, rng: np.random.Generator, trials: int = 64
) -> None:
    """Spot-check strict convexity of F on random in-domain segments.

    Draws pairs of distinct interior points and interpolation weights and
    requires F(t x + (1-t) y) < t F(x) + (1-t) F(y) with a small slack.
    Raises UsageError on a violation; generators failing this check must
    not be registered, since a non-strictly-convex F has no unique dual
    mean.
    """
    for _ in range(trials):
        x = _random_interior_point(gen, rng)
        y = _random_interior_point(gen, rng)
        if np.max(np.abs(x - y)) < 1e-2:
            continue
        t = rng.uniform(0.2, 0.8)
        mid = t * x + (1 - t) * y
        chord = t * gen.value(x) + (1 - t) * gen.value(y)
        if gen.value(mid) >= chord - 1e-12:
            raise UsageError(
                f"generator {gen.name!r} failed the strict convexity spot-check"
            )


def _random_interior_point(gen: ConvexGenerator, rng: np.random.Generator) -> np.ndarray:
    d = gen.dimension
    if isinstance(gen, NegativeEntropy) or gen.domain == "open probability simplex":
        return floor_probs(rng.dirichlet(np.ones(d) * 2.0))
    if gen.domain == "open positive orthant":
        return rng.uniform(0.1, 3.0, size=d)
    return rng.normal(0.0, 1.0, size=d)


def register_generator(factory: type[ConvexGenerator], check_seed: int = 0) -> None:
    """Register a generator class, rejecting non-strictly-convex candidates."""
    probe = factory(3)
    check_strict_convexity(probe, np.random.default_rng(check_seed))
    _FACTORIES[probe.name] = factory


def get_generator(name: str, dimension: int) -> ConvexGenerator:
    """Instantiate a registered generator by name ('kl', 'mse', 'idiv')."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise UsageError(
            f"unknown generator {name!r}; registered: {sorted(_FACTORIES)}"
        ) from None
    return factory(dimension)


for _factory in (SquaredEuclidean, NegativeEntropy, GeneralizedIDivergence):
    register_generator(_factory)
