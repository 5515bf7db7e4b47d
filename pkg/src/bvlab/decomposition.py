"""The bias-variance decomposition for Bregman losses.

For independent label and prediction laws Y and X,

    E D[Y || X]  =  E D[Y || EY]        (Bayes error)
                  + D[EY || EX]         (bias)
                  + E D[EX || X]        (model variance)

where EY is the mean label and EX the dual mean of the predictions.  The
total on the left is computed independently as a double sum and the
additivity is enforced by the Decomposition invariant.

Conditioning on a variable Z (carried as group tags) yields the alternate
split

    E D[y || X]  =  Bias_Z + Var_Z,
    Bias_Z = total bias + gap,      Var_Z = total variance - gap,
    gap    = E_Z D[EX || E(X|Z)]  >=  0,

so conditional estimates overestimate the bias and underestimate the
variance by the same non-negative amount.

For the KL case the model variance has the closed form

    E KL[EX || X]  =  -log sum_j exp( E log X_j ),

which is what the closed-form estimator and the sampled ensemble estimator
below compute; tests pin its agreement with the definitional route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bregman import (
    ConvexGenerator,
    divergence,
    divergence_matrix,
    floor_probs,
    logsumexp,
)
from .errors import UsageError
from .moments import PredictionSet, conditional_dual_means, dual_mean, mean_label
from .seeding import rng_for

_ADDITIVITY_TOL = 1e-9


@dataclass(frozen=True)
class Decomposition:
    """Bayes error, bias, and model variance; ``total`` must be their sum."""

    bayes_error: float
    bias: float
    variance: float
    total: float

    def __post_init__(self):
        for name in ("bayes_error", "bias", "variance"):
            if getattr(self, name) < -1e-12:
                raise UsageError(f"{name} is negative: {getattr(self, name)!r}")
        if abs(self.total - (self.bayes_error + self.bias + self.variance)) > _ADDITIVITY_TOL:
            raise UsageError(
                f"decomposition is not additive: total {self.total!r} vs parts "
                f"{self.bayes_error!r} + {self.bias!r} + {self.variance!r}"
            )


@dataclass(frozen=True)
class ConditionalDecomposition:
    """Decomposition conditioned on a group variable, with the gap term.

    Invariants: conditional_bias = total_bias + gap and
    conditional_variance = total_variance - gap, so both splits share the
    same sum.
    """

    conditional_bias: float
    conditional_variance: float
    gap: float
    total_bias: float
    total_variance: float

    def __post_init__(self):
        if self.gap < -1e-12:
            raise UsageError(f"gap is negative: {self.gap!r}")
        if abs(self.conditional_bias - (self.total_bias + self.gap)) > _ADDITIVITY_TOL:
            raise UsageError("conditional bias does not equal total bias + gap")
        if abs(self.conditional_variance - (self.total_variance - self.gap)) > _ADDITIVITY_TOL:
            raise UsageError("conditional variance does not equal total variance - gap")
        lhs = self.conditional_bias + self.conditional_variance
        rhs = self.total_bias + self.total_variance
        if abs(lhs - rhs) > _ADDITIVITY_TOL:
            raise UsageError("conditional and total splits have different sums")


def decompose(gen: ConvexGenerator, labels: PredictionSet, preds: PredictionSet) -> Decomposition:
    """Decompose E D[Y || X] for independent empirical laws Y and X.

    The Bayes error is computed against E Y; when the label law is a single
    point the term is short-circuited to exactly zero rather than evaluated
    through the (floored) divergence.
    """
    if labels.dimension != preds.dimension:
        raise UsageError(
            f"label dimension {labels.dimension} != prediction dimension {preds.dimension}"
        )
    for row in labels.points:
        gen.validate(row)
    for row in preds.points:
        gen.validate(row)

    label_rows = labels.points
    deterministic_label = bool(np.all(label_rows == label_rows[0]))
    ey = label_rows[0].copy() if deterministic_label else mean_label(labels)
    ex = dual_mean(gen, preds)

    if deterministic_label:
        bayes = 0.0
    else:
        bayes = float(divergence_matrix(gen, label_rows, ey[None, :])[:, 0] @ labels.weights)
    bias = divergence(gen, ey, ex)
    var = float(divergence_matrix(gen, ex[None, :], preds.points)[0] @ preds.weights)
    cross = divergence_matrix(gen, label_rows, preds.points)
    total = float(labels.weights @ cross @ preds.weights)
    return Decomposition(bayes_error=bayes, bias=bias, variance=var, total=total)


def conditional_decompose(
    gen: ConvexGenerator, label, preds: PredictionSet
) -> ConditionalDecomposition:
    """Decompose E D[y || X] conditioned on the group tag of the predictions."""
    y = gen.validate(label)
    per_group = conditional_dual_means(gen, preds)
    ex = dual_mean(gen, preds)

    cond_bias = 0.0
    cond_var = 0.0
    gap = 0.0
    for key, (w, center) in per_group.items():
        sub = preds.restrict_to_group(key)
        cond_bias += w * divergence(gen, y, center)
        within = divergence_matrix(gen, center[None, :], sub.points)[0]
        cond_var += w * float(within @ sub.weights)
        gap += w * divergence(gen, ex, center)

    total_bias = divergence(gen, y, ex)
    total_var = float(
        divergence_matrix(gen, ex[None, :], preds.points)[0] @ preds.weights
    )
    return ConditionalDecomposition(
        conditional_bias=cond_bias,
        conditional_variance=cond_var,
        gap=gap,
        total_bias=total_bias,
        total_variance=total_var,
    )


def _validate_log_rows(log_preds: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(log_preds, dtype=float))
    if rows.shape[0] < 1:
        raise UsageError("need at least one prediction")
    norms = logsumexp(rows, axis=1)
    if np.any(np.abs(norms) > 1e-9):
        bad = int(np.argmax(np.abs(norms)))
        raise UsageError(
            f"log-probability row {bad} is not normalized (logsumexp = {norms[bad]!r})"
        )
    return rows


def kl_bias_variance_closed_form(log_preds, y: int) -> tuple[float, float]:
    """Closed-form KL bias and variance from N log-probability vectors.

    With V_j the per-class mean of log p_j over the N predictions,

        variance = -log sum_j exp(V_j)
        bias     = mean cross-entropy - variance

    The exponentiated means are not renormalized before the logsumexp; the
    identity absorbs the dual mean's normalizer, and the agreement with the
    definitional decomposition is pinned by tests.
    """
    rows = _validate_log_rows(log_preds)
    n, c = rows.shape
    if not 0 <= y < c:
        raise UsageError(f"class index {y} out of range for {c} classes")
    mean_log = rows.mean(axis=0)
    var = -logsumexp(mean_log)
    mean_ce = float(-mean_log[y])
    return mean_ce - var, var


def kl_bias_variance_per_example(log_preds, labels) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed form over an (N, E, C) stack of log predictions.

    Returns per-example bias and variance arrays of shape (E,).
    """
    arr = np.asarray(log_preds, dtype=float)
    if arr.ndim != 3:
        raise UsageError(f"expected an (N, E, C) array, got shape {arr.shape}")
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (arr.shape[1],):
        raise UsageError(
            f"labels shape {labels.shape} does not match {arr.shape[1]} examples"
        )
    mean_log = arr.mean(axis=0)                      # (E, C)
    var = -logsumexp(mean_log, axis=1)               # (E,)
    mean_ce = -mean_log[np.arange(arr.shape[1]), labels]
    return mean_ce - var, var


def ensemble_draw_estimate(
    pool: PredictionSet, k: int, n_draws: int, y: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo KL bias/variance of size-k primal ensembles from a pool.

    Each draw samples k members from the pool law with replacement, averages
    them in probability space, and accumulates the cross-entropy and the
    per-class log of the ensemble prediction; the closed-form tail then
    yields (bias, variance).  Draw i uses its own stream derived from
    (seed, i), so results do not depend on evaluation order.
    """
    if k < 1:
        raise UsageError(f"ensemble size must be >= 1, got {k}")
    if n_draws < 1:
        raise UsageError(f"need at least one draw, got {n_draws}")
    if not 0 <= y < pool.dimension:
        raise UsageError(f"class index {y} out of range for {pool.dimension} classes")
    points = floor_probs(pool.points)
    log_rows = np.empty((n_draws, pool.dimension))
    for i in range(n_draws):
        rng = rng_for(seed, "draw", i)
        idx = rng.choice(pool.size, size=k, replace=True, p=pool.weights)
        combined = floor_probs(points[idx].mean(axis=0))
        log_rows[i] = np.log(combined)
    return kl_bias_variance_closed_form(log_rows, y)
