"""Primal and dual ensembling, ensemble-size sweeps, and greedy selection.

Primal ensembling averages member predictions where they live (probability
space for classifiers); dual ensembling averages their dual coordinates and
maps back, which for KL is the softmax of the mean log-probabilities
(geometric averaging).  Dual ensembling leaves the central prediction, and
hence the bias, untouched for any ensemble size; primal ensembling can move
the bias in either direction, and the fixed two-point construction in
:func:`counterexample_report` exhibits both directions at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bregman import (
    ConvexGenerator,
    NegativeEntropy,
    floor_probs,
    get_generator,
    logsumexp,
)
from .decomposition import kl_bias_variance_per_example
from .errors import UsageError
from .moments import PredictionSet, dual_mean
from .predlog import ModelPool
from .seeding import rng_for


def primal_ensemble(members) -> np.ndarray:
    """Arithmetic mean of the member predictions."""
    arr = np.atleast_2d(np.asarray(members, dtype=float))
    if arr.shape[0] == 0:
        raise UsageError("cannot ensemble zero members")
    return arr.mean(axis=0)


def dual_ensemble(gen: ConvexGenerator, members) -> np.ndarray:
    """Average the members' duals and map back to primal coordinates."""
    arr = np.atleast_2d(np.asarray(members, dtype=float))
    if arr.shape[0] == 0:
        raise UsageError("cannot ensemble zero members")
    for row in arr:
        gen.validate(row)
    return gen.conjugate_gradient(gen.gradient_many(arr).mean(axis=0))


@dataclass(frozen=True)
class EnsembleCurve:
    """Per-size bias/variance/NLL statistics of sampled ensembles."""

    mode: str                     # "primal" or "dual"
    ks: tuple[int, ...]
    bias: tuple[float, ...]
    variance: tuple[float, ...]
    nll: tuple[float, ...]
    n_draws: int
    seed: int
    with_replacement: bool = True


def _combine_draw(log_probs: np.ndarray, mode: str) -> np.ndarray:
    """Combine a (k, E, C) block of member log predictions into one (E, C)."""
    if mode == "primal":
        mixed = floor_probs(np.exp(log_probs).mean(axis=0))
        return np.log(mixed)
    if mode == "dual":
        mean_log = log_probs.mean(axis=0)
        return mean_log - logsumexp(mean_log, axis=1)[:, None]
    raise UsageError(f"unknown ensemble mode {mode!r}")


def ensemble_curve(
    gen: ConvexGenerator,
    pool: ModelPool,
    labels,
    mode: str,
    ks,
    n_draws: int,
    seed: int,
    with_replacement: bool = True,
) -> EnsembleCurve:
    """Bias/variance/NLL of size-k ensembles sampled from a trained pool.

    For every k and every draw, k models are sampled from the pool (with
    replacement by default; without replacement reproduces sweeps over a
    finite pool and requires k <= pool size), combined per example according
    to ``mode``, and the per-example closed-form KL estimator is applied
    over the draws; statistics are averaged over examples.  Draw (k, i) uses
    a stream derived from (seed, k, i) so the curve replays identically for
    any execution order.
    """
    if not isinstance(gen, NegativeEntropy):
        raise UsageError("ensemble curves are defined for the KL generator")
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (pool.n_examples,):
        raise UsageError(
            f"labels shape {labels.shape} does not match {pool.n_examples} examples"
        )
    ks = tuple(int(k) for k in ks)
    if n_draws < 1:
        raise UsageError("need at least one draw")
    for k in ks:
        if k < 1:
            raise UsageError(f"ensemble size must be >= 1, got {k}")
        if not with_replacement and k > pool.n_models:
            raise UsageError(
                f"k = {k} exceeds pool size {pool.n_models} without replacement"
            )

    bias_per_k, var_per_k, nll_per_k = [], [], []
    for k in ks:
        combined = np.empty((n_draws, pool.n_examples, pool.n_classes))
        for i in range(n_draws):
            rng = rng_for(seed, "curve", mode, k, i)
            idx = rng.choice(pool.n_models, size=k, replace=with_replacement)
            combined[i] = _combine_draw(pool.log_probs[idx], mode)
        bias_e, var_e = kl_bias_variance_per_example(combined, labels)
        bias_per_k.append(float(bias_e.mean()))
        var_per_k.append(float(var_e.mean()))
        nll_per_k.append(float(bias_e.mean() + var_e.mean()))
    return EnsembleCurve(
        mode=mode,
        ks=ks,
        bias=tuple(bias_per_k),
        variance=tuple(var_per_k),
        nll=tuple(nll_per_k),
        n_draws=n_draws,
        seed=seed,
        with_replacement=with_replacement,
    )


@dataclass(frozen=True)
class CounterexampleReport:
    """Central predictions and per-class biases of the fixed two-point law
    and of its two-member primal-ensemble law.

    The law puts equal mass on (0.8, 0.2) and (0.6, 0.4); averaging two
    independent members yields mass 1/4, 1/4, 1/2 on (0.8, 0.2), (0.6, 0.4),
    (0.7, 0.3).  Every number is recomputed from that construction.
    """

    dual_mean_single: np.ndarray
    dual_mean_ensemble: np.ndarray
    bias_class0_single: float
    bias_class0_ensemble: float
    bias_class1_single: float
    bias_class1_ensemble: float

    @property
    def means_differ(self) -> bool:
        return bool(np.max(np.abs(self.dual_mean_single - self.dual_mean_ensemble)) > 1e-6)

    @property
    def class0_increased(self) -> bool:
        return self.bias_class0_ensemble > self.bias_class0_single

    @property
    def class1_decreased(self) -> bool:
        return self.bias_class1_ensemble < self.bias_class1_single

    @property
    def passed(self) -> bool:
        return self.means_differ and self.class0_increased and self.class1_decreased


def counterexample_report() -> CounterexampleReport:
    """Primal ensembling moving the bias in opposite directions per class."""
    gen = get_generator("kl", 2)
    a, b = np.array([0.8, 0.2]), np.array([0.6, 0.4])
    single = PredictionSet.from_probs([a, b])
    pair_mean = primal_ensemble([a, b])
    ensemble = PredictionSet.from_probs(
        [a, b, pair_mean], weights=np.array([0.25, 0.25, 0.5])
    )
    q_single = dual_mean(gen, single)
    q_ens = dual_mean(gen, ensemble)
    return CounterexampleReport(
        dual_mean_single=q_single,
        dual_mean_ensemble=q_ens,
        bias_class0_single=float(-np.log(q_single[0])),
        bias_class0_ensemble=float(-np.log(q_ens[0])),
        bias_class1_single=float(-np.log(q_single[1])),
        bias_class1_ensemble=float(-np.log(q_ens[1])),
    )


def ensemble_nll(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the primal ensemble of an (m, E, C) prob stack."""
    mixed = floor_probs(probs.mean(axis=0))
    e_idx = np.arange(mixed.shape[0])
    return float(-np.log(mixed[e_idx, labels]).mean())


def greedy_select(pool_probs, val_labels, budget: int) -> list[int]:
    """Forward-select ensemble members minimizing validation NLL.

    At every step the candidate whose inclusion yields the lowest validation
    NLL of the primal ensemble is appended; members may be picked more than
    once, and exact ties go to the lowest model index.
    """
    probs = np.asarray(pool_probs, dtype=float)
    if probs.ndim != 3:
        raise UsageError(f"expected an (m, E, C) array, got shape {probs.shape}")
    labels = np.asarray(val_labels, dtype=int)
    if budget < 0:
        raise UsageError(f"budget must be >= 0, got {budget}")
    if budget > 0 and probs.shape[0] == 0:
        raise UsageError("cannot select from an empty pool")

    m = probs.shape[0]
    e_idx = np.arange(probs.shape[1])
    selected: list[int] = []
    running_sum = np.zeros(probs.shape[1:])
    for step in range(budget):
        candidate_mix = (running_sum[None] + probs) / (step + 1)   # (m, E, C)
        candidate_mix = np.maximum(candidate_mix, 1e-12)
        nlls = -np.log(candidate_mix[:, e_idx, labels]).mean(axis=1)
        best = int(np.argmin(nlls))        # argmin takes the lowest index on ties
        selected.append(best)
        running_sum += probs[best]
    return selected
