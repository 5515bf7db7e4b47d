"""Bias/variance estimators over a training procedure treated as a black box.

A trainer is any callable ``(Dataset, seed) -> (E, C) probability array`` on
a fixed evaluation set, deterministic in (dataset contents, seed).  Four
estimators are provided:

* conditional: retrain on the one available training set with fresh seeds;
  overestimates the bias and underestimates the variance by the conditioning
  gap.
* partitioned: split the training set into P disjoint subsets acting as
  independent draws of a smaller training distribution.
* double bootstrap: resample the training set (level 1), then resample each
  resample (level 2), and correct the level-1 estimate multiplicatively,
  b0 = b1^2 / b2.  Trains exactly B*k + B^2*k models.
* fresh sets: the idealized reference, only available when new training
  sets can actually be drawn (toy worlds).

Every estimator is a pure function of (trainer, data, integer parameters,
seed); trainer invocations across replicas may run concurrently, with all
reductions performed in index order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .decomposition import kl_bias_variance_per_example
from .errors import UsageError
from .runtime import parallel_map
from .seeding import derive_seed

Trainer = Callable[["Dataset", int], np.ndarray]


@dataclass(frozen=True)
class Dataset:
    """Feature vectors with integer class targets."""

    inputs: np.ndarray
    targets: np.ndarray
    id: str

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=int)
        if inputs.shape[0] == 0:
            raise UsageError("dataset must be non-empty")
        if inputs.shape[0] != targets.shape[0]:
            raise UsageError(
                f"{inputs.shape[0]} inputs but {targets.shape[0]} targets"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, indices, id_suffix: str) -> "Dataset":
        return Dataset(self.inputs[indices], self.targets[indices], f"{self.id}{id_suffix}")


class BiasVariance(NamedTuple):
    bias: float
    variance: float


@dataclass(frozen=True)
class BootstrapEstimate:
    """A level-1 estimate with its multiplicative double-bootstrap correction.

    ``t = b1 / b2`` and ``b0 = t * b1 = b1^2 / b2``.  When the level-2 mean
    is non-positive the correction is undefined; the estimate is returned
    uncorrected with the ``degenerate`` flag set.
    """

    b1: float
    b2: float
    t: float
    b0: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.degenerate:
            if abs(self.t - self.b1 / self.b2) > 1e-12:
                raise UsageError("corrective term t must equal b1 / b2")
            if abs(self.b0 - self.b1 * self.b1 / self.b2) > 1e-12:
                raise UsageError("corrected estimate b0 must equal b1^2 / b2")


def correct_bootstrap(b1: float, b2: float) -> BootstrapEstimate:
    """Apply the multiplicative correction, flagging degenerate level-2 means."""
    if b2 <= 0.0:
        return BootstrapEstimate(b1=b1, b2=b2, t=1.0, b0=b1, degenerate=True)
    t = b1 / b2
    return BootstrapEstimate(b1=b1, b2=b2, t=t, b0=t * b1)


def bootstrap_sample(d: Dataset, seed: int) -> Dataset:
    """Uniform with-replacement resample of the same size, deterministic in seed."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(d), size=len(d))
    return d.take(idx, f"+{seed}")


def _train_ensemble(trainer: Trainer, d: Dataset, k: int, seed: int, *path) -> np.ndarray:
    """Train k members with derived seeds and average them in probability space."""
    members = [trainer(d, derive_seed(seed, *path, "member", ell)) for ell in range(k)]
    stacked = np.stack(members)
    mixed = stacked.mean(axis=0)
    return np.maximum(mixed, 1e-12) / np.maximum(mixed, 1e-12).sum(axis=1, keepdims=True)


def _pooled_bias_variance(pred_stack: np.ndarray, eval_labels: np.ndarray) -> BiasVariance:
    """Per-example closed-form KL estimate averaged over the evaluation set."""
    logs = np.log(pred_stack)
    bias_e, var_e = kl_bias_variance_per_example(logs, eval_labels)
    return BiasVariance(float(bias_e.mean()), float(var_e.mean()))


def conditional_estimate(
    trainer: Trainer, T: Dataset, n_seeds: int, k: int, eval_labels, seed: int
) -> BiasVariance:
    """Retrain on the full T with n_seeds fresh seeds; seed-only randomness."""
    if n_seeds < 2:
        raise UsageError(f"need at least two seeds, got {n_seeds}")
    eval_labels = np.asarray(eval_labels, dtype=int)
    preds = parallel_map(
        lambda i: _train_ensemble(trainer, T, k, seed, "cond", i), range(n_seeds)
    )
    return _pooled_bias_variance(np.stack(preds), eval_labels)


def partition_estimate(
    trainer: Trainer, T: Dataset, P: int, k: int, eval_labels, seed: int
) -> BiasVariance:
    """Disjoint-subset estimate: P equal parts act as independent training draws.

    The dataset is shuffled deterministically and split into P subsets of
    size floor(|T| / P); remainder points are dropped so subsets stay
    exactly equal-sized.
    """
    if P < 2:
        raise UsageError(f"need at least two partitions, got {P}")
    if P > len(T):
        raise UsageError(f"cannot split {len(T)} points into {P} partitions")
    eval_labels = np.asarray(eval_labels, dtype=int)
    rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    perm = rng.permutation(len(T))
    part_size = len(T) // P

    def train_part(p: int) -> np.ndarray:
        idx = perm[p * part_size : (p + 1) * part_size]
        subset = T.take(idx, f"/part{p}")
        return _train_ensemble(trainer, subset, k, seed, "part", p)

    preds = parallel_map(train_part, range(P))
    return _pooled_bias_variance(np.stack(preds), eval_labels)


def double_bootstrap_estimate(
    trainer: Trainer, T: Dataset, B: int, k: int, eval_labels, seed: int
) -> tuple[BootstrapEstimate, BootstrapEstimate]:
    """Two-level bootstrap estimates of bias and variance, corrected separately.

    Level 1 draws B bootstrap samples T_i of T and estimates (b1) over their
    ensemble predictions; level 2 draws B children T_ij of every T_i,
    estimates within each family, and averages to b2.  Child seeds are
    derived from (seed, level, i, j), so the B + B^2 trainings replay
    bit-identically in any execution order.
    """
    if B < 2:
        raise UsageError(f"need at least two bootstrap samples, got {B}")
    eval_labels = np.asarray(eval_labels, dtype=int)

    level1_sets = [bootstrap_sample(T, derive_seed(seed, "boot", 1, i)) for i in range(B)]
    level1_preds = parallel_map(
        lambda i: _train_ensemble(trainer, level1_sets[i], k, seed, "boot", 1, i),
        range(B),
    )
    b1_bias, b1_var = _pooled_bias_variance(np.stack(level1_preds), eval_labels)

    def level2_family(i: int) -> BiasVariance:
        preds = []
        for j in range(B):
            child = bootstrap_sample(level1_sets[i], derive_seed(seed, "boot", 2, i, j))
            preds.append(_train_ensemble(trainer, child, k, seed, "boot", 2, i, j))
        return _pooled_bias_variance(np.stack(preds), eval_labels)

    families = parallel_map(level2_family, range(B))
    b2_bias = float(np.mean([f.bias for f in families]))
    b2_var = float(np.mean([f.variance for f in families]))

    return correct_bootstrap(b1_bias, b2_bias), correct_bootstrap(b1_var, b2_var)


def fresh_sets_estimate(
    trainer: Trainer,
    dataset_source: Callable[[int], Dataset],
    n_sets: int,
    k: int,
    eval_labels,
    seed: int,
) -> BiasVariance:
    """Reference estimate from genuinely fresh training sets.

    Only possible when the training distribution itself can be sampled;
    used as ground truth when judging the other estimators on toy worlds.
    """
    if n_sets < 2:
        raise UsageError(f"need at least two training sets, got {n_sets}")
    eval_labels = np.asarray(eval_labels, dtype=int)

    def one(i: int) -> np.ndarray:
        d = dataset_source(derive_seed(seed, "fresh-data", i))
        return _train_ensemble(trainer, d, k, seed, "fresh", i)

    preds = parallel_map(one, range(n_sets))
    return _pooled_bias_variance(np.stack(preds), eval_labels)
