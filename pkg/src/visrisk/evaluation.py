"""Repeated random-split evaluation: AUC, t-based CIs, and effect sizes.

Each run draws a fresh uniform permutation from its own SplitMix64 stream
(seeded by the documented mix of master seed and run index, see
:mod:`visrisk.rng`), takes the first ceil(train_fraction * n) users for
training, fits on them and scores AUC on the rest. Runs are therefore
independent of worker scheduling: results are identical for any thread
count. Test sets that come up single-class are redrawn from the same
per-run stream and counted, since AUC is undefined there.

Cohen's d is reported through the binormal equal-variance relation
AUC = Phi(d / sqrt(2)); the three published (AUC, d) pairs this pipeline is
checked against all satisfy it to within 0.01.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import glm
from .dists import normal_cdf, normal_ppf, t_ppf, t_sf
from .rng import SplitMix64, derive_seed

__all__ = [
    "SplitPlan",
    "EvalReport",
    "ComparisonResult",
    "roc_auc",
    "roc_points",
    "train_test_sizes",
    "irls_trainer",
    "repeated_splits",
    "mean_ci_t",
    "auc_to_cohens_d",
    "cohens_d_to_auc",
    "compare_models_ttest",
]

# trainer(X_train, y_train) -> scorer(X_test) -> scores
Trainer = Callable[[np.ndarray, np.ndarray], Callable[[np.ndarray], np.ndarray]]

_MAX_REDRAWS_PER_RUN = 1000


@dataclass(frozen=True)
class SplitPlan:
    master_seed: int
    n_repeats: int = 1000
    train_fraction: float = 0.7

    def __post_init__(self) -> None:
        if self.n_repeats < 1:
            raise ValueError(f"n_repeats must be >= 1, got {self.n_repeats}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


@dataclass(eq=False)
class EvalReport:
    model_name: str
    aucs: np.ndarray
    mean_auc: float
    ci95: tuple[float, float] | None  # None when n_repeats < 2
    cohens_d: float | None  # None when mean AUC is exactly 0 or 1
    n_skipped: int
    plan: SplitPlan


@dataclass(frozen=True)
class ComparisonResult:
    t: float
    p: float
    df: float
    mean_a: float
    mean_b: float
    delta: float


def _tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average rank of their run."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC = P(score+ > score-) + 0.5 * P(tie), via the rank method.

    O(n log n); exactly equal to the brute-force pairwise count, including
    tie handling.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D vectors of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires both classes in labels")
    ranks = _tied_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float, float]]:
    """(threshold, FPR, TPR) sweep for plotting, one point per distinct score.

    The classifier at threshold t predicts positive when score >= t; the
    list runs from the strictest threshold to (-inf, 1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires both classes in labels")
    order = np.argsort(-scores, kind="mergesort")
    points: list[tuple[float, float, float]] = []
    tp = fp = 0
    i = 0
    n = scores.shape[0]
    while i < n:
        thr = scores[order[i]]
        while i < n and scores[order[i]] == thr:
            if pos[order[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((float(thr), fp / n_neg, tp / n_pos))
    points.append((float("-inf"), 1.0, 1.0))
    return points


def train_test_sizes(n: int, train_fraction: float) -> tuple[int, int]:
    """Split sizes: first ceil(train_fraction * n) users train, rest test."""
    n_train = math.ceil(train_fraction * n)
    n_test = n - n_train
    if n_train < 1 or n_test < 1:
        raise ValueError(
            f"train_fraction {train_fraction} leaves an empty side for n={n}"
        )
    return n_train, n_test


def irls_trainer(l2_lambda: float = 0.0) -> Trainer:
    """Default trainer: unpenalized (or ridge) logistic regression."""

    def train(X_tr: np.ndarray, y_tr: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        model = glm.fit_irls(X_tr, y_tr, l2_lambda=l2_lambda)
        return lambda X_te: glm.predict_proba(model, X_te)

    return train


def _run_split(
    run_index: int,
    X: np.ndarray,
    y: np.ndarray,
    plan: SplitPlan,
    trainer: Trainer,
) -> tuple[float, int]:
    n = X.shape[0]
    n_train, _ = train_test_sizes(n, plan.train_fraction)
    stream = SplitMix64(derive_seed(plan.master_seed, run_index))
    redraws = 0
    while True:
        perm = np.array(stream.permutation(n))
        y_test = y[perm[n_train:]]
        y_train = y[perm[:n_train]]
        # AUC is undefined on a single-class test set, and the fit needs both
        # classes too; either way the split is redrawn from the run's stream.
        if y_test.min() != y_test.max() and y_train.min() != y_train.max():
            break
        redraws += 1
        if redraws > _MAX_REDRAWS_PER_RUN:
            raise ValueError(
                f"run {run_index}: exceeded {_MAX_REDRAWS_PER_RUN} redraws looking "
                "for a two-class split; the cohort is hopelessly imbalanced"
            )
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    scorer = trainer(X[train_idx], y[train_idx])
    auc = roc_auc(np.asarray(scorer(X[test_idx]), dtype=np.float64), y_test)
    return auc, redraws


def repeated_splits(
    X: np.ndarray,
    y: np.ndarray,
    plan: SplitPlan,
    trainer: Trainer | None = None,
    model_name: str = "model",
    n_threads: int = 1,
) -> EvalReport:
    """Evaluate a trainer over ``plan.n_repeats`` random train/test splits.

    Deterministic given ``plan.master_seed``; per-run seeds keep the output
    invariant to ``n_threads``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of users")
    if X.shape[0] < 10:
        raise ValueError(f"need at least 10 users for split evaluation, got {X.shape[0]}")
    if y.min() == y.max():
        raise ValueError("labels contain a single class")
    trainer = trainer if trainer is not None else irls_trainer()

    runs = range(plan.n_repeats)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(
                lambda r: _run_split(r, X, y, plan, trainer), runs
            ))
    else:
        results = [_run_split(r, X, y, plan, trainer) for r in runs]

    aucs = np.array([auc for auc, _ in results])
    n_skipped = sum(redraws for _, redraws in results)
    mean_auc = float(aucs.mean())
    ci95 = mean_ci_t(aucs)[1:] if plan.n_repeats >= 2 else None
    cohens_d = auc_to_cohens_d(mean_auc) if 0.0 < mean_auc < 1.0 else None
    return EvalReport(
        model_name=model_name,
        aucs=aucs,
        mean_auc=mean_auc,
        ci95=ci95,
        cohens_d=cohens_d,
        n_skipped=n_skipped,
        plan=plan,
    )


def mean_ci_t(values: np.ndarray, level: float = 0.95) -> tuple[float, float, float]:
    """(mean, low, high): mean +/- t_{(1+level)/2, m-1} * s / sqrt(m)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 2:
        raise ValueError("mean_ci_t needs at least 2 values")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    m = values.shape[0]
    mean = float(values.mean())
    s = float(values.std(ddof=1))
    if s <= 1e-12 * (1.0 + abs(mean)):  # constant vector up to rounding noise
        return mean, mean, mean
    half = t_ppf((1.0 + level) / 2.0, m - 1) * s / math.sqrt(m)
    return mean, mean - half, mean + half


def auc_to_cohens_d(auc: float) -> float:
    """d = sqrt(2) * Phi^-1(AUC), the binormal equal-variance relation."""
    if not 0.0 < auc < 1.0:
        raise ValueError(f"AUC must be in (0, 1), got {auc}")
    return math.sqrt(2.0) * normal_ppf(auc)


def cohens_d_to_auc(d: float) -> float:
    """Inverse of :func:`auc_to_cohens_d`: AUC = Phi(d / sqrt(2))."""
    return normal_cdf(d / math.sqrt(2.0))


def _is_zero_var(variance: float, values: np.ndarray) -> bool:
    scale = 1.0 + abs(float(values.mean()))
    return variance <= (1e-12 * scale) ** 2


def compare_models_ttest(aucs_a: np.ndarray, aucs_b: np.ndarray) -> ComparisonResult:
    """Two-sample t-test over per-run AUCs (Welch degrees of freedom)."""
    a = np.asarray(aucs_a, dtype=np.float64)
    b = np.asarray(aucs_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("both AUC vectors need at least 2 entries")
    ma, mb = a.shape[0], b.shape[0]
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    # constant vectors leave rounding noise of order (eps * mean)^2 in the
    # sample variance, so "zero" has to be read with a relative tolerance
    if _is_zero_var(va, a) and _is_zero_var(vb, b):
        raise ValueError("degenerate comparison: both AUC vectors have zero variance")
    se2 = va / ma + vb / mb
    mean_a, mean_b = float(a.mean()), float(b.mean())
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2 ** 2 / ((va / ma) ** 2 / (ma - 1) + (vb / mb) ** 2 / (mb - 1))
    p = 2.0 * t_sf(abs(t), df)
    return ComparisonResult(
        t=t, p=min(p, 1.0), df=df, mean_a=mean_a, mean_b=mean_b,
        delta=mean_a - mean_b,
    )
