"""Full-sample inferential analysis of the per-user features.

The reporting pipeline mirrors the paper-style analysis sequence: a
two-sample t-test per feature between the high-risk group and the rest,
Benjamini-Hochberg FDR over the full feature p-vector, structural pruning
of complement features (one query of each 2-query task duplicates its
counterpart's statistics, exactly so for unconditional tasks), and a
multiple logistic regression over the surviving features with Wald
chi-square per coefficient.

Pruning keys on schema structure, never on observed t equality: for routed
tasks the complement relation is only approximate, because per-image pair
sums hold only over the images the cluster fired for.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import glm
from .dists import t_sf
from .features import UserVector, build_design_matrix
from .schema import TaskSchema

__all__ = [
    "TTestResult",
    "GroupComparison",
    "FdrResult",
    "RegressionRow",
    "RegressionTable",
    "group_ttest",
    "bh_fdr",
    "feature_group_comparisons",
    "apply_fdr",
    "prune_complements",
    "PruneResult",
    "full_sample_regression",
    "write_feature_report_csv",
]


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    degenerate: bool = False  # both groups constant; t undefined, reported as 0


@dataclass(frozen=True)
class GroupComparison:
    feature_id: str
    mean_pos: float
    sd_pos: float
    n_pos: int
    mean_neg: float
    sd_neg: float
    n_neg: int
    t: float
    p: float
    df: float
    significant_fdr: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class FdrResult:
    alpha: float
    m: int
    rejected: tuple[bool, ...]  # aligned with the input p-value order
    n_rejected: int


@dataclass(frozen=True)
class RegressionRow:
    feature_id: str
    beta: float
    std_error: float
    wald_chi2: float
    p: float


@dataclass(frozen=True)
class RegressionTable:
    rows: tuple[RegressionRow, ...]
    intercept: float
    intercept_se: float
    diagnostics: glm.FitDiagnostics


@dataclass(frozen=True)
class PruneResult:
    kept: tuple[GroupComparison, ...]
    dropped_ids: tuple[str, ...]


def group_ttest(
    values_pos: np.ndarray, values_neg: np.ndarray, mode: str = "pooled"
) -> TTestResult:
    """Two-sample t-test; ``mode`` is "pooled" (Student) or "welch".

    When both groups have zero variance and equal means the statistic is
    undefined; that case is reported as t=0, p=1 with ``degenerate=True``.
    """
    a = np.asarray(values_pos, dtype=np.float64)
    b = np.asarray(values_neg, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each group needs at least 2 observations")
    if mode not in ("pooled", "welch"):
        raise ValueError(f"mode must be 'pooled' or 'welch', got {mode!r}")
    na, nb = a.shape[0], b.shape[0]
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    # constant groups leave rounding noise ~ (eps * mean)^2 in the variance
    zero_var = (
        va <= (1e-12 * (1.0 + abs(ma))) ** 2 and vb <= (1e-12 * (1.0 + abs(mb))) ** 2
    )

    if mode == "pooled":
        df = float(na + nb - 2)
        pooled_var = ((na - 1) * va + (nb - 1) * vb) / df
        se = float(np.sqrt(pooled_var * (1.0 / na + 1.0 / nb)))
    else:
        se2 = va / na + vb / nb
        se = float(np.sqrt(se2))
        if se2 > 0.0:
            df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        else:
            df = float(na + nb - 2)

    if zero_var or se == 0.0:
        if abs(ma - mb) <= 1e-12 * (1.0 + abs(ma)):
            return TTestResult(t=0.0, p=1.0, df=df, degenerate=True)
        t = float(np.inf) if ma > mb else float(-np.inf)
        return TTestResult(t=t, p=0.0, df=df, degenerate=True)
    t = (ma - mb) / se
    p = min(2.0 * t_sf(abs(t), df), 1.0)
    return TTestResult(t=t, p=p, df=df)


def bh_fdr(p_values: Sequence[float], alpha: float = 0.05) -> FdrResult:
    """Benjamini-Hochberg step-up: reject the smallest k hypotheses where k
    is the largest rank with p_(k) <= (k/m) * alpha. Ties are handled by a
    stable sort, so equal p-values are rejected together or not at all.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p_values must be a non-empty 1-D vector")
    if np.any((p < 0.0) | (p > 1.0)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    thresholds = (np.arange(1, m + 1) / m) * alpha
    passing = np.nonzero(p[order] <= thresholds)[0]
    k = int(passing[-1]) + 1 if passing.size else 0
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:k]] = True
    return FdrResult(alpha=alpha, m=m, rejected=tuple(bool(r) for r in rejected),
                     n_rejected=k)


def feature_group_comparisons(
    users: Sequence[UserVector], schema: TaskSchema, mode: str = "pooled"
) -> list[GroupComparison]:
    """Per-feature group comparison of high-risk vs rest, in schema order."""
    design = build_design_matrix(users, schema)
    pos = design.X[design.y == 1]
    neg = design.X[design.y == 0]
    if pos.shape[0] < 2 or neg.shape[0] < 2:
        raise ValueError(
            f"need >= 2 users per group, got {pos.shape[0]} positive / "
            f"{neg.shape[0]} negative"
        )
    out = []
    for j, feature_id in enumerate(design.column_ids):
        res = group_ttest(pos[:, j], neg[:, j], mode=mode)
        out.append(
            GroupComparison(
                feature_id=feature_id,
                mean_pos=float(pos[:, j].mean()),
                sd_pos=float(pos[:, j].std(ddof=1)),
                n_pos=pos.shape[0],
                mean_neg=float(neg[:, j].mean()),
                sd_neg=float(neg[:, j].std(ddof=1)),
                n_neg=neg.shape[0],
                t=res.t,
                p=res.p,
                df=res.df,
                degenerate=res.degenerate,
            )
        )
    return out


def apply_fdr(
    comparisons: Sequence[GroupComparison], alpha: float = 0.05
) -> tuple[list[GroupComparison], FdrResult]:
    """Mark each comparison's FDR decision (BH over the full p-vector)."""
    result = bh_fdr([c.p for c in comparisons], alpha=alpha)
    marked = [
        replace(c, significant_fdr=rej)
        for c, rej in zip(comparisons, result.rejected)
    ]
    return marked, result


def prune_complements(
    comparisons: Sequence[GroupComparison], schema: TaskSchema
) -> PruneResult:
    """Drop the non-primary query of every 2-query task from a report.

    Tasks with three or more queries are untouched. Idempotent: surviving
    rows are all report-primary or multi-query, so a second pass drops
    nothing.
    """
    kept: list[GroupComparison] = []
    dropped: list[str] = []
    for comp in comparisons:
        slot = schema.slot_of(comp.feature_id)
        if slot.task.n_queries == 2:
            query = next(q for q in slot.task.queries if q.id == comp.feature_id)
            if not query.report_primary:
                dropped.append(comp.feature_id)
                continue
        kept.append(comp)
    return PruneResult(kept=tuple(kept), dropped_ids=tuple(dropped))


def full_sample_regression(
    users: Sequence[UserVector],
    feature_ids: Sequence[str],
    schema: TaskSchema,
    l2_lambda: float = 0.0,
    standardize: bool = False,
) -> RegressionTable:
    """Multiple logistic regression of the label on the selected features.

    Features enter simultaneously, in schema column order. ``standardize``
    optionally z-scores each feature first (coefficients then refer to
    per-SD changes); the default is the raw probability scale.
    """
    if len(set(feature_ids)) < 2:
        raise ValueError("select at least 2 distinct features for the regression")
    design = build_design_matrix(users, schema)
    col = {cid: j for j, cid in enumerate(design.column_ids)}
    missing = [f for f in feature_ids if f not in col]
    if missing:
        raise ValueError(f"unknown feature id(s): {missing}")
    selected = sorted(set(feature_ids), key=lambda f: col[f])
    X = design.X[:, [col[f] for f in selected]]
    if standardize:
        sd = X.std(axis=0, ddof=1)
        if np.any(sd == 0.0):
            flat = [selected[j] for j in np.nonzero(sd == 0.0)[0]]
            raise ValueError(f"cannot standardize constant feature(s): {flat}")
        X = (X - X.mean(axis=0)) / sd

    model = glm.fit_irls(X, design.y, l2_lambda=l2_lambda, column_ids=selected)
    if model.fit.separation_detected:
        raise glm.SingularInformationError(
            "full-sample regression did not converge: separation detected"
        )
    model.standard_errors = glm.standard_errors(model, X)
    wald, p = glm.wald_stats(model)
    rows = tuple(
        RegressionRow(
            feature_id=fid,
            beta=float(model.coefficients[j]),
            std_error=float(model.standard_errors[j + 1]),
            wald_chi2=float(wald[j + 1]),
            p=float(p[j + 1]),
        )
        for j, fid in enumerate(selected)
    )
    return RegressionTable(
        rows=rows,
        intercept=model.intercept,
        intercept_se=float(model.standard_errors[0]),
        diagnostics=model.fit,
    )


def write_feature_report_csv(
    path,
    comparisons: Sequence[GroupComparison],
    regression: RegressionTable | None,
) -> None:
    """Write the combined per-feature report (t-test, FDR, regression columns).

    Regression columns are left empty for features that did not enter the
    regression.
    """
    reg = {row.feature_id: row for row in (regression.rows if regression else ())}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["feature_id", "mean_pos", "sd_pos", "mean_neg", "sd_neg",
             "t", "p", "fdr_significant", "beta", "se", "wald", "p_wald"]
        )
        for comp in comparisons:
            row = [
                comp.feature_id,
                repr(comp.mean_pos), repr(comp.sd_pos),
                repr(comp.mean_neg), repr(comp.sd_neg),
                repr(comp.t), repr(comp.p),
                int(comp.significant_fdr),
            ]
            if comp.feature_id in reg:
                r = reg[comp.feature_id]
                row += [repr(r.beta), repr(r.std_error), repr(r.wald_chi2), repr(r.p)]
            else:
                row += ["", "", "", ""]
            writer.writerow(row)
