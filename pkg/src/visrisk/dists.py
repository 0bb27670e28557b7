"""Distribution functions shared by model fitting and reporting.

The normal CDF and the 1-df chi-square survival function are computed
directly from ``math.erfc`` (absolute error well below 1e-12), so that the
Wald p-values do not depend on an external library. Student-t quantiles and
tail probabilities, needed for confidence intervals and t-test p-values,
delegate to scipy.
"""

from __future__ import annotations

import math

from scipy import stats as _scipy_stats

_SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF, Phi(x) = erfc(-x / sqrt(2)) / 2."""
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_ppf(p: float) -> float:
    """Standard normal quantile (inverse of :func:`normal_cdf`)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal_ppf requires p in (0, 1), got {p}")
    return float(_scipy_stats.norm.ppf(p))


def chi2_sf_1df(x: float) -> float:
    """Survival function of chi-square with 1 df.

    P(X > x) = 2 * (1 - Phi(sqrt(x))) = erfc(sqrt(x / 2)).
    """
    if x < 0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    return math.erfc(math.sqrt(x / 2.0))


def t_ppf(p: float, df: float) -> float:
    """Student-t quantile."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"t_ppf requires p in (0, 1), got {p}")
    if df <= 0:
        raise ValueError(f"t_ppf requires df > 0, got {df}")
    return float(_scipy_stats.t.ppf(p, df))


def t_sf(x: float, df: float) -> float:
    """Student-t survival function P(T > x)."""
    if df <= 0:
        raise ValueError(f"t_sf requires df > 0, got {df}")
    return float(_scipy_stats.t.sf(x, df))
