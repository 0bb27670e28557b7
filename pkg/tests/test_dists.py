import math

import pytest
from hypothesis import given, strategies as st
from scipy import stats as scipy_stats

from visrisk.dists import chi2_sf_1df, normal_cdf, normal_ppf, t_ppf, t_sf

# Frozen quantiles used across the reporting layer.
T_975_DF999 = 1.9623414611334487
T_975_DF3 = 3.182446305284263


@given(st.floats(min_value=-8, max_value=8))
def test_normal_cdf_matches_scipy(x):
    assert normal_cdf(x) == pytest.approx(scipy_stats.norm.cdf(x), abs=1e-13)


def test_normal_cdf_center_and_tails():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(10.0) == pytest.approx(1.0, abs=1e-12)
    assert normal_cdf(-10.0) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_normal_ppf_roundtrip(p):
    assert normal_cdf(normal_ppf(p)) == pytest.approx(p, abs=1e-12)


def test_normal_ppf_domain():
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ValueError):
            normal_ppf(bad)


@given(st.floats(min_value=0, max_value=60))
def test_chi2_sf_matches_scipy(x):
    assert chi2_sf_1df(x) == pytest.approx(scipy_stats.chi2.sf(x, 1), rel=1e-10, abs=1e-300)


def test_chi2_sf_edge_values():
    assert chi2_sf_1df(0.0) == 1.0
    with pytest.raises(ValueError):
        chi2_sf_1df(-0.5)


def test_t_quantiles_frozen():
    assert t_ppf(0.975, 999) == pytest.approx(T_975_DF999, abs=1e-8)
    assert t_ppf(0.975, 3) == pytest.approx(T_975_DF3, abs=1e-8)


def test_t_large_df_approaches_normal():
    assert t_ppf(0.975, 10**7) == pytest.approx(1.959963985, abs=1e-5)


@given(st.floats(min_value=0.01, max_value=0.99), st.integers(min_value=2, max_value=500))
def test_t_sf_ppf_consistency(q, df):
    x = t_ppf(q, df)
    assert t_sf(x, df) == pytest.approx(1 - q, abs=1e-9)


def test_wald_p_through_normal_identity():
    # chi2 sf at w equals 2*(1 - Phi(sqrt(w)))
    for w in (0.1, 1.0, 2.586, 51.509):
        assert chi2_sf_1df(w) == pytest.approx(2 * (1 - normal_cdf(math.sqrt(w))), rel=1e-12)
