import json
import math

import numpy as np
import pytest

from visrisk.dists import chi2_sf_1df
from visrisk.glm import (
    SingularInformationError,
    fit_irls,
    loglik_gradient,
    model_to_json,
    penalized_loglik,
    predict_proba,
    standard_errors,
    wald_stats,
)

# 2x2 design: x=0 has 10 pos / 10 neg, x=1 has 15 pos / 5 neg. Closed form:
# beta = log odds ratio = ln 3, intercept = ln(10/10) = 0,
# SE(beta) = sqrt(1/10 + 1/10 + 1/15 + 1/5).
TWO_BY_TWO_X = np.array([[0.0]] * 20 + [[1.0]] * 20)
TWO_BY_TWO_Y = np.array([1] * 10 + [0] * 10 + [1] * 15 + [0] * 5)
SE_CLOSED_FORM = math.sqrt(1 / 10 + 1 / 10 + 1 / 15 + 1 / 5)


def random_instance(rng, n=None, d=None):
    n = n or int(rng.integers(20, 50))
    d = d or int(rng.integers(1, 8))
    X = rng.normal(size=(n, d))
    beta = rng.normal(size=d)
    p = 1 / (1 + np.exp(-(X @ beta + rng.normal() * 0.3)))
    y = (rng.uniform(size=n) < p).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


class TestFit:
    def test_intercept_only_balanced(self):
        X = np.empty((20, 0))
        y = np.array([0, 1] * 10, dtype=float)
        model = fit_irls(X, y)
        assert model.fit.converged
        assert model.intercept == pytest.approx(0.0, abs=1e-8)

    def test_two_by_two_closed_form(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        assert model.fit.converged
        assert model.coefficients[0] == pytest.approx(math.log(3), abs=1e-6)
        assert model.intercept == pytest.approx(0.0, abs=1e-6)

    def test_separation_detected_without_hanging(self):
        X = np.linspace(-1, 1, 30).reshape(-1, 1)
        y = (X[:, 0] > 0).astype(float)
        model = fit_irls(X, y)
        assert model.fit.separation_detected
        assert not model.fit.converged

    def test_ridge_tames_separable_data(self):
        X = np.linspace(-1, 1, 30).reshape(-1, 1)
        y = (X[:, 0] > 0).astype(float)
        model = fit_irls(X, y, l2_lambda=1.0)
        assert model.fit.converged
        assert not model.fit.separation_detected
        assert abs(model.coefficients[0]) < 50

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="single class"):
            fit_irls(np.zeros((5, 1)), np.ones(5))

    def test_nan_rejected(self):
        X = np.zeros((6, 1))
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            fit_irls(X, np.array([0, 1, 0, 1, 0, 1]))

    def test_monotone_penalized_loglik_trace(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            X, y = random_instance(rng)
            model = fit_irls(X, y)
            trace = model.fit.ll_trace
            for prev, cur in zip(trace, trace[1:]):
                assert cur >= prev - 1e-12 * (1 + abs(prev))

    def test_score_equation_at_mle(self):
        rng = np.random.default_rng(4)
        for _ in range(8):
            X, y = random_instance(rng)
            model = fit_irls(X, y)
            if not model.fit.converged:
                continue
            p = predict_proba(model, X)
            assert abs(float(np.sum(y - p))) <= 1e-6

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(20):
            X, y = random_instance(rng)
            lam = float(rng.choice([0.0, 0.5]))
            beta = rng.normal(size=X.shape[1] + 1) * 0.5
            grad = loglik_gradient(X, y, beta, lam)
            for k in range(beta.size):
                e = np.zeros_like(beta)
                e[k] = h
                fd = (
                    penalized_loglik(X, y, beta + e, lam)
                    - penalized_loglik(X, y, beta - e, lam)
                ) / (2 * h)
                denom = max(1.0, abs(grad[k]))
                assert abs(grad[k] - fd) / denom < 1e-5

    def test_scaling_equivariance(self):
        rng = np.random.default_rng(6)
        X, y = random_instance(rng, n=80, d=4)
        c = 3.7
        base = fit_irls(X, y, compute_se=True)
        Xs = X.copy()
        Xs[:, 2] *= c
        scaled = fit_irls(Xs, y, compute_se=True)
        assert scaled.coefficients[2] == pytest.approx(base.coefficients[2] / c, abs=1e-8)
        p_base = predict_proba(base, X)
        p_scaled = predict_proba(scaled, Xs)
        np.testing.assert_allclose(p_base, p_scaled, atol=1e-8)
        w_base, _ = wald_stats(base)
        w_scaled, _ = wald_stats(scaled)
        np.testing.assert_allclose(w_base, w_scaled, atol=1e-6)

    def test_matches_gradient_descent_oracle(self):
        # plain fixed-step ascent, bounded at 1e6 iterations, independent of IRLS
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            X, y = random_instance(rng, n=60, d=3)
            model = fit_irls(X, y)
            Xa = np.hstack([np.ones((60, 1)), X])
            beta = np.zeros(4)
            step = 0.5 / 60
            for _ in range(10**6):
                p = 1 / (1 + np.exp(-(Xa @ beta)))
                g = Xa.T @ (y - p)
                beta += step * g
                if np.abs(g).max() < 1e-10:
                    break
            np.testing.assert_allclose(
                np.concatenate(([model.intercept], model.coefficients)),
                beta,
                atol=1e-4,
            )

    def test_column_id_mismatch(self):
        with pytest.raises(ValueError, match="column ids"):
            fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y, column_ids=("a", "b"))


class TestPredict:
    def test_zero_model_gives_half(self):
        model = fit_irls(np.empty((20, 0)), np.array([0, 1] * 10, dtype=float))
        X = np.empty((3, 0))
        np.testing.assert_allclose(predict_proba(model, X), 0.5, atol=1e-8)

    def test_sigma_of_log3(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        p = predict_proba(model, np.array([[1.0]]))
        assert p[0] == pytest.approx(0.75, abs=1e-6)

    def test_monotone_in_positive_coefficient(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        grid = np.linspace(-2, 2, 9).reshape(-1, 1)
        p = predict_proba(model, grid)
        assert np.all(np.diff(p) > 0)

    def test_dimension_mismatch(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        with pytest.raises(ValueError):
            predict_proba(model, np.zeros((2, 3)))


class TestStandardErrors:
    def test_two_by_two_closed_form(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        se = standard_errors(model, TWO_BY_TWO_X)
        assert se[1] == pytest.approx(SE_CLOSED_FORM, abs=1e-4)

    def test_duplicate_column_is_singular(self):
        rng = np.random.default_rng(7)
        X, y = random_instance(rng, n=50, d=2)
        X = np.hstack([X, X[:, :1]])
        model = fit_irls(X, y, max_iter=25)
        model.fit.converged = True  # force the SE path; rank deficiency decides
        with pytest.raises(SingularInformationError, match="condition"):
            standard_errors(model, X)

    def test_se_scales_inversely_with_column(self):
        rng = np.random.default_rng(8)
        X, y = random_instance(rng, n=90, d=3)
        c = 5.0
        base = fit_irls(X, y)
        se_base = standard_errors(base, X)
        Xs = X.copy()
        Xs[:, 1] *= c
        scaled = fit_irls(Xs, y)
        se_scaled = standard_errors(scaled, Xs)
        assert se_scaled[2] == pytest.approx(se_base[2] / c, rel=1e-6)

    def test_penalized_fit_refused(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y, l2_lambda=0.1)
        with pytest.raises(ValueError, match="penalized"):
            standard_errors(model, TWO_BY_TWO_X)


class TestWald:
    def test_two_by_two_value(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y, compute_se=True)
        wald, p = wald_stats(model)
        expected = (math.log(3) / SE_CLOSED_FORM) ** 2
        assert wald[1] == pytest.approx(expected, abs=1e-3)
        assert expected == pytest.approx(2.586, abs=2e-3)
        assert p[1] == pytest.approx(chi2_sf_1df(wald[1]), rel=1e-12)

    def test_zero_beta_gives_p_one(self):
        model = fit_irls(np.empty((20, 0)), np.array([0, 1] * 10, dtype=float),
                         compute_se=True)
        wald, p = wald_stats(model)
        assert wald[0] == pytest.approx(0.0, abs=1e-12)
        assert p[0] == pytest.approx(1.0, abs=1e-6)

    def test_requires_standard_errors(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y)
        with pytest.raises(ValueError, match="standard errors"):
            wald_stats(model)


class TestModelDump:
    def test_stable_json_roundtrip(self):
        model = fit_irls(TWO_BY_TWO_X, TWO_BY_TWO_Y, column_ids=("exposure",),
                         compute_se=True)
        text = model_to_json(model)
        assert text == model_to_json(model)
        doc = json.loads(text)
        assert list(doc) == [
            "intercept", "coefficients", "l2_lambda", "standard_errors", "diagnostics",
        ]
        assert doc["coefficients"]["exposure"] == pytest.approx(math.log(3), abs=1e-6)
        assert doc["diagnostics"]["converged"] is True
