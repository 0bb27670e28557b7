"""Binary logistic regression: Newton-IRLS maximum likelihood and inference.

The fit maximizes the (optionally ridge-penalized) log-likelihood

    l(b) = sum_i [ y_i * log s(eta_i) + (1 - y_i) * log(1 - s(eta_i)) ]
           - (lambda / 2) * ||b_features||^2

with eta = b0 + X b, by full Newton steps with step-halving, which makes the
penalized log-likelihood non-decreasing across accepted steps. The intercept
is always included and never penalized. Standard errors come from the
inverse observed Fisher information at the fit; Wald chi-square statistics
are (b_j / SE_j)^2 against a 1-df chi-square.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dists import chi2_sf_1df

__all__ = [
    "FitDiagnostics",
    "LogisticModel",
    "SingularInformationError",
    "fit_irls",
    "predict_proba",
    "standard_errors",
    "wald_stats",
    "penalized_loglik",
    "loglik_gradient",
    "model_to_json",
    "save_model",
]

_MAX_HALVINGS = 30
# Separation triggers at lambda = 0: every residual below _SEPARATION_RESID_TOL
# means the deviance has collapsed to numerically zero (complete separation);
# the beta bound stops the quasi-complete case, where some boundary points keep
# a constant likelihood contribution while the coefficients diverge. The bound
# is generous so that legitimately tiny-scale columns (beta ~ 1/scale) do not
# trip it.
_SEPARATION_BETA_BOUND = 1e6
_SEPARATION_RESID_TOL = 1e-6


class SingularInformationError(RuntimeError):
    """Observed information matrix is numerically singular."""


@dataclass
class FitDiagnostics:
    converged: bool
    iterations: int
    final_gradient_norm: float
    log_likelihood: float
    separation_detected: bool = False
    ll_trace: tuple[float, ...] = ()


@dataclass
class LogisticModel:
    intercept: float
    coefficients: np.ndarray
    column_ids: tuple[str, ...]
    l2_lambda: float
    fit: FitDiagnostics
    standard_errors: np.ndarray | None = None  # [intercept, *features]

    @property
    def beta_full(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.coefficients))


def _augment(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _log_sigmoid(eta: np.ndarray) -> np.ndarray:
    # log s(eta) = -softplus(-eta), stable for large |eta|
    return -np.logaddexp(0.0, -eta)


def penalized_loglik(X: np.ndarray, y: np.ndarray, beta_full: np.ndarray,
                     l2_lambda: float = 0.0) -> float:
    """Penalized Bernoulli log-likelihood at ``beta_full = [b0, b]``."""
    Xa = _augment(X)
    eta = Xa @ beta_full
    ll = float(np.sum(y * _log_sigmoid(eta) + (1.0 - y) * _log_sigmoid(-eta)))
    if l2_lambda:
        ll -= 0.5 * l2_lambda * float(np.sum(beta_full[1:] ** 2))
    return ll


def loglik_gradient(X: np.ndarray, y: np.ndarray, beta_full: np.ndarray,
                    l2_lambda: float = 0.0) -> np.ndarray:
    """Analytic gradient of :func:`penalized_loglik` w.r.t. ``beta_full``."""
    Xa = _augment(X)
    p = _sigmoid(Xa @ beta_full)
    grad = Xa.T @ (y - p)
    if l2_lambda:
        grad[1:] -= l2_lambda * beta_full[1:]
    return grad


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _validate_inputs(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y length {y.shape} does not match X rows {X.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("y must be binary (0/1)")
    if y.min() == y.max():
        raise ValueError("y contains a single class; logistic fit is undefined")
    return X, y


def fit_irls(
    X: np.ndarray,
    y: np.ndarray,
    l2_lambda: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-8,
    column_ids: Sequence[str] | None = None,
    compute_se: bool = False,
) -> LogisticModel:
    """Fit by Newton-IRLS with step-halving line search.

    Stops when the gradient infinity-norm drops to ``tol`` or after
    ``max_iter`` iterations. At ``l2_lambda = 0``, quasi-complete separation
    (deviance collapsing toward zero with diverging coefficients) is
    detected and reported via ``fit.separation_detected`` on a non-converged
    model instead of looping forever.
    """
    X, y = _validate_inputs(X, y)
    if l2_lambda < 0:
        raise ValueError(f"l2_lambda must be >= 0, got {l2_lambda}")
    n, d = X.shape
    ids = tuple(column_ids) if column_ids is not None else tuple(
        f"x{j}" for j in range(d)
    )
    if len(ids) != d:
        raise ValueError(f"{len(ids)} column ids for {d} features")

    Xa = _augment(X)
    penalty_diag = np.full(d + 1, l2_lambda)
    penalty_diag[0] = 0.0

    beta = np.zeros(d + 1)
    ll = penalized_loglik(X, y, beta, l2_lambda)
    trace = [ll]
    converged = False
    separation = False
    grad_norm = np.inf
    iterations = 0

    for iterations in range(1, max_iter + 1):
        p = _sigmoid(Xa @ beta)
        grad = Xa.T @ (y - p) - penalty_diag * beta
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= tol:
            converged = True
            iterations -= 1
            break

        w = p * (1.0 - p)
        hess = Xa.T @ (Xa * w[:, None]) + np.diag(penalty_diag)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, grad, rcond=None)

        # Backtrack until the penalized log-likelihood does not decrease.
        accepted = False
        scale = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            candidate = beta + scale * step
            ll_new = penalized_loglik(X, y, candidate, l2_lambda)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                beta, ll = candidate, ll_new
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # stalled; gradient norm at this point decides convergence
        trace.append(ll)

        if l2_lambda == 0.0:
            p_now = _sigmoid(Xa @ beta)
            fitted_exactly = bool(np.all(np.abs(y - p_now) < _SEPARATION_RESID_TOL))
            if fitted_exactly or float(np.abs(beta).max()) > _SEPARATION_BETA_BOUND:
                separation = True
                grad_norm = float(np.abs(Xa.T @ (y - p_now)).max())
                break

    if not converged and not separation:
        grad = Xa.T @ (y - _sigmoid(Xa @ beta)) - penalty_diag * beta
        grad_norm = float(np.abs(grad).max())
        converged = grad_norm <= tol

    if not np.all(np.isfinite(beta)) or not np.isfinite(ll):
        raise RuntimeError("logistic fit produced non-finite parameters")

    model = LogisticModel(
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        column_ids=ids,
        l2_lambda=l2_lambda,
        fit=FitDiagnostics(
            converged=converged,
            iterations=iterations,
            final_gradient_norm=grad_norm,
            log_likelihood=ll,
            separation_detected=separation,
            ll_trace=tuple(trace),
        ),
    )
    if compute_se:
        model.standard_errors = standard_errors(model, X)
    return model


def predict_proba(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.coefficients.shape[0]:
        raise ValueError(
            f"X has shape {X.shape}, model expects {model.coefficients.shape[0]} features"
        )
    return _sigmoid(model.intercept + X @ model.coefficients)


def standard_errors(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    """sqrt(diag((Xa' W Xa)^-1)) at the fitted probabilities.

    Only defined for converged, unpenalized fits; the returned vector is
    ordered [intercept, *features]. Raises
    :class:`SingularInformationError` (with a condition estimate) when the
    observed information is rank-deficient, e.g. for duplicated columns.
    """
    if model.l2_lambda != 0.0:
        raise ValueError(
            "standard errors are not defined here for penalized fits "
            f"(l2_lambda={model.l2_lambda})"
        )
    if not model.fit.converged:
        raise ValueError("standard errors require a converged fit")
    p = predict_proba(model, X)
    Xa = _augment(X)
    info = Xa.T @ (Xa * (p * (1.0 - p))[:, None])
    cond = float(np.linalg.cond(info))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularInformationError(
            f"observed information matrix is singular (condition estimate {cond:.3e})"
        )
    cov = np.linalg.inv(info)
    return np.sqrt(np.diag(cov))


def wald_stats(model: LogisticModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-coefficient Wald chi-square and p-value, [intercept, *features].

    wald_j = (beta_j / SE_j)^2; p_j is the 1-df chi-square upper tail,
    evaluated through the complementary normal CDF identity.
    """
    if model.standard_errors is None:
        raise ValueError("model has no standard errors; fit with compute_se=True")
    beta = model.beta_full
    wald = (beta / model.standard_errors) ** 2
    p = np.array([chi2_sf_1df(float(w)) for w in wald])
    return wald, p


def model_to_json(model: LogisticModel) -> str:
    """Stable-order JSON dump of a fitted model."""
    obj = {
        "intercept": model.intercept,
        "coefficients": {
            cid: float(b) for cid, b in zip(model.column_ids, model.coefficients)
        },
        "l2_lambda": model.l2_lambda,
        "standard_errors": (
            None
            if model.standard_errors is None
            else {
                "intercept": float(model.standard_errors[0]),
                **{
                    cid: float(se)
                    for cid, se in zip(model.column_ids, model.standard_errors[1:])
                },
            }
        ),
        "diagnostics": {
            "converged": model.fit.converged,
            "iterations": model.fit.iterations,
            "final_gradient_norm": model.fit.final_gradient_norm,
            "log_likelihood": model.fit.log_likelihood,
            "separation_detected": model.fit.separation_detected,
        },
    }
    return json.dumps(obj, indent=2) + "\n"


def save_model(path, model: LogisticModel) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model))
