"""L1-regularized logistic regression trained by proximal gradient descent.

The objective is mean logistic loss plus l1_strength * ||w||_1 (the intercept
is never penalized). Each iteration takes a plain gradient step followed by
soft-thresholding of the weights; with the step size set to the inverse
Lipschitz constant of the smooth part, the objective is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ShapeMismatch
from .validation import check_finite
from .propagation import sigmoid


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def logistic_objective(w: np.ndarray, intercept: float, X: np.ndarray, y: np.ndarray,
                       l1_strength: float) -> float:
    """Mean logistic negative log-likelihood plus the L1 penalty on w."""
    z = X @ w + intercept
    # log(1 + exp(z)) - y*z, computed stably for large |z|
    nll = np.logaddexp(0.0, z) - y * z
    return float(nll.mean() + l1_strength * np.abs(w).sum())


@dataclass
class LogregFit:
    weights: np.ndarray
    intercept: float
    n_iter: int
    objective: float
    trace: Optional[np.ndarray] = None


def logreg_train(
    features: np.ndarray,
    labels: np.ndarray,
    l1_strength: float,
    max_iters: int = 10000,
    tol: float = 1e-8,
    record_objective: bool = False,
) -> LogregFit:
    """Fit weights and intercept by proximal gradient descent.

    Stops when the parameter change infinity-norm drops below ``tol`` or
    after ``max_iters`` iterations. Raises :class:`NonFiniteFeatures` for
    non-finite inputs.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {X.shape} do not match {y.shape[0]} labels")
    check_finite("features", X)
    check_finite("labels", y)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if l1_strength < 0:
        raise ValueError("l1_strength must be nonnegative")

    n, d = X.shape
    Z = np.hstack([X, np.ones((n, 1))])
    # Lipschitz constant of the mean logistic gradient: lambda_max(Z^T Z) / (4n).
    lipschitz = float(np.linalg.eigvalsh(Z.T @ Z).max()) / (4.0 * n)
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    w = np.zeros(d)
    intercept = 0.0
    trace = [] if record_objective else None
    if record_objective:
        trace.append(logistic_objective(w, intercept, X, y, l1_strength))
    it = 0
    for it in range(1, max_iters + 1):
        residual = sigmoid(X @ w + intercept) - y
        grad_w = X.T @ residual / n
        grad_b = float(residual.mean())
        w_new = soft_threshold(w - step * grad_w, step * l1_strength)
        b_new = intercept - step * grad_b
        delta = max(float(np.abs(w_new - w).max(initial=0.0)), abs(b_new - intercept))
        w, intercept = w_new, b_new
        if record_objective:
            trace.append(logistic_objective(w, intercept, X, y, l1_strength))
        if delta < tol:
            break
    return LogregFit(
        weights=w,
        intercept=intercept,
        n_iter=it,
        objective=logistic_objective(w, intercept, X, y, l1_strength),
        trace=np.array(trace) if record_objective else None,
    )


def logreg_predict(fit: LogregFit, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores sigma(w.x + intercept) and binary labels at the 0.5 threshold."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != fit.weights.shape[0]:
        raise ShapeMismatch(
            f"features have {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {fit.weights.shape[0]}"
        )
    scores = sigmoid(X @ fit.weights + fit.intercept)
    return (scores >= 0.5).astype(np.int8), scores


class L1LogisticRegression(BaseEstimator, ClassifierMixin):
    """Sklearn-style wrapper around the proximal-gradient trainer."""

    def __init__(self, l1_strength: float = 0.01, max_iters: int = 10000, tol: float = 1e-8):
        self.l1_strength = l1_strength
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y) -> "L1LogisticRegression":
        fit = logreg_train(X, y, self.l1_strength, max_iters=self.max_iters, tol=self.tol)
        self.coef_ = fit.weights
        self.intercept_ = fit.intercept
        self.n_iter_ = fit.n_iter
        self.objective_ = fit.objective
        return self

    def _fit(self) -> LogregFit:
        if not hasattr(self, "coef_"):
            raise RuntimeError("model is not fitted; call fit first")
        return LogregFit(weights=self.coef_, intercept=self.intercept_,
                         n_iter=self.n_iter_, objective=self.objective_)

    def decision_function(self, X) -> np.ndarray:
        _, scores = logreg_predict(self._fit(), X)
        return scores

    def predict(self, X) -> np.ndarray:
        labels, _ = logreg_predict(self._fit(), X)
        return labels
