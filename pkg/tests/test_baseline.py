import numpy as np
import pytest

from relprop.baseline import (
    L1LogisticRegression,
    logistic_objective,
    logreg_predict,
    logreg_train,
    soft_threshold,
)
from relprop.errors import NonFiniteFeatures, ShapeMismatch


def seeded_dataset(seed, n=40, d=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, size=(n, d))
    w_true = rng.normal(0, 2, size=d)
    logits = X @ w_true + rng.normal(0, 0.5, size=n)
    y = (logits > 0).astype(float)
    return X, y


def grid_refine_oracle(X, y, l1_strength, rounds=9, width=8.0, points=13):
    """Global optimum by iterative dense grid refinement over (w1, w2, b).

    The objective is convex, so shrinking a bracketing grid around the best
    point converges to the optimum; independent of the proximal solver.
    """
    center = np.zeros(3)
    for _ in range(rounds):
        axes = [np.linspace(c - width / 2, c + width / 2, points) for c in center]
        W1, W2, B = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([W1.ravel(), W2.ravel(), B.ravel()], axis=1)
        z = cand[:, :2] @ X.T + cand[:, 2:3]
        nll = (np.logaddexp(0.0, z) - y[None, :] * z).mean(axis=1)
        obj = nll + l1_strength * np.abs(cand[:, :2]).sum(axis=1)
        best = cand[int(np.argmin(obj))]
        center = best
        width *= 2.5 / (points - 1)
    return float(
        logistic_objective(center[:2], center[2], X, y, l1_strength)
    )


def test_soft_threshold():
    x = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert np.allclose(soft_threshold(x, 1.0), [-2.0, 0.0, 0.0, 0.0, 2.0])


def test_separable_data_perfect_accuracy_without_penalty():
    X = np.array([[-1.0], [1.0]])
    y = np.array([0.0, 1.0])
    fit = logreg_train(X, y, l1_strength=0.0, max_iters=10000)
    labels, _ = logreg_predict(fit, X)
    assert labels.tolist() == [0, 1]


def test_strong_penalty_gives_exactly_zero_weights():
    X, y = seeded_dataset(0)
    # soft-thresholding kills every step when the penalty dominates the
    # largest possible coordinate gradient (residuals are bounded by 1)
    bound = np.abs(X).mean(axis=0).max()
    fit = logreg_train(X, y, l1_strength=float(bound) + 0.1, max_iters=2000)
    assert np.array_equal(fit.weights, np.zeros(2))


@pytest.mark.parametrize("seed", range(3))
def test_objective_matches_grid_oracle(seed):
    X, y = seeded_dataset(seed)
    l1 = 0.05
    fit = logreg_train(X, y, l1_strength=l1, max_iters=10000)
    reference = grid_refine_oracle(X, y, l1)
    assert fit.objective <= reference + 1e-6
    assert abs(fit.objective - reference) <= 1e-6


def test_objective_monotone_nonincreasing():
    X, y = seeded_dataset(5, n=60, d=3)
    fit = logreg_train(X, y, l1_strength=0.02, max_iters=400, record_objective=True)
    diffs = np.diff(fit.trace)
    assert (diffs <= 1e-14).all()


def test_l1_path_sparsity_monotone():
    X, y = seeded_dataset(7, n=50, d=6)
    strengths = [0.001, 0.01, 0.05, 0.1, 0.5]
    nonzeros = [
        int((np.abs(logreg_train(X, y, s, max_iters=5000).weights) > 0).sum())
        for s in strengths
    ]
    assert all(a >= b for a, b in zip(nonzeros, nonzeros[1:]))


def test_predict_zero_model_scores_half_label_one():
    fit = logreg_train(np.array([[0.0]]), np.array([1.0]), l1_strength=10.0, max_iters=1)
    labels, scores = logreg_predict(
        type(fit)(weights=np.zeros(1), intercept=0.0, n_iter=0, objective=0.0),
        np.array([[3.0], [-3.0]]),
    )
    assert np.allclose(scores, 0.5)
    assert labels.tolist() == [1, 1]


def test_predict_negative_intercept_saturates_to_zero():
    from relprop.baseline import LogregFit

    fit = LogregFit(weights=np.zeros(2), intercept=-20.0, n_iter=0, objective=0.0)
    labels, scores = logreg_predict(fit, np.random.default_rng(0).normal(0, 1, (5, 2)))
    assert labels.tolist() == [0] * 5
    assert scores.max() < 1e-8


def test_shape_mismatch():
    from relprop.baseline import LogregFit

    fit = LogregFit(weights=np.zeros(2), intercept=0.0, n_iter=0, objective=0.0)
    with pytest.raises(ShapeMismatch):
        logreg_predict(fit, np.zeros((3, 5)))


def test_non_finite_features_rejected():
    X = np.array([[1.0], [np.inf]])
    with pytest.raises(NonFiniteFeatures):
        logreg_train(X, np.array([0.0, 1.0]), 0.0)


def test_estimator_wrapper_roundtrip():
    X, y = seeded_dataset(9)
    model = L1LogisticRegression(l1_strength=0.01).fit(X, y)
    direct = logreg_train(X, y, 0.01)
    assert np.array_equal(model.coef_, direct.weights)
    assert model.intercept_ == direct.intercept
    assert (model.predict(X) == logreg_predict(direct, X)[0]).all()
    assert model.get_params()["l1_strength"] == 0.01
