"""Polarity classifiers: L1/L2 multinomial logistic and hinge-loss SVMs.

The SVMs solve the dual with simplified SMO (Platt's working-set-of-two
scheme with a random second index): coordinate pairs are optimized until no
KKT violations remain. The intercept is then refit exactly by minimizing the
piecewise-linear hinge sum in b, which pins down the degenerate C -> 0 case
(zero weights, majority class). Logistic models use full-batch proximal
gradient descent from zero initialization, so they are deterministic outright.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

CLASSIFIER_KINDS = ("lasso-logistic", "ridge-logistic", "linear-svm", "rbf-svm")

DEFAULT_HYPERPARAMS = {
    "lasso-logistic": {"C": 1.0},
    "ridge-logistic": {"alpha": 1.0},
    "linear-svm": {"C": 0.1},
    "rbf-svm": {"C": 2.0, "gamma": 0.01},
}


def _linear_kernel(A, B):
    return A @ B.T


def _rbf_kernel(A, B, gamma):
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _resolve_gamma(gamma, X):
    if gamma == "scale":
        var = X.var()
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    return float(gamma)


class _BinarySMO:
    """Two-class soft-margin SVM trained on a precomputed kernel matrix."""

    def __init__(self, C=1.0, tol=1e-3, max_passes=10, max_iter=20000, seed=0):
        self.C = float(C)
        self.tol = tol
        self.max_passes = max_passes
        self.max_iter = max_iter
        self.seed = seed
        self.alpha: np.ndarray | None = None
        self.b = 0.0

    def fit(self, K: np.ndarray, y: np.ndarray) -> "_BinarySMO":
        n = len(y)
        alpha = np.zeros(n)
        b = 0.0
        rng = random.Random(self.seed)
        passes = 0
        iters = 0
        while passes < self.max_passes and iters < self.max_iter:
            iters += 1
            changed = 0
            f = (alpha * y) @ K + b
            for i in range(n):
                Ei = f[i] - y[i]
                if not (
                    (y[i] * Ei < -self.tol and alpha[i] < self.C)
                    or (y[i] * Ei > self.tol and alpha[i] > 0)
                ):
                    continue
                j = rng.randrange(n - 1)
                j = j if j < i else j + 1
                Ej = f[j] - y[j]
                ai_old, aj_old = alpha[i], alpha[j]
                if y[i] != y[j]:
                    lo, hi = max(0.0, aj_old - ai_old), min(self.C, self.C + aj_old - ai_old)
                else:
                    lo, hi = max(0.0, ai_old + aj_old - self.C), min(self.C, ai_old + aj_old)
                if lo >= hi:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0:
                    continue
                aj = np.clip(aj_old - y[j] * (Ei - Ej) / eta, lo, hi)
                if abs(aj - aj_old) < 1e-7 * (aj + aj_old + 1e-7):
                    continue
                ai = ai_old + y[i] * y[j] * (aj_old - aj)
                b1 = b - Ei - y[i] * (ai - ai_old) * K[i, i] - y[j] * (aj - aj_old) * K[i, j]
                b2 = b - Ej - y[i] * (ai - ai_old) * K[i, j] - y[j] * (aj - aj_old) * K[j, j]
                if 0 < ai < self.C:
                    b = b1
                elif 0 < aj < self.C:
                    b = b2
                else:
                    b = 0.5 * (b1 + b2)
                alpha[i], alpha[j] = ai, aj
                f = (alpha * y) @ K + b
                changed += 1
            passes = passes + 1 if changed == 0 else 0
        self.alpha = alpha
        # Exact 1-D refit of the intercept against the hinge objective.
        f0 = (alpha * y) @ K
        self.b = _optimal_intercept(f0, y)
        return self

    def decision(self, K_test: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (self.alpha * y) @ K_test + self.b


def _optimal_intercept(f0: np.ndarray, y: np.ndarray) -> float:
    """Minimize sum_i max(0, 1 - y_i (f0_i + b)) over b.

    The objective is convex piecewise-linear with breakpoints b = y_i - f0_i;
    the midpoint of the optimal breakpoint interval is returned, which centers
    the separating interval on separable data.
    """
    bps = np.sort(y - f0)
    costs = np.array([np.maximum(0.0, 1.0 - y * (f0 + b)).sum() for b in bps])
    best = costs.min()
    opt = bps[costs <= best + 1e-12]
    return float(0.5 * (opt[0] + opt[-1]))


class _OvrSVM:
    def __init__(self, classes, kernel, gamma, C, seed):
        self.classes = classes
        self.kernel = kernel
        self.gamma = gamma
        self.C = C
        self.seed = seed
        self.X_train: np.ndarray | None = None
        self._machines: list[tuple[_BinarySMO, np.ndarray]] = []

    def _gram(self, A, B):
        if self.kernel == "rbf":
            return _rbf_kernel(A, B, self.gamma)
        return _linear_kernel(A, B)

    def fit(self, X, y):
        self.X_train = X
        K = self._gram(X, X)
        for k, cls in enumerate(self.classes):
            y_bin = np.where(y == cls, 1.0, -1.0)
            smo = _BinarySMO(C=self.C, seed=self.seed + k).fit(K, y_bin)
            self._machines.append((smo, y_bin))
        return self

    def decision(self, X):
        K_test = self._gram(self.X_train, X)
        return np.stack([m.decision(K_test, yb) for m, yb in self._machines], axis=1)


class _MultinomialLogistic:
    """Softmax regression, objective sum_i CE_i + penalty (bias unpenalized).

    lasso: penalty = (1/C) * |W|_1 via proximal soft-thresholding.
    ridge: penalty = (alpha/2) * |W|_2^2 via plain gradient steps.
    """

    def __init__(self, classes, penalty, reg, max_iter=2000, grad_tol=1e-9):
        self.classes = classes
        self.penalty = penalty
        self.reg = float(reg)
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.W: np.ndarray | None = None

    @staticmethod
    def _softmax(Z):
        Z = Z - Z.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True)

    def fit(self, X, y):
        n, p = X.shape
        Xb = np.hstack([X, np.ones((n, 1))])
        Y = np.zeros((n, len(self.classes)))
        for k, cls in enumerate(self.classes):
            Y[y == cls, k] = 1.0
        W = np.zeros((p + 1, len(self.classes)))
        # Lipschitz bound for the softmax CE gradient: 0.5 * lambda_max(Xb^T Xb).
        v = np.ones(p + 1)
        G = Xb.T @ Xb
        for _ in range(60):
            v = G @ v
            v /= np.linalg.norm(v)
        lam_max = float(v @ G @ v)
        step = 1.0 / (0.5 * lam_max + (self.reg if self.penalty == "l2" else 0.0) + 1e-12)
        for _ in range(self.max_iter):
            P = self._softmax(Xb @ W)
            grad = Xb.T @ (P - Y)
            if self.penalty == "l2":
                grad[:-1] += self.reg * W[:-1]
                W_new = W - step * grad
            else:
                W_new = W - step * grad
                thresh = step * self.reg
                W_new[:-1] = np.sign(W_new[:-1]) * np.maximum(np.abs(W_new[:-1]) - thresh, 0.0)
            if np.max(np.abs(W_new - W)) < self.grad_tol:
                W = W_new
                break
            W = W_new
        self.W = W
        return self

    def decision(self, X):
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        return Xb @ self.W


@dataclass
class ClassifierModel:
    kind: str
    classes: tuple[str, ...]
    _impl: object
    _center: np.ndarray
    _scale: np.ndarray

    def decision_values(self, X) -> np.ndarray:
        X = (np.asarray(X, dtype=np.float64) - self._center) / self._scale
        return self._impl.decision(X)

    def predict(self, X) -> list[str]:
        scores = self.decision_values(X)
        return [self.classes[k] for k in np.argmax(scores, axis=1)]


def train_classifier(X, y, kind: str, seed: int = 0, **hyperparams) -> ClassifierModel:
    """Fit one of the four polarity classifiers; deterministic given seed.

    Features are standardized per column on the training set (the stated
    hyperparameter defaults presume unit-scale inputs); the scaler is part of
    the model.
    """
    if kind not in CLASSIFIER_KINDS:
        raise ValueError(f"unknown classifier kind: {kind!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object)
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise ValueError(f"training data has a single class: {classes}")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    X = (X - center) / scale
    params = dict(DEFAULT_HYPERPARAMS[kind])
    params.update(hyperparams)
    if kind == "lasso-logistic":
        impl = _MultinomialLogistic(classes, "l1", reg=1.0 / params["C"]).fit(X, y)
    elif kind == "ridge-logistic":
        impl = _MultinomialLogistic(classes, "l2", reg=params["alpha"]).fit(X, y)
    elif kind == "linear-svm":
        impl = _OvrSVM(classes, "linear", None, params["C"], seed).fit(X, y)
    else:
        gamma = _resolve_gamma(params["gamma"], X)
        impl = _OvrSVM(classes, "rbf", gamma, params["C"], seed).fit(X, y)
    return ClassifierModel(kind=kind, classes=classes, _impl=impl,
                           _center=center, _scale=scale)


def kfold_indices(n: int, folds: int, seed: int = 0) -> list[np.ndarray]:
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    return [np.array(idx[i::folds], dtype=int) for i in range(folds)]


def grid_search(
    X, y, kind: str, param_grid: list[dict], folds: int = 5, seed: int = 0
) -> tuple[dict, float]:
    """Pick hyperparameters by k-fold cross-validated weighted F1."""
    from .analytics import evaluate_weighted_prf

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object)
    fold_idx = kfold_indices(len(y), folds, seed)
    best: tuple[float, int, dict] | None = None
    for pi, params in enumerate(param_grid):
        scores = []
        for k in range(folds):
            test = fold_idx[k]
            train = np.concatenate([fold_idx[j] for j in range(folds) if j != k])
            if len(set(y[train])) < 2 or len(test) == 0:
                continue
            model = train_classifier(X[train], y[train], kind, seed=seed, **params)
            pred = model.predict(X[test])
            scores.append(evaluate_weighted_prf(pred, list(y[test]))[2])
        if not scores:
            continue
        mean = float(np.mean(scores))
        # Ties keep the earliest grid entry.
        if best is None or mean > best[0] + 1e-12:
            best = (mean, pi, params)
    if best is None:
        raise ValueError("grid search found no feasible fold split")
    return dict(best[2]), best[0]
