"""Linear state-value baseline on degree-2 polynomial features."""

from __future__ import annotations

import numpy as np


def poly2(X: np.ndarray) -> np.ndarray:
    """Bias, linear terms and all degree-2 monomials (i <= j)."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    iu, ju = np.triu_indices(d)
    return np.concatenate([np.ones((n, 1)), X, X[:, iu] * X[:, ju]], axis=1)


class ValueBaseline:
    """Ridge-regularized least squares, solved in closed form.

    The ridge term keeps the normal equations well conditioned, so fitting
    never diverges even with duplicated or constant feature columns.
    """

    def __init__(self, reg: float = 1e-2):
        self.reg = float(reg)
        self.weights: np.ndarray | None = None

    @staticmethod
    def features(X: np.ndarray, time_frac: np.ndarray | None = None) -> np.ndarray:
        if time_frac is not None:
            X = np.concatenate([X, np.asarray(time_frac, dtype=np.float64).reshape(-1, 1)], axis=1)
        return poly2(X)

    def fit(self, phi: np.ndarray, targets: np.ndarray) -> "ValueBaseline":
        A = phi.T @ phi + self.reg * np.eye(phi.shape[1])
        self.weights = np.linalg.solve(A, phi.T @ np.asarray(targets, dtype=np.float64))
        return self

    def predict(self, phi: np.ndarray) -> np.ndarray:
        if self.weights is None:
            return np.zeros(phi.shape[0])
        return phi @ self.weights
