"""k-nearest-neighbour regression with Euclidean, Manhattan or Mahalanobis distance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

METRICS = ("euclidean", "manhattan", "mahalanobis")


@dataclass
class KnnModel:
    k: int
    metric: str
    train_features: np.ndarray
    train_labels: np.ndarray
    inv_cov: Optional[np.ndarray] = None


def regularized_covariance(X: np.ndarray, ridge: Optional[float] = None) -> np.ndarray:
    """Sample covariance plus ``ridge * I``; default ridge is 1e-6 * trace / d."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    cov = np.cov(X, rowvar=False) if X.shape[0] > 1 else np.zeros((d, d))
    cov = np.atleast_2d(cov)
    if ridge is None:
        ridge = 1e-6 * np.trace(cov) / d
        if ridge <= 0:
            ridge = 1e-6
    return cov + ridge * np.eye(d)


def knn_fit(features, labels, k: int, metric: str = "euclidean",
            cov: Optional[np.ndarray] = None, ridge: Optional[float] = None) -> KnnModel:
    """Store the training set; Mahalanobis additionally inverts a ridge-regularized covariance.

    ``cov`` replaces the estimated covariance and is used as given; a ``ridge``
    passed alongside it is added on top.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be (n, d) with one label per row")
    if k < 1 or len(X) < k:
        raise ValueError(f"need at least k={k} training points, got {len(X)}")
    inv_cov = None
    if metric == "mahalanobis":
        if cov is None:
            sigma = regularized_covariance(X, ridge)
        else:
            sigma = np.asarray(cov, dtype=np.float64) + (0.0 if ridge is None else ridge) * np.eye(X.shape[1])
        inv_cov = np.linalg.inv(sigma)
        inv_cov = 0.5 * (inv_cov + inv_cov.T)
    return KnnModel(k, metric, X.copy(), y.copy(), inv_cov)


def distances(model: KnnModel, x) -> np.ndarray:
    diff = model.train_features - np.asarray(x, dtype=np.float64)[None, :]
    if model.metric == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=1))
    if model.metric == "manhattan":
        return np.sum(np.abs(diff), axis=1)
    q = np.einsum("ij,jk,ik->i", diff, model.inv_cov, diff)
    return np.sqrt(np.maximum(q, 0.0))


def neighbours(model: KnnModel, x) -> np.ndarray:
    """Indices of the k nearest training rows; equal distances keep training order."""
    return np.argsort(distances(model, x), kind="stable")[:model.k]


def knn_predict(model: KnnModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(np.mean(model.train_labels[neighbours(model, x)]))
    return np.array([knn_predict(model, row) for row in x])
