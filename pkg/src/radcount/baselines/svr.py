"""Epsilon-insensitive support vector regression solved by SMO.

The dual is written over 2n box-constrained variables ``beta = [alpha, alpha*]``
with signs ``s = [+1..., -1...]``:

    min 1/2 beta' Q beta + p' beta,  Q_tu = s_t s_u K(x_t, x_u),
    p = [eps - y, eps + y],  0 <= beta <= C,  s' beta = 0

Each step optimizes the most violating pair (second-order working set
selection); iteration stops once the KKT gap m(beta) - M(beta) <= tol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

KERNELS = ("linear", "rbf")
TAU = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SvrModel:
    kernel: str
    C: float
    epsilon: float
    gamma: Optional[float]
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha - alpha* for each support vector
    bias: float
    n_iter: int = 0
    kkt_violation: float = 0.0
    alpha: Optional[np.ndarray] = None
    alpha_star: Optional[np.ndarray] = None


def kernel_matrix(A, B, kernel: str, gamma: Optional[float] = None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


def default_gamma(X) -> float:
    """1 / (d * mean per-feature variance)."""
    X = np.asarray(X, dtype=np.float64)
    v = float(np.mean(np.var(X, axis=0)))
    return 1.0 / (X.shape[1] * v) if v > 0 else 1.0


def kkt_gap(beta, grad, sign, C) -> float:
    """m(beta) - M(beta) over the up/low index sets."""
    up = ((sign > 0) & (beta < C)) | ((sign < 0) & (beta > 0))
    low = ((sign > 0) & (beta > 0)) | ((sign < 0) & (beta < C))
    v = -sign * grad
    m = v[up].max() if up.any() else -np.inf
    M = v[low].min() if low.any() else np.inf
    return float(max(m - M, 0.0))


def svr_fit(features, labels, kernel: str = "rbf", C: float = 1.0, epsilon: float = 0.1,
            gamma: Optional[float] = None, tol: float = 1e-3, max_iter: Optional[int] = None) -> SvrModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("SVR needs at least 2 samples")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}, expected one of {KERNELS}")
    if C <= 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    if kernel == "rbf" and gamma is None:
        gamma = default_gamma(X)
    max_iter = max(100_000, 100 * n) if max_iter is None else max_iter

    K = kernel_matrix(X, X, kernel, gamma)
    idx = np.concatenate([np.arange(n), np.arange(n)])
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    QD = K[idx, idx]
    beta = np.zeros(2 * n)
    G = p.copy()

    def q_col(t):
        return sign * sign[t] * K[idx, idx[t]]

    it = 0
    gap = np.inf
    while True:
        up = ((sign > 0) & (beta < C)) | ((sign < 0) & (beta > 0))
        low = ((sign > 0) & (beta > 0)) | ((sign < 0) & (beta < C))
        v = -sign * G
        vu = np.where(up, v, -np.inf)
        i = int(np.argmax(vu))
        gmax = vu[i]
        vl = np.where(low, v, np.inf)
        gap = gmax - vl.min()
        if gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not reach KKT gap {tol} within {max_iter} iterations (gap {gap:.3g})")
        it += 1

        # second-order choice of j among violating members of the low set
        cand = low & (v < gmax)
        grad_diff = gmax - v
        quad = QD[i] + QD - 2.0 * K[idx[i], idx]
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(cand, -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(obj))

        Qi, Qj = q_col(i), q_col(j)
        old_i, old_j = beta[i], beta[j]
        if sign[i] != sign[j]:
            qc = QD[i] + QD[j] + 2.0 * Qi[j]
            qc = qc if qc > 0 else TAU
            delta = (-G[i] - G[j]) / qc
            diff = beta[i] - beta[j]
            bi, bj = beta[i] + delta, beta[j] + delta
            if diff > 0:
                if bj < 0:
                    bj, bi = 0.0, diff
            elif bi < 0:
                bi, bj = 0.0, -diff
            if diff > 0:
                if bi > C:
                    bi, bj = C, C - diff
            elif bj > C:
                bj, bi = C, C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * Qi[j]
            qc = qc if qc > 0 else TAU
            delta = (G[i] - G[j]) / qc
            total = beta[i] + beta[j]
            bi, bj = beta[i] - delta, beta[j] + delta
            if total > C:
                if bi > C:
                    bi, bj = C, total - C
            elif bj < 0:
                bj, bi = 0.0, total
            if total > C:
                if bj > C:
                    bj, bi = C, total - C
            elif bi < 0:
                bi, bj = 0.0, total
        beta[i], beta[j] = bi, bj
        G += Qi * (bi - old_i) + Qj * (bj - old_j)

    # bias: average over free variables, else midpoint of the feasible interval
    yG = sign * G
    free = (beta > 0) & (beta < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        at_upper = beta >= C
        ub_mask = (at_upper & (sign < 0)) | (~at_upper & (sign > 0))
        lb_mask = ~ub_mask
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)

    alpha, alpha_star = beta[:n].copy(), beta[n:].copy()
    coef = alpha - alpha_star
    sv = coef != 0
    return SvrModel(kernel, C, epsilon, gamma, X[sv].copy(), coef[sv].copy(), -rho,
                    n_iter=it, kkt_violation=float(gap), alpha=alpha, alpha_star=alpha_star)


def svr_predict(model: SvrModel, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if len(model.dual_coef) == 0:
        out = np.full(1 if single else len(x), model.bias)
    else:
        out = kernel_matrix(x, model.support_vectors, model.kernel, model.gamma) @ model.dual_coef + model.bias
    return float(out[0]) if single else out
