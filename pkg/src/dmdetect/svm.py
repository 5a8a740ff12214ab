"""RBF-kernel soft-margin SVM trained with sequential minimal optimization.

The dual problem  min 0.5 a^T Q a - e^T a  s.t. 0 <= a <= C, y^T a = 0
(Q_ij = y_i y_j K_ij) is solved by pair updates with maximal-violating-pair
selection and a second-order gain heuristic for the partner index. Stopping
criterion: the maximal KKT violation m(a) - M(a) drops below `tol`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dmdetect.errors import ParameterError, ShapeError, TrainingError

KKT_TOL = 1e-3
GAMMA_VAR_FLOOR = 1e-12


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, d)
    dual_coef: np.ndarray  # alpha_i * y_i, (n_sv,)
    bias: float
    gamma: float
    C: float


def rbf_kernel(a, b, gamma):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sq_a = (a**2).sum(axis=1)
    sq_b = (b**2).sum(axis=1)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def auto_gamma(features: np.ndarray) -> float:
    """1 / (n_features * 2 * Var(all components)), variance floored."""
    var = max(float(np.var(features)), GAMMA_VAR_FLOOR)
    return 1.0 / (features.shape[1] * 2.0 * var)


def smo_solve(kernel, y, C, tol=KKT_TOL, max_updates=2_000_000):
    """Solve the dual given a precomputed kernel matrix; returns (alpha, bias).

    `max_updates` is the hard cap on pair optimizations, bounding runtime on
    large problems even if the tolerance is not reached.
    """
    n = len(y)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # grad of the dual objective: Q a - e
    diag = np.diagonal(kernel).copy()

    for _ in range(max_updates):
        neg_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.where(up, neg_yg, -np.inf).argmax())
        m = neg_yg[i]
        M = np.where(low, neg_yg, np.inf).min()
        if m - M <= tol:
            break

        ki = kernel[i]
        b_gap = m - neg_yg
        eta = diag[i] + diag - 2.0 * ki
        np.maximum(eta, 1e-12, out=eta)
        valid = low & (b_gap > 0)
        if not valid.any():
            break
        gain = np.where(valid, b_gap**2 / eta, -np.inf)

        # Best-gain partner first; fall back to the next candidates if the
        # analytic step for the pair is degenerate.
        updated = False
        for _try in range(8):
            j = int(gain.argmax())
            if not np.isfinite(gain[j]):
                break
            yi, yj = y[i], y[j]
            Ei, Ej = yi * grad[i], yj * grad[j]  # errors E_k = y_k * grad_k
            if yi != yj:
                L = max(0.0, alpha[j] - alpha[i])
                H = min(C, C + alpha[j] - alpha[i])
            else:
                L = max(0.0, alpha[i] + alpha[j] - C)
                H = min(C, alpha[i] + alpha[j])
            if H - L < 1e-14:
                gain[j] = -np.inf
                continue
            aj_new = np.clip(alpha[j] + yj * (Ei - Ej) / eta[j], L, H)
            dj = aj_new - alpha[j]
            if abs(dj) < 1e-14:
                gain[j] = -np.inf
                continue
            di = -yi * yj * dj
            alpha[i] += di
            alpha[j] = aj_new
            grad += y * (kernel[:, i] * (yi * di) + kernel[:, j] * (yj * dj))
            updated = True
            break
        if not updated:
            break

    free = (alpha > 1e-8) & (alpha < C - 1e-8)
    if free.any():
        bias = float(np.mean((-y * grad)[free]))
    else:
        neg_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.where(up, neg_yg, -np.inf).max()
        lo = np.where(low, neg_yg, np.inf).min()
        bias = float((hi + lo) / 2.0)
    return alpha, bias


def svm_fit(features, labels01, C=1.0, gamma="auto", tol=KKT_TOL) -> SvmModel:
    """Train on binary {0,1} labels; keeps only support vectors."""
    features = np.asarray(features, dtype=np.float64)
    labels01 = np.asarray(labels01)
    if C <= 0:
        raise ParameterError("C must be positive")
    classes = np.unique(labels01)
    if len(classes) < 2:
        raise TrainingError("training data contains a single class")
    if gamma == "auto":
        gamma = auto_gamma(features)
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    y = np.where(labels01 == 1, 1.0, -1.0)
    kernel = rbf_kernel(features, features, gamma)
    alpha, bias = smo_solve(kernel, y, C, tol=tol)
    sv = alpha > 1e-8
    return SvmModel(
        support_vectors=features[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=bias,
        gamma=float(gamma),
        C=float(C),
    )


def svm_decision(model: SvmModel, features) -> np.ndarray:
    """Decision scores for a stack of feature vectors."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.support_vectors.shape[1]:
        raise ShapeError(
            f"feature dimension {features.shape[1]} != trained "
            f"{model.support_vectors.shape[1]}"
        )
    k = rbf_kernel(features, model.support_vectors, model.gamma)
    return k @ model.dual_coef + model.bias


def svm_score(model: SvmModel, feature_vector):
    """(score, predicted label): label 1 iff the score is positive."""
    score = float(svm_decision(model, np.asarray(feature_vector)[None])[0])
    return score, int(score > 0)
