"""Task heads fitted on filter outputs.

Two head families cover the tasks used throughout:

* SoftmaxHead, a multinomial logistic classifier.  Its regularized
  empirical risk is

      (1/N) sum_i [ -w(y_i)'g_i + log sum_k exp(w(k)'g_i) ]
          + (lambda/2) sum_k ||w(k)||^2

  which is convex in the weights, so the fitted head is the unique
  best-response classifier for fixed features.  No intercept column is
  used; heads act on raw filter outputs.

* ReconstructionHead, an affine least-squares decoder G -> X with ridge
  penalty (lambda/2)||W||_F^2.  It doubles as a least-squares classifier
  when the targets are one-hot label vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, NumericError, ShapeError
from .records import read_record, write_record


@dataclass(frozen=True)
class SoftmaxHead:
    """Per-class weight rows for a multinomial logistic classifier."""

    weights: np.ndarray  # (num_classes, feature_dim)
    reg_lambda: float = 0.0

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] < 2:
            raise ShapeError("softmax weights must be (num_classes >= 2, feature_dim)")
        if not np.all(np.isfinite(weights)):
            raise NumericError("softmax weights must be finite")
        if self.reg_lambda < 0:
            raise DataError("reg_lambda must be non-negative")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ReconstructionHead:
    """Affine decoder mapping filter outputs back to a target matrix."""

    weights: np.ndarray  # (feature_dim, target_dim)
    bias: np.ndarray     # (target_dim,)
    reg_lambda: float = 0.0

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weights.ndim != 2:
            raise ShapeError("decoder weights must be 2-d")
        if bias.shape != (weights.shape[1],):
            raise ShapeError("bias length must match the decoder's target dimension")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise NumericError("decoder parameters must be finite")
        if self.reg_lambda < 0:
            raise DataError("reg_lambda must be non-negative")
        weights.flags.writeable = False
        bias.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = _check_labels(labels, num_classes)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


def _check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ShapeError("labels must be a non-empty 1-d array")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(np.int64)):
            raise DataError("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.min() < 1 or labels.max() > num_classes:
        raise DataError(
            f"labels must lie in 1..{num_classes}, got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels


def _check_feature_matrix(G, dim=None) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] == 0:
        raise ShapeError("features must be a non-empty 2-d array")
    if dim is not None and G.shape[1] != dim:
        raise ShapeError(f"feature dimension {G.shape[1]} does not match head ({dim})")
    if not np.all(np.isfinite(G)):
        raise NumericError("features contain non-finite values")
    return G


def _softmax_core(weights, G, labels):
    """Mean negative log-likelihood and the softmax residual matrix P - Y."""
    n = G.shape[0]
    logits = G @ weights.T
    shift = logits.max(axis=1, keepdims=True)
    exp_shifted = np.exp(logits - shift)
    norms = exp_shifted.sum(axis=1)
    log_norm = shift[:, 0] + np.log(norms)
    picked = logits[np.arange(n), labels - 1]
    nll = float(np.mean(log_norm - picked))
    residual = exp_shifted / norms[:, None]
    residual[np.arange(n), labels - 1] -= 1.0
    return nll, residual


def softmax_risk(head: SoftmaxHead, G, labels):
    """Regularized risk and its gradients.

    Returns
    -------
    risk : float
    grad_head : array, shape (num_classes, feature_dim)
    grad_features : array, shape (n_samples, feature_dim)
    """
    G = _check_feature_matrix(G, head.feature_dim)
    labels = _check_labels(labels, head.num_classes)
    if labels.size != G.shape[0]:
        raise ShapeError("labels and features disagree on the sample count")
    n = G.shape[0]
    lam = head.reg_lambda
    nll, residual = _softmax_core(head.weights, G, labels)
    risk = nll + 0.5 * lam * float((head.weights ** 2).sum())
    grad_head = residual.T @ G / n + lam * head.weights
    grad_features = residual @ head.weights / n
    return risk, grad_head, grad_features


def fit_softmax_with_info(G, labels, num_classes, reg_lambda=1e-6, tol=1e-8,
                          max_iter=500, init=None):
    """Fit a softmax head; also report the solver iteration count.

    Deterministic quasi-Newton minimization of the convex risk, started
    from zero weights (or ``init`` for warm starts).  Stops when the risk
    gradient norm is at most ``tol`` or after ``max_iter`` iterations.
    """
    if num_classes < 2:
        raise DataError("softmax heads need at least two classes")
    G = _check_feature_matrix(G)
    labels = _check_labels(labels, num_classes)
    if labels.size != G.shape[0]:
        raise ShapeError("labels and features disagree on the sample count")
    n, d = G.shape
    if init is None:
        x0 = np.zeros(num_classes * d)
    else:
        if init.weights.shape != (num_classes, d):
            raise ShapeError("warm-start head has the wrong shape")
        x0 = init.weights.ravel().copy()
    lam = float(reg_lambda)

    def value_and_grad(flat):
        weights = flat.reshape(num_classes, d)
        nll, residual = _softmax_core(weights, G, labels)
        risk = nll + 0.5 * lam * float((weights ** 2).sum())
        grad = residual.T @ G / n + lam * weights
        return risk, grad.ravel()

    # L-BFGS-B's gtol bounds the max gradient component; scale it so the
    # Euclidean norm of the full gradient lands at or below tol.
    gtol = tol / np.sqrt(num_classes * d)
    result = minimize(value_and_grad, x0, jac=True, method="L-BFGS-B",
                      options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0})
    if not np.isfinite(result.fun):
        raise NumericError("softmax fit diverged to a non-finite risk")
    head = SoftmaxHead(result.x.reshape(num_classes, d), reg_lambda=lam)
    return head, int(result.nit)


def fit_softmax(G, labels, num_classes, reg_lambda=1e-6, tol=1e-8,
                max_iter=500, init=None) -> SoftmaxHead:
    head, _ = fit_softmax_with_info(G, labels, num_classes, reg_lambda, tol,
                                    max_iter, init)
    return head


def reconstruction_risk(head: ReconstructionHead, G, target):
    """Mean squared reconstruction error plus ridge penalty, with gradients.

    Returns
    -------
    risk : float
    grad_head : (grad_weights, grad_bias)
    grad_features : array, shape (n_samples, feature_dim)
    """
    G = _check_feature_matrix(G, head.feature_dim)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (G.shape[0], head.weights.shape[1]):
        raise ShapeError(
            f"target shape {target.shape} does not match "
            f"({G.shape[0]}, {head.weights.shape[1]})"
        )
    n = G.shape[0]
    lam = head.reg_lambda
    residual = G @ head.weights + head.bias - target
    risk = float((residual * residual).sum() / n)
    risk += 0.5 * lam * float((head.weights ** 2).sum())
    grad_weights = (2.0 / n) * (G.T @ residual) + lam * head.weights
    grad_bias = (2.0 / n) * residual.sum(axis=0)
    grad_features = (2.0 / n) * (residual @ head.weights.T)
    return risk, (grad_weights, grad_bias), grad_features


def fit_reconstruction(G, target, reg_lambda=0.0, fit_intercept=True
                       ) -> ReconstructionHead:
    """Exact minimizer of the ridge reconstruction risk.

    Solved in closed form from the normal equations.  With
    ``fit_intercept`` the bias absorbs the target means and the weights
    are fit on centered data, which is the joint optimum; without it the
    bias is pinned at zero.
    """
    G = _check_feature_matrix(G)
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 2 or target.shape[0] != G.shape[0]:
        raise ShapeError("target must be 2-d with one row per sample")
    if not np.all(np.isfinite(target)):
        raise NumericError("target contains non-finite values")
    n, d = G.shape
    if n < d:
        raise ShapeError(f"need at least as many samples ({n}) as features ({d})")
    if reg_lambda < 0:
        raise DataError("reg_lambda must be non-negative")
    if fit_intercept:
        g_mean = G.mean(axis=0)
        t_mean = target.mean(axis=0)
        g_c = G - g_mean
        t_c = target - t_mean
    else:
        g_c, t_c = G, target
    # Stationarity of (1/N)||GW + 1b' - T||^2 + (lam/2)||W||^2 gives
    # (G_c'G_c + (N lam / 2) I) W = G_c'T_c.
    if reg_lambda > 0:
        gram = g_c.T @ g_c + (0.5 * n * reg_lambda) * np.eye(d)
        weights = np.linalg.solve(gram, g_c.T @ t_c)
    else:
        weights, *_ = np.linalg.lstsq(g_c, t_c, rcond=None)
    if fit_intercept:
        bias = t_mean - weights.T @ g_mean
    else:
        bias = np.zeros(target.shape[1])
    return ReconstructionHead(weights, bias, reg_lambda=reg_lambda)


def predict_labels(head: SoftmaxHead, G) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    G = _check_feature_matrix(G, head.feature_dim)
    return np.argmax(G @ head.weights.T, axis=1) + 1


def accuracy(head: SoftmaxHead, G, labels) -> float:
    labels = _check_labels(labels, head.num_classes)
    predictions = predict_labels(head, G)
    if labels.size != predictions.size:
        raise ShapeError("labels and features disagree on the sample count")
    return float(np.mean(predictions == labels))


def save_softmax_head(head: SoftmaxHead, path) -> None:
    header = {
        "record": "softmax_head",
        "num_classes": head.num_classes,
        "feature_dim": head.feature_dim,
        "reg_lambda": head.reg_lambda,
    }
    write_record(path, header, head.weights)


def load_softmax_head(path) -> SoftmaxHead:
    header, values = read_record(path)
    if header.get("record") != "softmax_head":
        raise DataError(f"{path}: not a softmax head record")
    shape = (int(header["num_classes"]), int(header["feature_dim"]))
    return SoftmaxHead(values.reshape(shape), reg_lambda=float(header["reg_lambda"]))


def save_reconstruction_head(head: ReconstructionHead, path) -> None:
    header = {
        "record": "reconstruction_head",
        "feature_dim": head.weights.shape[0],
        "target_dim": head.weights.shape[1],
        "reg_lambda": head.reg_lambda,
    }
    write_record(path, header, np.concatenate([head.weights.ravel(), head.bias]))


def load_reconstruction_head(path) -> ReconstructionHead:
    header, values = read_record(path)
    if header.get("record") != "reconstruction_head":
        raise DataError(f"{path}: not a reconstruction head record")
    d = int(header["feature_dim"])
    t = int(header["target_dim"])
    return ReconstructionHead(values[:d * t].reshape(d, t), values[d * t:],
                              reg_lambda=float(header["reg_lambda"]))
