"""Epsilon-insensitive support vector regression.

The dual problem is solved with an SMO solver using second-order working-set
selection (see :mod:`mirglucose._kernels`). For the linear kernel the SMO
result is finished by an active-set solve on a low-rank factor of the Gram
matrix, which returns the exact optimum for the final support partition.
Kernels:

* ``linear``: ``u . v``
* ``rbf``: ``exp(-gamma * |u - v|^2)``
* ``poly``: ``(gamma * u . v + coef0) ** degree``

When ``gamma`` is left as ``None`` it is set from the training matrix as
``1 / (n_features * X.var())``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import _kernels

log = logging.getLogger(__name__)

KERNELS = tuple(_kernels.KERNEL_CODES)


@dataclass(frozen=True)
class SvrConfig:
    kernel: str = "rbf"
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float | None = None
    degree: int = 3
    coef0: float = 0.0
    tol: float = 1e-3
    max_iter: int = 100_000

    family = "svr"

    def __post_init__(self):
        if self.kernel not in _kernels.KERNEL_CODES:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")
        object.__setattr__(self, "degree", int(self.degree))

    def to_dict(self) -> dict:
        return {"family": "svr", "kernel": self.kernel, "C": self.C, "epsilon": self.epsilon,
                "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0,
                "tol": self.tol, "max_iter": self.max_iter}

    @property
    def label(self) -> str:
        return f"svr({self.kernel}, C={self.C:g}, eps={self.epsilon:g})"


@dataclass(frozen=True)
class SvrModel:
    """Fitted SVR: ``f(x) = sum_j dual_coefs[j] * K(support_vectors[j], x) + bias``.

    All training rows are kept; rows with a zero dual coefficient do not
    contribute. ``converged`` is False when the iteration cap was reached
    before the KKT gap dropped below ``tol``.
    """

    kernel: str
    C: float
    epsilon: float
    gamma: float
    degree: int
    coef0: float
    dual_coefs: np.ndarray
    support_vectors: np.ndarray
    bias: float
    n_iter: int
    converged: bool
    kkt_gap: float

    @property
    def support_mask(self) -> np.ndarray:
        return self.dual_coefs != 0.0

    @property
    def n_support(self) -> int:
        return int(np.count_nonzero(self.support_mask))


def default_gamma(X) -> float:
    X = np.asarray(X, dtype=float)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def resolve_gamma(config: SvrConfig, X) -> float:
    return config.gamma if config.gamma is not None else default_gamma(X)


def kernel_matrix(A, B, kernel: str, gamma: float = 1.0, degree: int = 3,
                  coef0: float = 0.0) -> np.ndarray:
    A = np.ascontiguousarray(np.atleast_2d(A), dtype=float)
    B = np.ascontiguousarray(np.atleast_2d(B), dtype=float)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _kernels.gram(A, B, _kernels.KERNEL_CODES[kernel], float(gamma), int(degree),
                         float(coef0))


def kernel_eval(kernel: str, u, v, gamma: float = 1.0, degree: int = 3,
                coef0: float = 0.0) -> float:
    u = np.asarray(u, dtype=float).reshape(1, -1)
    v = np.asarray(v, dtype=float).reshape(1, -1)
    return float(kernel_matrix(u, v, kernel, gamma, degree, coef0)[0, 0])


def svr_fit(X, y, kernel: str = "rbf", C: float = 1.0, epsilon: float = 0.1, *,
            gamma: float | None = None, degree: int = 3, coef0: float = 0.0,
            tol: float = 1e-3, max_iter: int = 100_000) -> SvrModel:
    config = SvrConfig(kernel, C, epsilon, gamma, degree, coef0, tol, max_iter)
    return fit_svr_config(config, X, y)


def fit_svr_config(config: SvrConfig, X, y, K=None) -> SvrModel:
    """Fit from a config; ``K`` may carry a precomputed training Gram matrix."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1))
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"X {X.shape} and y {y.shape} do not match")
    if y.size < 2:
        raise ValueError("SVR needs at least 2 training rows")
    gamma = resolve_gamma(config, X)
    if K is None:
        K = kernel_matrix(X, X, config.kernel, gamma, config.degree, config.coef0)
    solve = _kernels.svr_exact if config.kernel == "linear" else _kernels.smo_solve
    beta, rho, n_iter, gap, ok = solve(
        K, y, float(config.C), float(config.epsilon), float(config.tol), int(config.max_iter))
    if not ok:
        log.warning("SVR solver hit the %d-iteration cap (KKT gap %.3g)", config.max_iter, gap)
    n = y.size
    coefs = beta[:n] - beta[n:]
    coefs.setflags(write=False)
    X.setflags(write=False)
    return SvrModel(config.kernel, float(config.C), float(config.epsilon), float(gamma),
                    config.degree, float(config.coef0), coefs, X, float(-rho), int(n_iter),
                    bool(ok), float(gap))


def svr_predict(model: SvrModel, rows) -> np.ndarray:
    rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=float)
    if rows.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(
            f"expected {model.support_vectors.shape[1]} features, got {rows.shape[1]}")
    Kq = kernel_matrix(model.support_vectors, rows, model.kernel, model.gamma,
                       model.degree, model.coef0)
    return _kernels.expand(np.ascontiguousarray(model.dual_coefs), Kq, model.bias)


def svr_dual_objective(model: SvrModel, y) -> float:
    """Dual objective -1/2 d'Kd - eps*sum|d| + y'd at the fitted coefficients (maximised)."""
    K = kernel_matrix(model.support_vectors, model.support_vectors, model.kernel,
                      model.gamma, model.degree, model.coef0)
    d = model.dual_coefs
    y = np.asarray(y, dtype=float)
    return float(-0.5 * d @ K @ d - model.epsilon * np.abs(d).sum() + y @ d)
