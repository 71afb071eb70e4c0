from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


class SingularSystemError(np.linalg.LinAlgError):
    """The unregularised normal equations have no unique solution."""


@dataclass(frozen=True)
class RidgeConfig:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"ridge alpha must be >= 0, got {self.alpha}")

    family = "ridge"

    def to_dict(self) -> dict:
        return {"family": "ridge", "alpha": self.alpha}

    @property
    def label(self) -> str:
        return f"ridge(alpha={self.alpha:g})"


@dataclass(frozen=True)
class RidgeModel:
    coefficients: np.ndarray
    intercept: float
    alpha: float


def ridge_fit(X, y, alpha: float) -> RidgeModel:
    r"""Closed-form ridge regression with an unpenalised intercept.

    X and y are centred, then :math:`(X^T X + \alpha I)\beta = X^T y` is solved
    by Cholesky factorisation. When there are more features than rows the
    equivalent dual system :math:`(X X^T + \alpha I)c = y`, :math:`\beta = X^T c`
    is solved instead.
    """
    return ridge_path(X, y, [alpha])[0]


def ridge_path(X, y, alphas) -> list:
    """:func:`ridge_fit` for several penalties, sharing the centring and Gram matrix.

    Each model is bit-identical to the corresponding single fit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size or y.size < 1:
        raise ValueError(f"X {X.shape} and y {y.shape} do not match")
    alphas = [float(a) for a in alphas]
    if not all(a >= 0 for a in alphas):
        raise ValueError("alpha must be >= 0")
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    n, p = Xc.shape
    primal = p <= n
    gram = Xc.T @ Xc if primal else Xc @ Xc.T
    rhs = Xc.T @ yc if primal else yc
    diag = np.arange(gram.shape[0])
    models = []
    for alpha in alphas:
        A = gram.copy()
        A[diag, diag] += alpha
        if alpha == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
            raise SingularSystemError(
                "X^T X is singular; use alpha > 0 or remove collinear features")
        try:
            sol = linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), rhs,
                                   check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularSystemError(
                f"normal equations not positive definite: {exc}") from None
        beta = sol if primal else Xc.T @ sol
        beta.setflags(write=False)
        models.append(RidgeModel(beta, float(ym - xm @ beta), alpha))
    return models


def ridge_predict(model: RidgeModel, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != model.coefficients.shape[0]:
        raise ValueError(
            f"expected {model.coefficients.shape[0]} features, got {rows.shape[1]}")
    return rows @ model.coefficients + model.intercept
