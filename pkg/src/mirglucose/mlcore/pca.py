from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    """Top-``k`` principal directions of a training matrix.

    Attributes
    ----------
    components : ndarray, shape (k, n_features)
        Orthonormal loading vectors, each signed so that its largest-magnitude
        entry is positive.
    center : ndarray, shape (n_features,)
        Training column means.
    explained_variance : ndarray, shape (k,)
        Variance along each component (denominator ``n - 1``), non-increasing.
    """

    components: np.ndarray
    center: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def truncate(self, k: int) -> "PcaModel":
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot truncate a {self.k}-component model to {k}")
        return PcaModel(self.components[:k], self.center, self.explained_variance[:k])


def pca_fit(rows, k: int) -> PcaModel:
    """Fit PCA by SVD of the centred training matrix.

    The full thin SVD is always computed and then sliced, so the first ``j``
    components of a ``k``-component fit are identical to a ``j``-component fit
    on the same rows.
    """
    rows = np.asarray(rows, dtype=float)
    n, p = rows.shape
    kmax = min(n - 1, p)
    if not 1 <= k <= kmax:
        raise ValueError(f"k must be in [1, {kmax}] for {n} rows and {p} features, got {k}")
    center = rows.mean(axis=0)
    _, s, vt = np.linalg.svd(rows - center, full_matrices=False)
    pivot = np.argmax(np.abs(vt), axis=1)
    signs = np.where(vt[np.arange(vt.shape[0]), pivot] < 0, -1.0, 1.0)
    vt = vt * signs[:, None]
    comps = np.ascontiguousarray(vt[:k])
    var = s[:k] ** 2 / (n - 1)
    for a in (comps, center, var):
        a.setflags(write=False)
    return PcaModel(comps, center, var)


def pca_transform(model: PcaModel, rows) -> np.ndarray:
    """Scores ``(rows - center) @ components.T``, shape (n_rows, k).

    Each score column is its own matrix-vector product, so column ``j`` does
    not depend on how many components the model carries.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != model.center.shape[0]:
        raise ValueError(
            f"expected rows with {model.center.shape[0]} features, got {rows.shape[1]}")
    centered = rows - model.center
    out = np.empty((rows.shape[0], model.k))
    for j in range(model.k):
        out[:, j] = centered @ model.components[j]
    return out


def pca_inverse(model: PcaModel, scores) -> np.ndarray:
    return np.asarray(scores, dtype=float) @ model.components + model.center
