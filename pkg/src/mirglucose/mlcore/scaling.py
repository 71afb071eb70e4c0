from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring fitted on training rows only.

    ``sd`` is the population standard deviation. Features that are constant
    over the training rows get ``sd == 0`` and are mapped to 0 by
    :func:`standardizer_apply`.
    """

    mean: np.ndarray
    sd: np.ndarray

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def standardizer_fit(rows) -> Standardizer:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("standardizer needs a 2-D array with at least 2 rows")
    mean = rows.mean(axis=0)
    sd = rows.std(axis=0)
    # exact test for constant columns: the float mean of equal values need
    # not equal them, which would leave a spurious sd of ~1e-17
    sd[np.ptp(rows, axis=0) == 0.0] = 0.0
    mean.setflags(write=False)
    sd.setflags(write=False)
    return Standardizer(mean, sd)


def standardizer_apply(s: Standardizer, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != s.n_features:
        raise ValueError(
            f"expected rows with {s.n_features} features, got shape {rows.shape}")
    live = s.sd > 0
    out = np.zeros_like(rows)
    out[:, live] = (rows[:, live] - s.mean[live]) / s.sd[live]
    return out
