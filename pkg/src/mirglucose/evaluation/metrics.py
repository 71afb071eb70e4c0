from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    """Regression error summary over a set of predictions.

    ``r2`` is ``None`` when every reference value is identical (or the spread
    underflows), since the total sum of squares is then zero and the ratio
    is undefined.
    """

    mse: float
    mae: float
    r2: float | None
    absolute_errors: np.ndarray

    @property
    def rmse(self) -> float:
        return math.sqrt(self.mse)

    def to_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "rmse": self.rmse, "r2": self.r2}


def metrics_from_arrays(reference, predicted) -> MetricReport:
    ref = np.asarray(reference, dtype=float).reshape(-1)
    pred = np.asarray(predicted, dtype=float).reshape(-1)
    if ref.shape != pred.shape:
        raise ValueError(f"{ref.size} references but {pred.size} predictions")
    if ref.size < 2:
        raise ValueError("metrics need at least 2 predictions")
    resid = ref - pred
    ae = np.abs(resid)
    ss_res = float(resid @ resid)
    centred = ref - ref.mean()
    ss_tot = float(centred @ centred)
    r2 = None if np.all(ref == ref[0]) or ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    ae.setflags(write=False)
    return MetricReport(ss_res / ref.size, float(ae.mean()), r2, ae)


def compute_metrics(predictions) -> MetricReport:
    """MSE, MAE and R^2 of a sequence of :class:`CvPrediction`."""
    predictions = list(predictions)
    return metrics_from_arrays([p.reference for p in predictions],
                               [p.predicted for p in predictions])
