"""Feature transforms combining absorbance with its first derivative.

Four feature modes are supported:

``base``
    the preprocessed absorbance itself;
``derivative``
    the scaled first derivative ``scale * dA/dw``;
``tbd`` (threshold-based derivative)
    per point, keep the absorbance where the scaled derivative is small
    (``|s| < tau``) and switch to the scaled derivative elsewhere;
``adpd`` (adaptive derivative peak detection)
    ``y = x - alpha * z * x`` with ``z`` the unscaled derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import derivative_values
from .spectra import SpectralDataset, Spectrum, SpectrumKind

METHOD_KINDS = ("base", "derivative", "tbd", "adpd")


@dataclass(frozen=True)
class FeatureMethod:
    kind: str = "base"
    tau: float | None = None
    scale: float = 100.0
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown feature method {self.kind!r}; expected one of {METHOD_KINDS}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("derivative scale must be positive")
        if self.kind == "tbd":
            if self.tau is None or not self.tau > 0:
                raise ValueError(f"TBD needs tau > 0, got {self.tau}")
        if self.kind == "adpd":
            if self.alpha is None or not self.alpha >= 0:
                raise ValueError(f"ADPD needs alpha >= 0, got {self.alpha}")

    @classmethod
    def base(cls):
        return cls("base")

    @classmethod
    def derivative(cls, scale=100.0):
        return cls("derivative", scale=scale)

    @classmethod
    def tbd(cls, tau, scale=100.0):
        return cls("tbd", tau=float(tau), scale=scale)

    @classmethod
    def adpd(cls, alpha):
        return cls("adpd", alpha=float(alpha))

    @property
    def label(self) -> str:
        if self.kind == "tbd":
            return f"tbd(tau={self.tau:g})"
        if self.kind == "adpd":
            return f"adpd(alpha={self.alpha:g})"
        return self.kind

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("derivative", "tbd"):
            out["scale"] = self.scale
        if self.kind == "tbd":
            out["tau"] = self.tau
        if self.kind == "adpd":
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMethod":
        return cls(d["kind"], tau=d.get("tau"), scale=d.get("scale", 100.0), alpha=d.get("alpha"))


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-sample feature rows handed to the regressors."""

    values: np.ndarray
    labels: np.ndarray
    sample_ids: tuple
    method: FeatureMethod | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("feature values must be 2-D (samples x features)")
        labels = np.array(self.labels, dtype=float).reshape(-1)
        if labels.size != values.shape[0] or len(self.sample_ids) != values.shape[0]:
            raise ValueError("labels / sample ids do not match the number of rows")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    def __len__(self):
        return self.values.shape[0]


def _check_pair(absorbance: Spectrum, derivative: Spectrum):
    if absorbance.grid != derivative.grid:
        raise ValueError("absorbance and derivative spectra are on different grids")


def tbd_values(absorbance, derivative, tau: float, scale: float = 100.0):
    """Return ``(features, mask)``; ``mask`` is True where absorbance was kept."""
    s = scale * np.asarray(derivative, dtype=float)
    mask = np.abs(s) < tau
    return np.where(mask, absorbance, s), mask


def tbd_transform(absorbance: Spectrum, derivative: Spectrum, tau: float,
                  scale: float = 100.0):
    """Threshold-based derivative of one spectrum.

    Returns the feature spectrum and the boolean mask of points whose
    absorbance was retained. Ties ``|s| == tau`` take the derivative branch.
    """
    _check_pair(absorbance, derivative)
    if not tau > 0:
        raise ValueError("tau must be positive")
    feat, mask = tbd_values(absorbance.values, derivative.values, tau, scale)
    return absorbance.with_values(feat, SpectrumKind.FEATURE), mask


def adpd_values(absorbance, derivative, alpha: float):
    x = np.asarray(absorbance, dtype=float)
    return x - alpha * np.asarray(derivative, dtype=float) * x


def adpd_transform(absorbance: Spectrum, derivative: Spectrum, alpha: float) -> Spectrum:
    """y = x - alpha * z * x for absorbance x and its first derivative z."""
    _check_pair(absorbance, derivative)
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    return absorbance.with_values(adpd_values(absorbance.values, derivative.values, alpha),
                                  SpectrumKind.FEATURE)


def feature_values(absorbance: np.ndarray, step: float, method: FeatureMethod,
                   derivative: np.ndarray | None = None) -> np.ndarray:
    """Apply ``method`` row-wise to a (n_samples, n_points) absorbance matrix.

    ``derivative`` may be passed in to reuse a precomputed derivative matrix.
    """
    if method.kind == "base":
        return np.array(absorbance, dtype=float)
    if derivative is None:
        derivative = derivative_values(absorbance, step)
    if method.kind == "derivative":
        return method.scale * derivative
    if method.kind == "tbd":
        return tbd_values(absorbance, derivative, method.tau, method.scale)[0]
    return adpd_values(absorbance, derivative, method.alpha)


def apply_feature_method(dataset: SpectralDataset, method: FeatureMethod,
                         derivative: np.ndarray | None = None) -> FeatureMatrix:
    if dataset.kind is not SpectrumKind.ABSORBANCE:
        raise ValueError(
            f"feature methods expect preprocessed absorbance, got {dataset.kind.value}")
    values = feature_values(dataset.values, dataset.grid.step, method, derivative)
    return FeatureMatrix(values, dataset.labels, dataset.sample_ids, method)
