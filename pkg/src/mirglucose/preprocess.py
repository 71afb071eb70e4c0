"""Spectral preprocessing: absorbance, rubber band, min-max, Savitzky-Golay.

Every function takes and returns :class:`~mirglucose.spectra.Spectrum`
objects; the ``*_values`` helpers do the same work on raw 1-D arrays (or 2-D
arrays, one spectrum per row, where noted) and are what the dataset-level
chain uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .spectra import SpectralDataset, Spectrum, SpectrumKind


class PreprocessError(ValueError):
    """A preprocessing step rejected its input."""


@dataclass(frozen=True)
class SavGolConfig:
    window: int = 101
    polyorder: int = 2

    def __post_init__(self):
        if self.window % 2 != 1 or self.window < 1:
            raise ValueError(f"Savitzky-Golay window must be odd, got {self.window}")
        if self.polyorder < 0:
            raise ValueError("polyorder must be >= 0")
        if self.window < self.polyorder + 1:
            raise ValueError(
                f"window {self.window} is too short for polyorder {self.polyorder}")


@dataclass(frozen=True)
class PreprocessConfig:
    savgol: SavGolConfig = field(default_factory=SavGolConfig)
    apply_rubberband: bool = True
    apply_minmax: bool = True
    apply_savgol: bool = True
    # "minmax_first" swaps the normalisation and baseline steps
    order: str = "rubberband_first"

    def __post_init__(self):
        if isinstance(self.savgol, dict):
            object.__setattr__(self, "savgol", SavGolConfig(**self.savgol))
        if self.order not in ("rubberband_first", "minmax_first"):
            raise ValueError(f"unknown step order {self.order!r}")


# --------------------------------------------------------------------------
# single-spectrum operations
# --------------------------------------------------------------------------


def absorbance_values(trans: np.ndarray) -> np.ndarray:
    trans = np.asarray(trans, dtype=float)
    bad = (trans <= 0.0) | (trans > 1.0)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise PreprocessError(
            f"transmittance {trans[tuple(idx)]!r} at index {tuple(int(i) for i in idx)} "
            "is outside (0, 1]")
    return -np.log10(trans)


def to_absorbance(spectrum: Spectrum) -> Spectrum:
    """A = -log10(T)."""
    if spectrum.kind is not SpectrumKind.TRANSMITTANCE:
        raise PreprocessError(f"expected a transmittance spectrum, got {spectrum.kind.value}")
    return spectrum.with_values(absorbance_values(spectrum.values), SpectrumKind.ABSORBANCE)


def rubberband_baseline(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Piecewise-linear baseline through the lower convex hull of ``(x, y)``."""
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < 3:
        raise PreprocessError("rubber band correction needs at least 3 points")
    hull = _kernels.lower_hull(x, y)
    return np.interp(x, x[hull], y[hull])


def rubberband_values(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # interpolation can overshoot a point by one ulp; clip keeps output >= 0
    return np.maximum(np.asarray(y, dtype=float) - rubberband_baseline(x, y), 0.0)


def rubberband_correct(spectrum: Spectrum) -> Spectrum:
    """Subtract the rubber-band (lower convex hull) baseline."""
    return spectrum.with_values(rubberband_values(spectrum.wavenumbers, spectrum.values))


def minmax_values(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise PreprocessError("cannot min-max normalise a constant spectrum (zero range)")
    return (v - lo) / (hi - lo)


def minmax_normalize(spectrum: Spectrum) -> Spectrum:
    """Rescale one spectrum onto [0, 1]."""
    return spectrum.with_values(minmax_values(spectrum.values))


@lru_cache(maxsize=32)
def _savgol_projection(window: int, polyorder: int) -> np.ndarray:
    """Hat matrix of the windowed least-squares polynomial fit.

    Row ``r`` holds the weights giving the fitted value at window offset
    ``r``; the centre row is the classic smoothing filter.
    """
    half = window // 2
    pos = np.arange(-half, half + 1) / max(half, 1)
    V = np.vander(pos, polyorder + 1, increasing=True)
    hat = V @ np.linalg.pinv(V)
    hat.setflags(write=False)
    return hat


def savgol_values(v: np.ndarray, window: int, polyorder: int) -> np.ndarray:
    """Savitzky-Golay smoothing along the last axis.

    Interior points use the centred filter. The first and last ``window // 2``
    points are read off the polynomials fitted to the first and last full
    windows, so output length equals input length.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    if window > n:
        raise PreprocessError(f"Savitzky-Golay window {window} exceeds spectrum length {n}")
    hat = _savgol_projection(window, polyorder)
    half = window // 2
    out = np.empty_like(v)
    # row by row, so each spectrum's result does not depend on the batch
    for idx in np.ndindex(v.shape[:-1]):
        row = v[idx]
        windows = np.lib.stride_tricks.sliding_window_view(row, window)
        out[idx][half:n - half] = windows @ hat[half]
        out[idx][:half] = hat[:half] @ row[:window]
        out[idx][n - half:] = hat[half + 1:] @ row[n - window:]
    return out


def savgol_smooth(spectrum: Spectrum, config: SavGolConfig) -> Spectrum:
    return spectrum.with_values(savgol_values(spectrum.values, config.window, config.polyorder))


def derivative_values(v: np.ndarray, step: float) -> np.ndarray:
    """First derivative along the last axis: central inside, one-sided at the ends."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 3:
        raise PreprocessError("derivative needs at least 3 points")
    return np.gradient(v, step, axis=-1, edge_order=1)


def first_derivative(spectrum: Spectrum) -> Spectrum:
    """dA/dw in absorbance units per cm^-1."""
    return spectrum.with_values(derivative_values(spectrum.values, spectrum.grid.step),
                                SpectrumKind.FEATURE)


# --------------------------------------------------------------------------
# dataset chain
# --------------------------------------------------------------------------


def preprocess_values(trans: np.ndarray, wavenumbers: np.ndarray,
                      config: PreprocessConfig, sample_ids=None) -> np.ndarray:
    """Run the chain on a (n_samples, n_points) transmittance matrix."""
    trans = np.atleast_2d(np.asarray(trans, dtype=float))
    ids = sample_ids if sample_ids is not None else [f"row {i}" for i in range(len(trans))]
    out = np.empty_like(trans)
    for i, row in enumerate(trans):
        try:
            a = absorbance_values(row)
            steps = ("rubberband", "minmax")
            if config.order == "minmax_first":
                steps = steps[::-1]
            for step in steps:
                if step == "rubberband" and config.apply_rubberband:
                    a = rubberband_values(wavenumbers, a)
                elif step == "minmax" and config.apply_minmax:
                    a = minmax_values(a)
            out[i] = a
        except PreprocessError as exc:
            raise PreprocessError(f"sample {ids[i]}: {exc}") from None
    if config.apply_savgol:
        try:
            out = savgol_values(out, config.savgol.window, config.savgol.polyorder)
        except PreprocessError as exc:
            raise PreprocessError(f"all samples: {exc}") from None
    return out


def preprocess_chain(dataset: SpectralDataset,
                     config: PreprocessConfig | None = None) -> SpectralDataset:
    """Absorbance, rubber band, min-max, then Savitzky-Golay, per sample."""
    config = config or PreprocessConfig()
    if dataset.kind is not SpectrumKind.TRANSMITTANCE:
        raise PreprocessError(f"expected transmittance spectra, got {dataset.kind.value}")
    out = preprocess_values(dataset.values, dataset.grid.wavenumbers, config,
                            dataset.sample_ids)
    return dataset.replace_values(out, SpectrumKind.ABSORBANCE)


def chain_stages(trans_row: np.ndarray, wavenumbers: np.ndarray,
                 config: PreprocessConfig) -> dict:
    """Intermediate arrays of the chain for one spectrum, keyed by stage name."""
    stages = {"transmittance": np.asarray(trans_row, dtype=float)}
    a = absorbance_values(trans_row)
    stages["absorbance"] = a
    steps = ("rubberband", "minmax") if config.order == "rubberband_first" else ("minmax", "rubberband")
    for step in steps:
        if step == "rubberband" and config.apply_rubberband:
            a = rubberband_values(wavenumbers, a)
            stages["rubberband"] = a
        elif step == "minmax" and config.apply_minmax:
            a = minmax_values(a)
            stages["minmax"] = a
    if config.apply_savgol:
        a = savgol_values(a, config.savgol.window, config.savgol.polyorder)
        stages["savgol"] = a
    return stages
