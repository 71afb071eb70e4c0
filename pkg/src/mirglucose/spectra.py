"""Spectra, datasets, CSV ingestion and the synthetic FTIR generator."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SpectrumKind(str, enum.Enum):
    TRANSMITTANCE = "transmittance"
    ABSORBANCE = "absorbance"
    FEATURE = "feature"


class SpectraFormatError(ValueError):
    """Raised when spectra or labels files (or in-memory data) are malformed."""


@dataclass(frozen=True)
class WavenumberGrid:
    """Uniform, strictly increasing wavenumber axis in cm^-1."""

    start: float = 400.0
    step: float = 1.0
    count: int = 3601

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.count < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.count}")

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @classmethod
    def from_axis(cls, axis, rtol: float = 1e-9) -> "WavenumberGrid":
        """Build a grid from sampled wavenumbers, rejecting non-uniform axes."""
        axis = np.asarray(axis, dtype=float)
        if axis.ndim != 1 or axis.size < 3:
            raise SpectraFormatError("wavenumber column needs at least 3 values")
        steps = np.diff(axis)
        if np.any(steps <= 0):
            bad = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise SpectraFormatError(
                f"wavenumber column is not strictly increasing at row {bad + 1} "
                f"({axis[bad - 1]} -> {axis[bad]})")
        step = (axis[-1] - axis[0]) / (axis.size - 1)
        dev = np.abs(steps - step)
        if np.any(dev > rtol * max(step, 1.0)):
            bad = int(np.argmax(dev)) + 1
            raise SpectraFormatError(
                f"non-uniform wavenumber grid near row {bad + 1} "
                f"({axis[bad - 1]} -> {axis[bad]}, expected step {step:g})")
        return cls(float(axis[0]), float(step), int(axis.size))


@dataclass(frozen=True)
class Spectrum:
    grid: WavenumberGrid
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.ABSORBANCE

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise ValueError(
                f"spectrum has {values.size} values for a {self.grid.count}-point grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite values")
        if self.kind is SpectrumKind.TRANSMITTANCE:
            _check_transmittance(values[None, :])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.grid.wavenumbers

    def with_values(self, values, kind: SpectrumKind | None = None) -> "Spectrum":
        return Spectrum(self.grid, values, self.kind if kind is None else kind)


@dataclass(frozen=True)
class SpectralDataset:
    """Spectra on one shared grid, stored row-wise, with glucose labels in mg/dl.

    ``values[i]`` is the spectrum of ``sample_ids[i]`` whose reference
    glucose is ``labels[i]``.
    """

    grid: WavenumberGrid
    values: np.ndarray
    labels: np.ndarray
    sample_ids: tuple
    kind: SpectrumKind = SpectrumKind.TRANSMITTANCE

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        labels = np.array(self.labels, dtype=float).reshape(-1)
        ids = tuple(str(s) for s in self.sample_ids)
        if values.ndim != 2 or values.shape[0] == 0:
            raise ValueError("dataset must contain at least one spectrum")
        if values.shape[1] != self.grid.count:
            raise ValueError(
                f"spectra have {values.shape[1]} points, grid has {self.grid.count}")
        if not (values.shape[0] == labels.size == len(ids)):
            raise ValueError(
                f"{values.shape[0]} spectra, {labels.size} labels, {len(ids)} ids")
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        if not np.all(np.isfinite(labels)) or np.any(labels <= 0):
            raise ValueError("labels must be finite and positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectra contain non-finite values")
        if self.kind is SpectrumKind.TRANSMITTANCE:
            _check_transmittance(values, ids)
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", ids)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> Spectrum:
        return Spectrum(self.grid, self.values[i], self.kind)

    @property
    def spectra(self) -> list:
        return [self[i] for i in range(len(self))]

    def replace_values(self, values, kind: SpectrumKind) -> "SpectralDataset":
        return SpectralDataset(self.grid, values, self.labels, self.sample_ids, kind)

    def subset(self, index) -> "SpectralDataset":
        index = np.asarray(index)
        return SpectralDataset(self.grid, self.values[index], self.labels[index],
                               tuple(self.sample_ids[i] for i in index), self.kind)


def _check_transmittance(values, ids=None):
    bad = (values <= 0.0) | (values > 1.0)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        who = ids[r] if ids is not None else f"row {r}"
        raise SpectraFormatError(
            f"transmittance {values[r, c]!r} outside (0, 1] for {who} at grid index {c}")


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def ingest_csv(spectra_path, labels_path) -> SpectralDataset:
    """Read a transmittance spectra CSV and its labels CSV into a dataset.

    The spectra file has header ``wavenumber,<id_1>,<id_2>,...`` and one row
    per grid point; the labels file has header ``sample_id,glucose_mgdl``.
    """
    rows = [r for r in _read_rows(spectra_path) if r]
    if not rows:
        raise SpectraFormatError(f"{spectra_path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "wavenumber":
        raise SpectraFormatError(
            f"{spectra_path}: header must start with 'wavenumber' followed by sample ids")
    ids = header[1:]
    if any(not s for s in ids):
        raise SpectraFormatError(f"{spectra_path}: empty sample id in header")
    if len(set(ids)) != len(ids):
        raise SpectraFormatError(f"{spectra_path}: duplicate sample ids in header")

    table = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SpectraFormatError(
                f"{spectra_path}: line {r} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise SpectraFormatError(
                    f"{spectra_path}: line {r}, column {header[c]!r}: "
                    f"not a number ({cell!r})") from None
            if not math.isfinite(v):
                raise SpectraFormatError(
                    f"{spectra_path}: line {r}, column {header[c]!r}: non-finite value")
            if c > 0 and not (0.0 < v <= 1.0):
                raise SpectraFormatError(
                    f"{spectra_path}: line {r}, column {header[c]!r}: "
                    f"transmittance {v!r} outside (0, 1]")
            table[r - 2, c] = v
    grid = WavenumberGrid.from_axis(table[:, 0])

    lrows = [r for r in _read_rows(labels_path) if r]
    if not lrows or [h.strip() for h in lrows[0]] != ["sample_id", "glucose_mgdl"]:
        raise SpectraFormatError(f"{labels_path}: header must be 'sample_id,glucose_mgdl'")
    labels = {}
    for r, row in enumerate(lrows[1:], start=2):
        if len(row) != 2:
            raise SpectraFormatError(f"{labels_path}: line {r} must have 2 cells")
        sid = row[0].strip()
        try:
            labels[sid] = float(row[1])
        except ValueError:
            raise SpectraFormatError(
                f"{labels_path}: line {r}: label {row[1]!r} is not a number") from None
    missing = [s for s in ids if s not in labels]
    if missing:
        raise SpectraFormatError(f"{labels_path}: missing label for {', '.join(missing)}")
    if len(labels) != len(ids):
        extra = sorted(set(labels) - set(ids))
        raise SpectraFormatError(
            f"{labels_path}: labels for samples absent from spectra: {', '.join(extra)}")
    y = np.array([labels[s] for s in ids])
    return SpectralDataset(grid, table[:, 1:].T, y, tuple(ids), SpectrumKind.TRANSMITTANCE)


def _fmt(v: float) -> str:
    return format(v, ".12g")


def spectra_csv_text(dataset: SpectralDataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(("wavenumber",) + dataset.sample_ids))
    for w, row in zip(dataset.grid.wavenumbers, dataset.values.T):
        buf.write("\n" + _fmt(w) + "," + ",".join(_fmt(v) for v in row))
    buf.write("\n")
    return buf.getvalue()


def labels_csv_text(dataset: SpectralDataset) -> str:
    lines = ["sample_id,glucose_mgdl"]
    lines += [f"{s},{_fmt(v)}" for s, v in zip(dataset.sample_ids, dataset.labels)]
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_csv(dataset: SpectralDataset, spectra_path, labels_path):
    """Write ``dataset`` as the spectra/labels CSV pair read by :func:`ingest_csv`."""
    if len(dataset) == 0:  # pragma: no cover - the dataset constructor forbids it
        raise ValueError("cannot write an empty dataset")
    atomic_write_text(spectra_path, spectra_csv_text(dataset))
    atomic_write_text(labels_path, labels_csv_text(dataset))


# --------------------------------------------------------------------------
# synthetic spectra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisConfig:
    """Parameters of the Beer-Lambert style synthetic generator.

    Glucose bands scale linearly with the drawn concentration. The matrix
    bands (proteins and water in real blood) do not depend on glucose; each
    sample scales them by ``1 + matrix_variation * N(0, 1)``. The baseline is
    ``baseline_offset`` plus a random Legendre polynomial of degree
    ``baseline_degree`` whose coefficients are ``baseline_amplitude * N(0, 1)``,
    shifted so its minimum over the grid is zero.

    Random draws come from numpy's Philox counter-based generator keyed by
    ``seed``, always in the order: labels, baseline coefficients, matrix
    factors, noise.
    """

    n_samples: int = 46
    glucose_range: tuple = (72.0, 125.0)
    seed: int = 0
    noise_sd: float = 0.002
    baseline_amplitude: float = 0.05
    band_centers: tuple = (1035.0, 1080.0, 1150.0, 3300.0)
    band_widths: tuple = (12.0, 15.0, 12.0, 60.0)
    band_gains: tuple = (2.0e-4, 1.5e-4, 1.0e-4, 1.0e-4)
    grid: WavenumberGrid = field(default_factory=WavenumberGrid)
    baseline_offset: float = 0.1
    baseline_degree: int = 3
    matrix_centers: tuple = (1545.0, 1650.0, 3300.0)
    matrix_widths: tuple = (25.0, 30.0, 200.0)
    matrix_heights: tuple = (0.35, 0.6, 0.9)
    matrix_variation: float = 0.02

    def __post_init__(self):
        for name in ("glucose_range", "band_centers", "band_widths", "band_gains",
                     "matrix_centers", "matrix_widths", "matrix_heights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if isinstance(self.grid, dict):
            object.__setattr__(self, "grid", WavenumberGrid(**self.grid))
        if self.n_samples < 2:
            raise ValueError(f"n_samples must be >= 2, got {self.n_samples}")
        lo, hi = self.glucose_range
        if not (0 < lo < hi):
            raise ValueError(f"glucose_range must satisfy 0 < low < high, got {self.glucose_range}")
        if self.noise_sd < 0 or self.baseline_amplitude < 0 or self.matrix_variation < 0:
            raise ValueError("noise_sd, baseline_amplitude and matrix_variation must be >= 0")
        if not (len(self.band_centers) == len(self.band_widths) == len(self.band_gains)):
            raise ValueError("band_centers, band_widths and band_gains differ in length")
        if not (len(self.matrix_centers) == len(self.matrix_widths)
                == len(self.matrix_heights)):
            raise ValueError("matrix band lists differ in length")
        if any(w <= 0 for w in self.band_widths + self.matrix_widths):
            raise ValueError("band widths must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")


def _gaussian(w, center, width):
    return np.exp(-0.5 * ((w - center) / width) ** 2)


def synthesize(config: SynthesisConfig | None = None) -> SpectralDataset:
    """Draw a seeded synthetic transmittance dataset.

    Each sample's absorbance is baseline + matrix bands + glucose bands +
    Gaussian noise, and the returned values are ``T = 10**(-A)``.
    """
    cfg = config or SynthesisConfig()
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    w = cfg.grid.wavenumbers
    n = cfg.n_samples

    conc = rng.uniform(cfg.glucose_range[0], cfg.glucose_range[1], size=n)
    coefs = cfg.baseline_amplitude * rng.standard_normal((n, cfg.baseline_degree + 1))
    factors = 1.0 + cfg.matrix_variation * rng.standard_normal(n)
    noise = cfg.noise_sd * rng.standard_normal((n, w.size))

    u = 2.0 * (w - w[0]) / (w[-1] - w[0]) - 1.0
    drift = np.polynomial.legendre.legvander(u, cfg.baseline_degree) @ coefs.T
    baseline = cfg.baseline_offset + (drift - drift.min(axis=0))

    glucose = np.zeros_like(w)
    for c0, wd, g in zip(cfg.band_centers, cfg.band_widths, cfg.band_gains):
        glucose += g * _gaussian(w, c0, wd)
    matrix = np.zeros_like(w)
    for c0, wd, h in zip(cfg.matrix_centers, cfg.matrix_widths, cfg.matrix_heights):
        matrix += h * _gaussian(w, c0, wd)

    absorb = baseline.T + factors[:, None] * matrix + conc[:, None] * glucose + noise
    with np.errstate(over="ignore", under="ignore"):
        trans = 10.0 ** (-absorb)
    bad = ~((trans > 0.0) & (trans <= 1.0))
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"synthetic transmittance {trans[r, c]!r} outside (0, 1] for sample {r} "
            f"at {w[c]:g} cm^-1 (absorbance {absorb[r, c]:.4g}); reduce gains or noise, "
            f"or raise baseline_offset")
    width = max(3, len(str(n)))
    ids = tuple(f"sample_{i + 1:0{width}d}" for i in range(n))
    return SpectralDataset(cfg.grid, trans, conc, ids, SpectrumKind.TRANSMITTANCE)
