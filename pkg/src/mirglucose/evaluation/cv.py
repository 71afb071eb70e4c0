"""Leave-one-out cross-validation of the full pipeline.

Preprocessing and the feature transform act on each spectrum alone, so they
run once over the whole dataset. Everything fitted to data (standardizer,
PCA, regressor) is refit inside every fold on the n-1 training rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureMatrix, FeatureMethod, apply_feature_method
from ..mlcore import (RidgeConfig, SvrConfig, SvrModel, fit_model, model_config_from_dict,
                      pca_fit, pca_transform, predict, standardizer_apply, standardizer_fit)
from ..preprocess import PreprocessConfig, preprocess_chain
from ..spectra import SpectralDataset, SpectrumKind
from .metrics import MetricReport, compute_metrics


class FoldError(RuntimeError):
    """A fit failed inside one cross-validation fold."""

    def __init__(self, fold: int, sample_id: str, cause: BaseException):
        super().__init__(f"fold {fold} (held-out sample {sample_id}): "
                         f"{type(cause).__name__}: {cause}")
        self.fold = fold
        self.sample_id = sample_id
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    """One concrete point of the pipeline: preprocessing, features, PCA, model.

    ``pca_k=None`` feeds the standardized features to the model directly.
    """

    method: FeatureMethod = field(default_factory=FeatureMethod)
    pca_k: int | None = 10
    model: RidgeConfig | SvrConfig = field(default_factory=RidgeConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    def __post_init__(self):
        if self.pca_k is not None:
            if int(self.pca_k) != self.pca_k or self.pca_k < 1:
                raise ValueError(f"pca_k must be a positive integer, got {self.pca_k}")
            object.__setattr__(self, "pca_k", int(self.pca_k))

    def to_dict(self) -> dict:
        sg = self.preprocess.savgol
        return {"method": self.method.to_dict(), "pca_k": self.pca_k,
                "model": self.model.to_dict(),
                "preprocess": {"savgol": {"window": sg.window, "polyorder": sg.polyorder},
                               "apply_rubberband": self.preprocess.apply_rubberband,
                               "apply_minmax": self.preprocess.apply_minmax,
                               "apply_savgol": self.preprocess.apply_savgol,
                               "order": self.preprocess.order}}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(FeatureMethod.from_dict(d.get("method", {"kind": "base"})),
                   d.get("pca_k", 10),
                   model_config_from_dict(d.get("model", {"family": "ridge"})),
                   PreprocessConfig(**d.get("preprocess", {})))

    @property
    def label(self) -> str:
        k = "all" if self.pca_k is None else self.pca_k
        return f"{self.method.label} | pca={k} | {self.model.label}"


@dataclass(frozen=True)
class CvPrediction:
    sample_id: str
    reference: float
    predicted: float
    fold_index: int


@dataclass(frozen=True)
class CvResult:
    config: PipelineConfig
    predictions: tuple
    metrics: MetricReport
    nonconverged_folds: int = 0


def prepare_dataset(dataset: SpectralDataset, preprocess: PreprocessConfig) -> SpectralDataset:
    """Run the preprocessing chain unless ``dataset`` is already absorbance."""
    if dataset.kind is SpectrumKind.ABSORBANCE:
        return dataset
    return preprocess_chain(dataset, preprocess)


def pipeline_features(dataset: SpectralDataset, config: PipelineConfig) -> FeatureMatrix:
    return apply_feature_method(prepare_dataset(dataset, config.preprocess), config.method)


def fold_split(X: np.ndarray, y: np.ndarray, i: int):
    """Training rows/labels without row ``i`` and the held-out row (1 x p)."""
    keep = np.arange(X.shape[0]) != i
    return X[keep], y[keep], X[i:i + 1]


def fold_scores(X_train, X_test, k: int | None):
    """Standardize on the training rows, then project onto ``k`` components."""
    std = standardizer_fit(X_train)
    Z_train = standardizer_apply(std, X_train)
    Z_test = standardizer_apply(std, X_test)
    if k is None:
        return Z_train, Z_test
    n, p = Z_train.shape
    if k > min(n - 1, p):
        raise ValueError(f"pca_k={k} exceeds the {min(n - 1, p)} components a "
                         f"{n}-row training fold supports")
    pca = pca_fit(Z_train, k)
    return pca_transform(pca, Z_train), pca_transform(pca, Z_test)


def fit_fold(X_train, y_train, X_test, pca_k, model_config):
    """Fit one fold; returns ``(prediction, converged)``."""
    S_train, S_test = fold_scores(X_train, X_test, pca_k)
    model = fit_model(model_config, S_train, y_train)
    converged = model.converged if isinstance(model, SvrModel) else True
    return float(predict(model, S_test)[0]), converged


def loocv_predict(X, y, pca_k, model_config, threads: int = 1):
    """Held-out prediction for every row of ``X``; returns ``(preds, n_nonconverged)``.

    Folds are independent, so ``threads > 1`` evaluates them concurrently
    with results identical to the sequential run.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 3:
        raise ValueError("leave-one-out needs at least 3 samples")

    def one(i):
        X_train, y_train, X_test = fold_split(X, y, i)
        try:
            return fit_fold(X_train, y_train, X_test, pca_k, model_config)
        except Exception as exc:
            raise FoldError(i, str(i), exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, range(n)))
    else:
        out = [one(i) for i in range(n)]
    preds = np.array([o[0] for o in out])
    return preds, sum(not o[1] for o in out)


def loocv_run(dataset: SpectralDataset, config: PipelineConfig, threads: int = 1) -> list:
    """One :class:`CvPrediction` per sample, in dataset order."""
    feats = pipeline_features(dataset, config)
    return cross_validate_features(feats, config, threads).predictions


def cross_validate_features(feats: FeatureMatrix, config: PipelineConfig,
                            threads: int = 1) -> CvResult:
    try:
        preds, bad = loocv_predict(feats.values, feats.labels, config.pca_k, config.model, threads)
    except FoldError as exc:
        sid = feats.sample_ids[exc.fold]
        raise FoldError(exc.fold, sid, exc.cause) from exc.cause
    records = tuple(CvPrediction(sid, float(ref), float(p), i) for i, (sid, ref, p)
                    in enumerate(zip(feats.sample_ids, feats.labels, preds)))
    return CvResult(config, records, compute_metrics(records), bad)


def cross_validate(dataset: SpectralDataset, config: PipelineConfig,
                   threads: int = 1) -> CvResult:
    """Leave-one-out predictions and metrics for one pipeline configuration."""
    return cross_validate_features(pipeline_features(dataset, config), config, threads)
