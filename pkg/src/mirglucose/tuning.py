"""Exhaustive grid search over feature, PCA and regressor settings by LOOCV MSE.

The engine works fold-major: for each feature setting and each held-out
sample it standardizes and fits PCA once at the largest requested component
count, then slices the scores for every smaller ``k`` (PCA components and
scores do not depend on how many components are kept). For SVR all
``(C, epsilon)`` pairs sharing a kernel are solved in one compiled batch on
a shared Gram matrix. Every prediction is bit-identical to the one
:func:`mirglucose.evaluation.loocv_run` makes for the same configuration.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .evaluation.cv import FoldError, PipelineConfig, fold_split, prepare_dataset
from .evaluation.metrics import MetricReport, metrics_from_arrays
from .features import FeatureMethod, feature_values
from .mlcore import (RidgeConfig, SvrConfig, kernel_matrix, model_config_from_dict, pca_fit,
                     pca_transform, ridge_fit, ridge_path, ridge_predict, standardizer_apply,
                     standardizer_fit)
from .mlcore.svr import resolve_gamma
from .preprocess import PreprocessConfig, derivative_values
from .spectra import SpectralDataset

log = logging.getLogger(__name__)

METHOD_FAMILIES = ("base", "derivative", "tbd", "adpd")
MODEL_FAMILIES = ("ridge", "svr")

TAU_RANGE = (0.02, 0.3)
ADPD_ALPHA_RANGE = (0.0, 70.0)
RIDGE_ALPHA_RANGE = (10.0, 100.0)
SVR_C_RANGE = (0.1, 2.0)
SVR_EPSILONS = (0.1, 0.2, 0.3, 0.4, 0.5)
SVR_KERNELS = ("linear", "rbf", "poly")
PCA_KS = tuple(range(1, 21))


@dataclass(frozen=True)
class SearchSpace:
    """Cartesian grid of feature methods x PCA component counts x model configs.

    Trials are enumerated lexicographically in that order, each axis in the
    order given here.
    """

    methods: tuple
    pca_ks: tuple
    models: tuple

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "pca_ks", tuple(int(k) for k in self.pca_ks))
        object.__setattr__(self, "models", tuple(self.models))
        if not (self.methods and self.pca_ks and self.models):
            raise ValueError("every axis of the search space must be non-empty")
        if any(k < 1 for k in self.pca_ks):
            raise ValueError("pca_k values must be >= 1")
        for m in self.models:
            if not isinstance(m, (RidgeConfig, SvrConfig)):
                raise TypeError(f"not a model config: {m!r}")

    def __len__(self):
        return len(self.methods) * len(self.pca_ks) * len(self.models)

    def points(self):
        """``(index, method, pca_k, model)`` in trace order."""
        grid = itertools.product(self.methods, self.pca_ks, self.models)
        return [(i, m, k, c) for i, (m, k, c) in enumerate(grid)]

    def to_dict(self) -> dict:
        return {"methods": [m.to_dict() for m in self.methods], "pca_ks": list(self.pca_ks),
                "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls([FeatureMethod.from_dict(m) for m in d["methods"]], d["pca_ks"],
                   [model_config_from_dict(m) for m in d["models"]])


def default_search_space(method_family: str, model_family: str, *, n_tau: int = 15,
                         n_alpha: int = 15, n_ridge: int = 10, n_c: int = 10,
                         epsilons=SVR_EPSILONS, kernels=SVR_KERNELS, pca_ks=PCA_KS,
                         scale: float = 100.0) -> SearchSpace:
    """Default grids: tau log-spaced on [0.02, 0.3], ADPD alpha on [0, 70],
    ridge alpha on [10, 100], SVR C on [0.1, 2] with epsilon 0.1..0.5 and all
    three kernels, PCA k = 1..20."""
    if method_family not in METHOD_FAMILIES:
        raise ValueError(f"unknown method family {method_family!r}; expected {METHOD_FAMILIES}")
    if model_family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {model_family!r}; expected {MODEL_FAMILIES}")
    if method_family == "base":
        methods = [FeatureMethod.base()]
    elif method_family == "derivative":
        methods = [FeatureMethod.derivative(scale)]
    elif method_family == "tbd":
        methods = [FeatureMethod.tbd(t, scale) for t in np.geomspace(*TAU_RANGE, n_tau)]
    else:
        methods = [FeatureMethod.adpd(a) for a in np.linspace(*ADPD_ALPHA_RANGE, n_alpha)]
    if model_family == "ridge":
        models = [RidgeConfig(float(a)) for a in np.linspace(*RIDGE_ALPHA_RANGE, n_ridge)]
    else:
        models = [SvrConfig(kernel, float(c), float(e)) for kernel in kernels
                  for c in np.linspace(*SVR_C_RANGE, n_c) for e in epsilons]
    return SearchSpace(methods, pca_ks, models)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one grid point.

    ``status`` is ``"ok"``, ``"skipped"`` (``pca_k`` larger than a training
    fold supports) or ``"error"`` (a fit raised; ``message`` says where).
    Only ``"ok"`` trials compete for the best.
    """

    index: int
    method: FeatureMethod
    pca_k: int
    model: object
    status: str
    metrics: MetricReport | None = None
    message: str = ""
    nonconverged_folds: int = 0

    @property
    def mse(self) -> float:
        return self.metrics.mse if self.metrics is not None else math.inf

    @property
    def rank_key(self) -> tuple:
        """Smaller is better: MSE, then fewer components, then less penalty
        (ridge alpha or SVR C), then grid position."""
        reg = self.model.alpha if isinstance(self.model, RidgeConfig) else self.model.C
        return (self.mse, self.pca_k, reg, self.index)

    def pipeline(self, preprocess: PreprocessConfig | None = None) -> PipelineConfig:
        return PipelineConfig(self.method, self.pca_k, self.model,
                              preprocess or PreprocessConfig())


@dataclass(frozen=True)
class SearchTrace:
    trials: tuple
    best: TrialResult | None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    def best_pipeline(self) -> PipelineConfig:
        if self.best is None:
            raise ValueError("no trial succeeded")
        return self.best.pipeline(self.preprocess)


def select_best(trials) -> TrialResult | None:
    ok = [t for t in trials if t.status == "ok"]
    return min(ok, key=lambda t: t.rank_key) if ok else None


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------


def _snake(members):
    """Order ``(slot, C, eps)`` by epsilon, sweeping C up and down alternately,
    so consecutive warm-started solves are close."""
    by_eps = {}
    for slot, c, e in members:
        by_eps.setdefault(e, []).append((c, slot))
    order = []
    for r, e in enumerate(sorted(by_eps)):
        row = sorted(by_eps[e], reverse=bool(r % 2))
        order += [(slot, c, e) for c, slot in row]
    return order


def _svr_groups(models):
    groups = {}
    for j, m in enumerate(models):
        if isinstance(m, SvrConfig):
            key = (m.kernel, m.gamma, m.degree, m.coef0, m.tol, m.max_iter)
            groups.setdefault(key, []).append((j, m.C, m.epsilon))
    return {key: _snake(members) for key, members in groups.items()}


def evaluate_feature_grid(X, y, ks, models):
    """LOOCV predictions of every ``(k, model)`` pair on one feature matrix.

    Returns ``(preds, errors, nonconverged)``: ``preds[a, j]`` holds the
    held-out predictions for ``ks[a]`` and ``models[j]``; ``errors`` maps
    failed ``(a, j)`` pairs to a message.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    nk, nm = len(ks), len(models)
    preds = np.full((nk, nm, n), np.nan)
    nonconv = np.zeros((nk, nm), dtype=np.int64)
    errors = {}
    ridge = [(j, m) for j, m in enumerate(models) if isinstance(m, RidgeConfig)]
    groups = _svr_groups(models)
    kmax = max(ks)

    def fail(a, slots, i, exc):
        for j in slots:
            errors.setdefault((a, j), str(FoldError(i, str(i), exc)))

    for i in range(n):
        X_train, y_train, X_test = fold_split(X, y, i)
        try:
            std = standardizer_fit(X_train)
            Z_train = standardizer_apply(std, X_train)
            Z_test = standardizer_apply(std, X_test)
            pca = pca_fit(Z_train, kmax)
            S_train_all = pca_transform(pca, Z_train)
            S_test_all = pca_transform(pca, Z_test)
        except Exception as exc:
            for a in range(nk):
                fail(a, range(nm), i, exc)
            continue
        y_train = np.ascontiguousarray(y_train)
        for a, k in enumerate(ks):
            S_train = np.ascontiguousarray(S_train_all[:, :k])
            S_test = np.ascontiguousarray(S_test_all[:, :k])
            if ridge:
                try:
                    fits = ridge_path(S_train, y_train, [m.alpha for _, m in ridge])
                except Exception:
                    # locate the failing penalties one at a time
                    fits = []
                    for j, m in ridge:
                        try:
                            fits.append(ridge_fit(S_train, y_train, m.alpha))
                        except Exception as exc:
                            fail(a, [j], i, exc)
                            fits.append(None)
                for (j, _), fit in zip(ridge, fits):
                    if fit is not None:
                        preds[a, j, i] = ridge_predict(fit, S_test)[0]
            for (kernel, gamma, degree, coef0, tol, max_iter), order in groups.items():
                slots = [s for s, _, _ in order]
                try:
                    g = resolve_gamma(models[slots[0]], S_train)
                    K = kernel_matrix(S_train, S_train, kernel, g, degree, coef0)
                    Kq = kernel_matrix(S_train, S_test, kernel, g, degree, coef0)
                    Cs = np.array([c for _, c, _ in order], dtype=float)
                    es = np.array([e for _, _, e in order], dtype=float)
                    out, _, conv = _kernels.svr_batch(K, y_train, Kq, Cs, es, float(tol),
                                                      int(max_iter), kernel == "linear")
                except Exception as exc:
                    fail(a, slots, i, exc)
                    continue
                for r, j in enumerate(slots):
                    preds[a, j, i] = out[r, 0]
                    nonconv[a, j] += not conv[r]
    return preds, errors, nonconv


def _method_trials(X, y, n, method_index, space):
    points = [(k, m) for k in space.pca_ks for m in space.models]
    kmax_ok = min(n - 2, X.shape[1])
    ks = [k for k in space.pca_ks if k <= kmax_ok]
    k_pos = {k: a for a, k in enumerate(ks)}
    if ks:
        preds, errors, nonconv = evaluate_feature_grid(X, y, ks, space.models)
    base = method_index * len(points)
    method = space.methods[method_index]
    out = []
    for off, (k, model) in enumerate(points):
        idx = base + off
        j = off % len(space.models)
        if k not in k_pos:
            out.append(TrialResult(idx, method, k, model, "skipped",
                                   message=f"pca_k={k} exceeds {kmax_ok} (n-2 for n={n})"))
            continue
        a = k_pos[k]
        if (a, j) in errors:
            out.append(TrialResult(idx, method, k, model, "error", message=errors[(a, j)]))
            continue
        out.append(TrialResult(idx, method, k, model, "ok",
                               metrics_from_arrays(y, [float(v) for v in preds[a, j]]),
                               nonconverged_folds=int(nonconv[a, j])))
    return out


def grid_search(dataset: SpectralDataset, space: SearchSpace,
                preprocess: PreprocessConfig | None = None, threads: int = 1) -> SearchTrace:
    """Evaluate every point of ``space`` by a full leave-one-out run.

    Feature settings are independent and run on up to ``threads`` worker
    threads; the trace is assembled in grid order regardless, so the result
    does not depend on ``threads``.
    """
    preprocess = preprocess or PreprocessConfig()
    prepared = prepare_dataset(dataset, preprocess)
    n = len(prepared)
    if n < 4:
        raise ValueError(f"grid search needs at least 4 samples, got {n}")
    y = np.array(prepared.labels, dtype=float)
    deriv = derivative_values(prepared.values, prepared.grid.step)

    def one(mi):
        method = space.methods[mi]
        try:
            X = feature_values(prepared.values, prepared.grid.step, method, deriv)
        except Exception as exc:
            per = len(space.pca_ks) * len(space.models)
            msg = f"feature transform failed: {type(exc).__name__}: {exc}"
            return [TrialResult(mi * per + off, method, k, m, "error", message=msg)
                    for off, (k, m) in enumerate(itertools.product(space.pca_ks, space.models))]
        trials = _method_trials(X, y, n, mi, space)
        log.info("feature setting %d/%d (%s) done", mi + 1, len(space.methods), method.label)
        return trials

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(one, range(len(space.methods))))
    else:
        parts = [one(mi) for mi in range(len(space.methods))]
    trials = tuple(t for part in parts for t in part)
    return SearchTrace(trials, select_best(trials), preprocess)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

TRACE_COLUMNS = ("trial", "method", "tau", "adpd_alpha", "scale", "pca_k", "model",
                 "ridge_alpha", "kernel", "C", "epsilon", "gamma", "degree", "coef0",
                 "mse", "mae", "rmse", "r2", "status", "nonconverged_folds", "message")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def trial_row(t: TrialResult) -> list:
    m = t.method
    ridge = isinstance(t.model, RidgeConfig)
    met = t.metrics
    r2 = None if met is None else ("undefined" if met.r2 is None else met.r2)
    return [t.index, m.kind, m.tau, m.alpha, m.scale if m.kind in ("derivative", "tbd") else None,
            t.pca_k, t.model.family,
            t.model.alpha if ridge else None,
            None if ridge else t.model.kernel,
            None if ridge else t.model.C,
            None if ridge else t.model.epsilon,
            None if ridge else t.model.gamma,
            None if ridge else t.model.degree,
            None if ridge else t.model.coef0,
            None if met is None else met.mse,
            None if met is None else met.mae,
            None if met is None else met.rmse,
            r2, t.status, t.nonconverged_folds, t.message]


def trace_csv_text(trace: SearchTrace) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    lines += [",".join(_cell(v) for v in trial_row(t)) for t in trace.trials]
    return "\n".join(lines) + "\n"
