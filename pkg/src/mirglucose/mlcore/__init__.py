"""Fitting machinery: standardisation, PCA, ridge and SVR."""

from __future__ import annotations

import json

import numpy as np

from .pca import PcaModel, pca_fit, pca_inverse, pca_transform
from .ridge import (RidgeConfig, RidgeModel, SingularSystemError, ridge_fit, ridge_path,
                    ridge_predict)
from .scaling import Standardizer, standardizer_apply, standardizer_fit
from .svr import (KERNELS, SvrConfig, SvrModel, fit_svr_config, kernel_eval, kernel_matrix,
                  svr_fit, svr_predict)

__all__ = [
    "KERNELS", "PcaModel", "RidgeConfig", "RidgeModel", "SingularSystemError", "Standardizer",
    "SvrConfig", "SvrModel", "fit_model", "kernel_eval", "kernel_matrix", "model_config_from_dict",
    "model_from_json", "model_to_json", "pca_fit", "pca_inverse", "pca_transform", "predict",
    "ridge_fit", "ridge_path", "ridge_predict", "standardizer_apply", "standardizer_fit",
    "svr_fit", "svr_predict",
]

MODEL_FORMAT_VERSION = 1


def model_config_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family")
    if family == "ridge":
        return RidgeConfig(**d)
    if family == "svr":
        return SvrConfig(**d)
    raise ValueError(f"unknown model family {family!r}")


def fit_model(config, X, y):
    if isinstance(config, RidgeConfig):
        return ridge_fit(X, y, config.alpha)
    if isinstance(config, SvrConfig):
        return fit_svr_config(config, X, y)
    raise TypeError(f"not a model config: {config!r}")


def predict(model, rows) -> np.ndarray:
    if isinstance(model, RidgeModel):
        return ridge_predict(model, rows)
    if isinstance(model, SvrModel):
        return svr_predict(model, rows)
    raise TypeError(f"not a fitted model: {model!r}")


def _num(v):
    return format(float(v), ".17g")


def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [_num(v) for v in a.ravel()]}


def _unarr(d):
    return np.array([float(v) for v in d["data"]], dtype=float).reshape(d["shape"])


def model_to_json(model, standardizer: Standardizer | None = None,
                  pca: PcaModel | None = None, extra: dict | None = None) -> str:
    """Serialise a fitted model (and its scaling/PCA stages) to versioned JSON.

    Floats are written as 17-significant-digit strings, which round-trip
    IEEE doubles exactly.
    """
    doc = {"format": "mirglucose-model", "version": MODEL_FORMAT_VERSION}
    if isinstance(model, RidgeModel):
        doc["model"] = {"family": "ridge", "alpha": _num(model.alpha),
                        "intercept": _num(model.intercept),
                        "coefficients": _arr(model.coefficients)}
    elif isinstance(model, SvrModel):
        doc["model"] = {"family": "svr", "kernel": model.kernel, "C": _num(model.C),
                        "epsilon": _num(model.epsilon), "gamma": _num(model.gamma),
                        "degree": model.degree, "coef0": _num(model.coef0),
                        "bias": _num(model.bias), "n_iter": model.n_iter,
                        "converged": model.converged, "kkt_gap": _num(model.kkt_gap),
                        "dual_coefs": _arr(model.dual_coefs),
                        "support_vectors": _arr(model.support_vectors)}
    else:
        raise TypeError(f"not a fitted model: {model!r}")
    if standardizer is not None:
        doc["standardizer"] = {"mean": _arr(standardizer.mean), "sd": _arr(standardizer.sd)}
    if pca is not None:
        doc["pca"] = {"components": _arr(pca.components), "center": _arr(pca.center),
                      "explained_variance": _arr(pca.explained_variance)}
    if extra:
        doc["extra"] = extra
    return json.dumps(doc, indent=1)


def model_from_json(text: str):
    """Inverse of :func:`model_to_json`; returns ``(model, standardizer, pca, extra)``."""
    doc = json.loads(text)
    if doc.get("format") != "mirglucose-model":
        raise ValueError("not a mirglucose model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    m = doc["model"]
    if m["family"] == "ridge":
        model = RidgeModel(_unarr(m["coefficients"]), float(m["intercept"]), float(m["alpha"]))
    else:
        model = SvrModel(m["kernel"], float(m["C"]), float(m["epsilon"]), float(m["gamma"]),
                         int(m["degree"]), float(m["coef0"]), _unarr(m["dual_coefs"]),
                         np.ascontiguousarray(_unarr(m["support_vectors"])), float(m["bias"]),
                         int(m["n_iter"]), bool(m["converged"]), float(m["kkt_gap"]))
    std = None
    if "standardizer" in doc:
        std = Standardizer(_unarr(doc["standardizer"]["mean"]), _unarr(doc["standardizer"]["sd"]))
    pca = None
    if "pca" in doc:
        p = doc["pca"]
        pca = PcaModel(np.ascontiguousarray(_unarr(p["components"])), _unarr(p["center"]),
                       _unarr(p["explained_variance"]))
    return model, std, pca, doc.get("extra", {})
