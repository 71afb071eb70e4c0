"""Cross-validation, error metrics and clinical error grids."""

from .cv import (CvPrediction, CvResult, FoldError, PipelineConfig, cross_validate,
                 cross_validate_features, fit_fold, fold_scores, fold_split, loocv_predict,
                 loocv_run, pipeline_features, prepare_dataset)
from .errorgrid import (ZONES, ErrorGridReport, GridKind, clarke_zone, clarke_zones,
                        error_grid_report, parkes_zone, parkes_zones)
from .metrics import MetricReport, compute_metrics, metrics_from_arrays
from .report import evaluation_report

__all__ = [
    "CvPrediction", "CvResult", "ErrorGridReport", "FoldError", "GridKind", "MetricReport",
    "PipelineConfig", "ZONES", "clarke_zone", "clarke_zones", "compute_metrics",
    "cross_validate", "cross_validate_features", "error_grid_report", "evaluation_report",
    "fit_fold", "fold_scores", "fold_split", "loocv_predict", "loocv_run",
    "metrics_from_arrays", "parkes_zone", "parkes_zones", "pipeline_features",
    "prepare_dataset",
]
