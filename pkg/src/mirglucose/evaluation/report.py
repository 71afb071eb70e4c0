"""Report documents and plot-ready data for a cross-validation result.

All numbers are written with ``repr`` so they round-trip to the exact
doubles the library computed.
"""

from __future__ import annotations

import json

import numpy as np

from .cv import CvResult
from .errorgrid import GridKind, clarke_rules, error_grid_report, parkes_data

GRID_KINDS = (GridKind.CLARKE, GridKind.PARKES_TYPE1, GridKind.PARKES_TYPE2)
REPORT_VERSION = 1


def grid_reports(result: CvResult) -> dict:
    return {k.value: error_grid_report(k, result.predictions) for k in GRID_KINDS}


def evaluation_report(result: CvResult) -> dict:
    """Metrics, error-grid zone counts and per-point records as a JSON-ready dict."""
    grids = grid_reports(result)
    points = []
    for i, p in enumerate(result.predictions):
        rec = {"sample_id": p.sample_id, "fold": p.fold_index, "reference": p.reference,
               "predicted": p.predicted, "abs_error": float(result.metrics.absolute_errors[i])}
        for kind, rep in grids.items():
            rec[f"{kind}_zone"] = rep.per_point_zones[i]
        points.append(rec)
    return {"report_version": REPORT_VERSION, "config": result.config.to_dict(),
            "label": result.config.label, "n_samples": len(result.predictions),
            "metrics": result.metrics.to_dict(),
            "nonconverged_folds": result.nonconverged_folds,
            "error_grids": {k: rep.to_dict() for k, rep in grids.items()},
            "points": points}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else repr(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def points_csv_text(report: dict) -> str:
    """Per-point table: reference, prediction, absolute error and zone letters."""
    cols = ("sample_id", "reference", "predicted", "abs_error", "clarke_zone", "parkes1_zone",
            "parkes2_zone")
    return _csv(cols, [[p[c] for c in cols] for p in report["points"]])


def scatter_csv_text(report: dict) -> str:
    return _csv(("reference", "predicted"),
                [[p["reference"], p["predicted"]] for p in report["points"]])


def ae_distribution(report: dict) -> dict:
    """Sorted absolute errors with five-number summary, for violin/box plots."""
    ae = np.sort(np.array([p["abs_error"] for p in report["points"]]))
    q = np.quantile(ae, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"label": report["label"], "sorted": [float(v) for v in ae],
            "summary": dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))}


def ae_csv_text(report: dict) -> str:
    return _csv(("sample_id", "abs_error"),
                [[p["sample_id"], p["abs_error"]] for p in report["points"]])


# --------------------------------------------------------------------------
# SVG rendering of the grids
# --------------------------------------------------------------------------


def _clarke_lines(top: float) -> list:
    r = clarke_rules()
    h, hy, band = r["hypo"], r["hyper"], r["relative_band"]
    uc, lc = r["upper_c"], r["lower_c"]
    lo_b = 1 - band
    return [
        [(0, h), (h / (1 + band), h), (top / (1 + band), top)],
        [(h, 0), (h, h * lo_b), (top, top * lo_b)],
        [(uc["ref_min"], uc["ref_min"] + uc["offset"]), (uc["ref_max"], top)],
        [(lc["ref_min"], 0), (lc["ref_max"], lc["slope"] * lc["ref_max"] + lc["intercept"])],
        [(0, hy), (h, hy), (h, top)],
        [(r["right_d"]["ref_min"], h), (top, h)],
        [(r["right_d"]["ref_min"], h), (r["right_d"]["ref_min"], hy), (top, hy)],
        [(hy, 0), (hy, h)],
        [(0, h), (h, h)],
    ]


def error_grid_svg(kind, reference, predicted, size: int = 480) -> str:
    """Static SVG of one error grid with the given points overlaid."""
    kind = GridKind(kind)
    if kind is GridKind.CLARKE:
        top = 400.0
        lines = _clarke_lines(top)
    else:
        top = float(parkes_data()["canvas"][1])
        grid = parkes_data()["type1" if kind is GridKind.PARKES_TYPE1 else "type2"]
        lines = []
        for z in grid["zones"]:
            lines.append(z["upper"])
            if z["lower"] is not None:
                lines.append(z["lower"])
    pad = 40
    scale = (size - 2 * pad) / top

    def xy(x, y):
        return f"{pad + x * scale:.2f},{size - pad - y * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
           f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<polyline points="{xy(0, 0)} {xy(top, top)}" fill="none" stroke="grey" '
           'stroke-dasharray="4"/>']
    for line in lines:
        pts = " ".join(xy(min(x, top), min(y, top)) for x, y in line)
        out.append(f'<polyline points="{pts}" fill="none" stroke="black"/>')
    for r, p in zip(np.asarray(reference, float), np.asarray(predicted, float)):
        out.append(f'<circle cx="{pad + min(max(r, 0), top) * scale:.2f}" '
                   f'cy="{size - pad - min(max(p, 0), top) * scale:.2f}" r="3" fill="steelblue"/>')
    out.append(f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle">reference (mg/dl)</text>')
    out.append(f'<text x="12" y="{size / 2}" transform="rotate(-90 12 {size / 2})" '
               f'text-anchor="middle">predicted (mg/dl)</text>')
    out.append(f'<text x="{size / 2}" y="24" text-anchor="middle">{kind.value}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
