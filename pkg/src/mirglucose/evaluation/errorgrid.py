"""Clinical error-grid zones for (reference, predicted) glucose pairs.

Zone rules ship as JSON under ``data/``: the Clarke grid as the constants of
its piecewise inequalities, the Parkes consensus grids (type 1 and type 2
diabetes) as boundary polylines. Points on a boundary belong to the better
(alphabetically earlier) zone.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .. import _kernels

ZONES = ("A", "B", "C", "D", "E")


class GridKind(str, enum.Enum):
    CLARKE = "clarke"
    PARKES_TYPE1 = "parkes1"
    PARKES_TYPE2 = "parkes2"


def _load(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath("data", name).read_text("utf-8"))


@lru_cache(maxsize=None)
def clarke_rules() -> dict:
    return _load("clarke.json")


@lru_cache(maxsize=None)
def parkes_data() -> dict:
    return _load("parkes.json")


def _pairs(reference, predicted):
    ref = np.atleast_1d(np.asarray(reference, dtype=float))
    pred = np.atleast_1d(np.asarray(predicted, dtype=float))
    if ref.shape != pred.shape:
        raise ValueError(f"{ref.size} references but {pred.size} predictions")
    if not (np.all(np.isfinite(ref)) and np.all(np.isfinite(pred))):
        raise ValueError("glucose values must be finite")
    return ref, pred


# --------------------------------------------------------------------------
# Clarke
# --------------------------------------------------------------------------


def clarke_zones(reference, predicted) -> np.ndarray:
    """Vectorised Clarke zone letters (array of ``"A"`` .. ``"E"``)."""
    ref, pred = _pairs(reference, predicted)
    if np.any(ref <= 0) or np.any(pred <= 0):
        raise ValueError("Clarke zones need positive reference and predicted values")
    r = clarke_rules()
    band, hypo, hyper = r["relative_band"], r["hypo"], r["hyper"]
    uc, lc = r["upper_c"], r["lower_c"]
    a = (np.abs(pred - ref) <= band * ref) | ((ref <= hypo) & (pred <= hypo))
    e = ((ref > hyper) & (pred < hypo)) | ((ref < hypo) & (pred > hyper))
    c = (((ref >= uc["ref_min"]) & (ref <= uc["ref_max"]) & (pred > ref + uc["offset"]))
         | ((ref >= lc["ref_min"]) & (ref <= lc["ref_max"])
            & (pred < lc["slope"] * ref + lc["intercept"])))
    d = (((ref > r["right_d"]["ref_min"]) & (pred >= hypo) & (pred < hyper))
         | ((ref < hypo) & (pred > hypo) & (pred <= hyper) & (pred > r["left_d"]["slope"] * ref)))
    out = np.full(ref.shape, "B", dtype="<U1")
    # assign worst first so better zones overwrite on shared boundaries
    out[d] = "D"
    out[c] = "C"
    out[e] = "E"
    out[a] = "A"
    return out


def clarke_zone(reference: float, predicted: float) -> str:
    return str(clarke_zones([reference], [predicted])[0])


# --------------------------------------------------------------------------
# Parkes
# --------------------------------------------------------------------------


def _zone_polygon(upper, lower, top):
    """Closed region between an upper and a lower polyline on [0, top]^2."""
    lower = [(top, 0.0)] if lower is None else [tuple(map(float, v)) for v in lower]
    upper = [tuple(map(float, v)) for v in upper]
    poly = [(0.0, 0.0)] + lower
    if lower[-1][0] == top and upper[-1][1] == top:
        poly.append((top, top))
    elif not (lower[-1][0] == top and upper[-1][0] == top):
        raise ValueError("boundary polylines must end on the right or top canvas edge")
    poly += upper[::-1]
    return np.array(poly, dtype=float)


@lru_cache(maxsize=None)
def parkes_polygons(kind: str):
    """``(vx, vy, starts, zone_codes, fallback_code)`` for the polygon kernel."""
    data = parkes_data()
    grid = data["type1" if GridKind(kind) is GridKind.PARKES_TYPE1 else "type2"]
    top = float(data["canvas"][1])
    polys = [_zone_polygon(z["upper"], z["lower"], top) for z in grid["zones"]]
    starts = np.cumsum([0] + [len(p) for p in polys]).astype(np.int64)
    verts = np.concatenate(polys)
    codes = np.array([ZONES.index(z["zone"]) for z in grid["zones"]], dtype=np.int64)
    return (np.ascontiguousarray(verts[:, 0]), np.ascontiguousarray(verts[:, 1]), starts, codes,
            ZONES.index(grid["fallback"]))


def parkes_zones(kind, reference, predicted) -> np.ndarray:
    """Vectorised Parkes zone letters for ``kind`` in {``parkes1``, ``parkes2``}."""
    kind = GridKind(kind)
    if kind is GridKind.CLARKE:
        raise ValueError("use clarke_zones for the Clarke grid")
    ref, pred = _pairs(reference, predicted)
    lo, hi = parkes_data()["canvas"]
    if np.any(ref < lo) or np.any(ref > hi) or np.any(pred < lo) or np.any(pred > hi):
        raise ValueError(f"Parkes zones are defined on [{lo:g}, {hi:g}] mg/dl only")
    vx, vy, starts, codes, fallback = parkes_polygons(kind.value)
    found = _kernels.polygon_zones(np.ascontiguousarray(ref.ravel()),
                                   np.ascontiguousarray(pred.ravel()), vx, vy, starts, codes)
    found[found < 0] = fallback
    return np.array(ZONES, dtype="<U1")[found].reshape(ref.shape)


def parkes_zone(kind, reference: float, predicted: float) -> str:
    return str(parkes_zones(kind, [reference], [predicted])[0])


def zones_for(kind, reference, predicted) -> np.ndarray:
    if GridKind(kind) is GridKind.CLARKE:
        return clarke_zones(reference, predicted)
    return parkes_zones(kind, reference, predicted)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorGridReport:
    grid_kind: GridKind
    zone_counts: dict
    per_point_zones: tuple
    clipped: int = 0

    @property
    def outside_a(self) -> int:
        return len(self.per_point_zones) - self.zone_counts["A"]

    def to_dict(self) -> dict:
        return {"grid": self.grid_kind.value, "zone_counts": dict(self.zone_counts),
                "outside_a": self.outside_a, "clipped": self.clipped}


CLARKE_FLOOR = 1.0


def grid_domain(kind) -> tuple:
    """Closed value range on which ``kind`` is evaluated in reports."""
    if GridKind(kind) is GridKind.CLARKE:
        return CLARKE_FLOOR, np.inf
    lo, hi = parkes_data()["canvas"]
    return float(lo), float(hi)


def error_grid_report(kind, predictions) -> ErrorGridReport:
    """Zone every :class:`CvPrediction` (or ``(reference, predicted)`` pair).

    Predictions outside the grid's domain (a regressor can return values
    below 1 mg/dl or above the Parkes canvas) are clipped onto its edge
    before zoning; the number clipped is reported.
    """
    predictions = list(predictions)
    if not predictions:
        raise ValueError("error-grid report needs at least one prediction")
    if hasattr(predictions[0], "reference"):
        ref = [p.reference for p in predictions]
        pred = [p.predicted for p in predictions]
    else:
        ref, pred = zip(*predictions)
    ref, pred = _pairs(ref, pred)
    lo, hi = grid_domain(kind)
    clipped = int(np.count_nonzero((pred < lo) | (pred > hi)))
    zones = zones_for(kind, ref, np.clip(pred, lo, hi))
    counts = {z: int(np.count_nonzero(zones == z)) for z in ZONES}
    return ErrorGridReport(GridKind(kind), counts, tuple(str(z) for z in zones), clipped)
