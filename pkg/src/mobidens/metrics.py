"""MSE and KL divergence between density fields."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .mixture import DensityField

KL_FLOOR = 1e-12
KL_DIRECTION = "KL(truth || approx)"


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    mse: float
    kl: float
    n_points: int
    kl_direction: str = KL_DIRECTION

    def __post_init__(self):
        if not (math.isfinite(self.mse) and self.mse >= 0):
            raise ValueError(f"mse must be finite and non-negative, got {self.mse}")
        if not (math.isfinite(self.kl) and self.kl >= 0):
            raise ValueError(f"kl must be finite and non-negative, got {self.kl}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_grids(truth: DensityField, approx: DensityField) -> None:
    if truth.grid != approx.grid:
        raise GridMismatchError(
            f"grid mismatch: {truth.grid.points_per_axis}x{truth.grid.points_per_axis} vs "
            f"{approx.grid.points_per_axis}x{approx.grid.points_per_axis}"
        )


def mse(truth: DensityField, approx: DensityField) -> float:
    """Mean squared difference over every grid point, inside the disk or not."""
    _check_grids(truth, approx)
    diff = approx.values - truth.values
    return float(np.mean(diff * diff))


def kl_divergence(truth: DensityField, approx: DensityField) -> float:
    """Discrete KL(truth || approx) over grid points inside the disk.

    Both fields are renormalized to probability vectors; the model side is
    floored at ``KL_FLOOR`` first so zero model density stays finite.
    """
    _check_grids(truth, approx)
    inside = truth.grid.inside_mask()
    p = truth.values[inside]
    total = p.sum()
    if not total > 0:
        raise ValueError("truth field has zero mass inside the disk")
    p = p / total
    q = np.maximum(approx.values[inside], KL_FLOOR)
    q = q / q.sum()
    nz = p > 0
    kl = float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))
    # rounding can leave tiny negative values for identical distributions
    return max(kl, 0.0)


def evaluate(truth: DensityField, approx: DensityField) -> MetricReport:
    return MetricReport(mse(truth, approx), kl_divergence(truth, approx), truth.grid.size)


def summarize(reports: list[MetricReport]) -> dict:
    out = {"n": len(reports)}
    for key in ("mse", "kl"):
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max()),
                    "median": float(np.median(vals))}
    return out


def report_json(rows: list[dict], aggregate: dict) -> str:
    return json.dumps({"format_version": 1, "kl_direction": KL_DIRECTION, "rows": rows, "aggregate": aggregate}, indent=1)
