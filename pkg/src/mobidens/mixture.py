"""Homogeneous mixtures of Mobius or Gaussian components, and density fields."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .densities import GaussianParams, MobiusParams, gaussian_logpdf_array, mobius_logpdf_array
from .geometry import GridSpec, Point2
from .scenario import Scenario

WEIGHT_SUM_TOL = 1e-9


class Kind(str, enum.Enum):
    MOBIUS = "mobius"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown mixture kind {value!r}; expected 'mobius' or 'gaussian'") from None


ComponentParams = Union[MobiusParams, GaussianParams]
_PARAM_TYPE = {Kind.MOBIUS: MobiusParams, Kind.GAUSSIAN: GaussianParams}


@dataclass(frozen=True)
class MixtureModel:
    kind: Kind
    components: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.components) < 1:
            raise ValueError("a mixture needs at least one component")
        if len(self.components) != len(self.weights):
            raise ValueError(f"{len(self.components)} components but {len(self.weights)} weights")
        expected = _PARAM_TYPE[self.kind]
        for c in self.components:
            if not isinstance(c, expected):
                raise TypeError(f"{self.kind.value} mixture cannot hold {type(c).__name__}")
        if any(not (w >= 0.0) for w in self.weights):
            raise ValueError(f"weights must be non-negative, got {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {math.fsum(self.weights)}")

    @property
    def K(self) -> int:
        return len(self.components)

    def component_log_densities(self, x, y) -> np.ndarray:
        """Array of shape ``(K,) + broadcast(x, y).shape``."""
        x = np.asarray(x, dtype=float)[None, ...]
        y = np.asarray(y, dtype=float)[None, ...]
        extra = (1,) * (x.ndim - 1)
        cols = np.array([list(_fields(c)) for c in self.components], dtype=float)
        params = [cols[:, j].reshape((-1,) + extra) for j in range(cols.shape[1])]
        if self.kind is Kind.MOBIUS:
            return mobius_logpdf_array(*params, x, y)
        return gaussian_logpdf_array(*params, x, y)

    def component_densities(self, x, y) -> np.ndarray:
        """Weighted component densities ``w_k * pdf_k``, shape ``(K, ...)``."""
        w = np.asarray(self.weights).reshape((-1,) + (1,) * np.ndim(np.broadcast(x, y)))
        return w * np.exp(self.component_log_densities(x, y))

    def pdf(self, x, y) -> np.ndarray:
        parts = self.component_densities(x, y)
        out = parts[0].copy()
        for k in range(1, self.K):  # fixed summation order
            out += parts[k]
        return out


def _fields(c: ComponentParams):
    if isinstance(c, MobiusParams):
        return (c.gamma, c.beta, c.a, c.mu)
    return (c.mean_x, c.mean_y, c.sigma_x, c.sigma_y, c.rho)


def mixture_pdf(m: MixtureModel, z: Point2) -> float:
    return float(m.pdf(z[0], z[1]))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Density values on a :class:`GridSpec`, aligned with its point order."""

    grid: GridSpec
    values: np.ndarray
    scenario: Scenario | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values for a {self.grid.points_per_axis}^2 grid, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0):
            raise ValueError("density values must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def as_image(self) -> np.ndarray:
        """Values reshaped to ``(n, n)`` with rows indexed by y."""
        n = self.grid.points_per_axis
        return self.values.reshape(n, n)

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def argmax_cell(self) -> tuple[int, int]:
        i = int(np.argmax(self.values))
        n = self.grid.points_per_axis
        return i % n, i // n

    def argmax_point(self) -> Point2:
        xy = self.grid.coordinates()[int(np.argmax(self.values))]
        return Point2(float(xy[0]), float(xy[1]))

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


def evaluate_on_grid(m: MixtureModel, g: GridSpec, scenario: Scenario | None = None) -> DensityField:
    xy = g.coordinates()
    return DensityField(g, m.pdf(xy[:, 0], xy[:, 1]), scenario)


def component_fields(m: MixtureModel, g: GridSpec, scenario: Scenario | None = None) -> list[DensityField]:
    xy = g.coordinates()
    parts = m.component_densities(xy[:, 0], xy[:, 1])
    return [DensityField(g, p, scenario, {"component": k}) for k, p in enumerate(parts)]


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


CSV_HEADER = ("x", "y", "density")


def write_field_csv(f: DensityField, path) -> None:
    xy = f.grid.coordinates()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for (x, y), v in zip(xy, f.values):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def read_field_csv(path, scenario: Scenario | None = None) -> DensityField:
    """Read a field written by :func:`write_field_csv`; the grid is inferred
    from the row count and the coordinates are checked against it."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
    data = np.array(rows, dtype=float).reshape(-1, 3)
    n = math.isqrt(len(data))
    if n * n != len(data) or n == 0:
        raise ValueError(f"{path}: {len(data)} rows do not form a square grid")
    grid = GridSpec(n)
    if not np.allclose(data[:, :2], grid.coordinates(), rtol=0, atol=1e-12):
        raise ValueError(f"{path}: coordinates do not match a {n}x{n} cell-center grid in row-major order")
    return DensityField(grid, data[:, 2], scenario)


def stack_values(fields: Sequence[DensityField]) -> np.ndarray:
    return np.stack([f.values for f in fields])
