"""Coordinates on the unit disk and the square evaluation lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EXTENT = (-1.0, 1.0)


class Point2(NamedTuple):
    x: float
    y: float


class PolarPoint(NamedTuple):
    radius: float
    angle: float


def polar_to_cartesian(p: PolarPoint) -> Point2:
    return Point2(p.radius * math.cos(p.angle), p.radius * math.sin(p.angle))


def cartesian_to_polar(p: Point2) -> PolarPoint:
    """Inverse of :func:`polar_to_cartesian`; the angle lies in (-pi, pi]."""
    angle = math.atan2(p.y, p.x)
    if angle == -math.pi:
        angle = math.pi
    return PolarPoint(math.hypot(p.x, p.y), angle)


def in_unit_disk(p: Point2) -> bool:
    return p.x * p.x + p.y * p.y <= 1.0


def wrap_angle(angle):
    """Map angles into (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class GridSpec:
    """Square lattice of cell centers covering [-1, 1]^2.

    Coordinate index ``i`` maps to ``-1 + (i + 0.5) * cell_width``; points
    are ordered row-major with x varying fastest.
    """

    points_per_axis: int = 100

    def __post_init__(self):
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 1:
            raise ValueError(f"points_per_axis must be a positive integer, got {self.points_per_axis!r}")

    @property
    def cell_width(self) -> float:
        return (EXTENT[1] - EXTENT[0]) / self.points_per_axis

    @property
    def cell_area(self) -> float:
        return self.cell_width ** 2

    @property
    def size(self) -> int:
        return self.points_per_axis ** 2

    def axis(self) -> np.ndarray:
        i = np.arange(self.points_per_axis)
        return EXTENT[0] + (i + 0.5) * self.cell_width

    def coordinates(self) -> np.ndarray:
        """Grid points as an ``(n*n, 2)`` array in row-major order."""
        ax = self.axis()
        xx, yy = np.meshgrid(ax, ax, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def inside_mask(self) -> np.ndarray:
        xy = self.coordinates()
        return (xy ** 2).sum(axis=1) <= 1.0

    def flat_index(self, ix: int, iy: int) -> int:
        return iy * self.points_per_axis + ix

    def cell_of(self, p: Point2) -> tuple[int, int]:
        """(ix, iy) of the half-open cell containing ``p``; edges clamp inward."""
        n = self.points_per_axis
        ix = min(max(int(math.floor((p.x - EXTENT[0]) / self.cell_width)), 0), n - 1)
        iy = min(max(int(math.floor((p.y - EXTENT[0]) / self.cell_width)), 0), n - 1)
        return ix, iy

    def cells_containing(self, p: Point2, tol: float = 1e-9) -> set[tuple[int, int]]:
        """Every cell whose closed square contains ``p``.

        A point on a cell edge (or corner) belongs to two (or four) cells.
        """
        n = self.points_per_axis
        w = self.cell_width

        def candidates(v):
            u = (v - EXTENT[0]) / w
            k = round(u)
            if abs(u - k) < tol:
                return {j for j in (k - 1, k) if 0 <= j < n}
            return {min(max(int(math.floor(u)), 0), n - 1)}

        return {(ix, iy) for ix in candidates(p.x) for iy in candidates(p.y)}


def grid_points(g: GridSpec) -> list[Point2]:
    return [Point2(float(x), float(y)) for x, y in g.coordinates()]
