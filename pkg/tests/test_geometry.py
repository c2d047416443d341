import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mobidens.geometry import (
    GridSpec,
    Point2,
    PolarPoint,
    cartesian_to_polar,
    grid_points,
    in_unit_disk,
    polar_to_cartesian,
    wrap_angle,
)


@pytest.mark.parametrize(
    "polar, expected",
    [
        (PolarPoint(0.0, math.pi), (0.0, 0.0)),
        (PolarPoint(0.6, math.pi), (-0.6, 0.0)),
        (PolarPoint(1.0, math.pi / 2), (0.0, 1.0)),
    ],
)
def test_polar_to_cartesian_axis_cases(polar, expected):
    p = polar_to_cartesian(polar)
    assert p.x == pytest.approx(expected[0], abs=1e-15)
    assert p.y == pytest.approx(expected[1], abs=1e-15)


@pytest.mark.parametrize("p, inside", [((0, 0), True), ((1, 0), True), ((0.9, 0.9), False)])
def test_in_unit_disk(p, inside):
    assert in_unit_disk(Point2(*p)) is inside


def test_grid_points_small():
    assert grid_points(GridSpec(1)) == [Point2(0.0, 0.0)]
    assert grid_points(GridSpec(2)) == [Point2(-0.5, -0.5), Point2(0.5, -0.5), Point2(-0.5, 0.5), Point2(0.5, 0.5)]
    assert len(grid_points(GridSpec(100))) == 10_000


def test_cell_center_formula():
    g = GridSpec(100)
    ax = g.axis()
    assert ax[0] == pytest.approx(-0.99)
    assert ax[49] == pytest.approx(-0.01)
    assert np.allclose(ax, -1 + (np.arange(100) + 0.5) * 0.02, rtol=0, atol=1e-15)
    xy = g.coordinates()
    # x varies fastest
    assert xy[1, 0] > xy[0, 0] and xy[1, 1] == xy[0, 1]


@given(st.integers(min_value=1, max_value=200))
def test_grid_count_and_extent(n):
    xy = GridSpec(n).coordinates()
    assert xy.shape == (n * n, 2)
    assert np.all(np.abs(xy) < 1.0)


@given(
    st.floats(min_value=1e-6, max_value=10.0),
    st.floats(min_value=-math.pi, max_value=math.pi, exclude_min=True),
)
def test_polar_round_trip(radius, angle):
    back = cartesian_to_polar(polar_to_cartesian(PolarPoint(radius, angle)))
    assert back.radius == pytest.approx(radius, rel=1e-12, abs=1e-12)
    assert abs(wrap_angle(back.angle - angle)) < 1e-12


def test_negative_pi_maps_to_pi():
    assert cartesian_to_polar(Point2(-1.0, -0.0)).angle == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_inside_mask_counts_cells_within_disk():
    g = GridSpec(100)
    m = g.inside_mask()
    # the inside cell area approximates pi
    assert m.sum() * g.cell_area == pytest.approx(math.pi, rel=2e-3)


def test_cells_containing_corner_and_interior():
    g = GridSpec(100)
    assert g.cells_containing(Point2(-0.6, 0.0)) == {(19, 49), (20, 49), (19, 50), (20, 50)}
    assert g.cells_containing(Point2(-0.59, 0.01)) == {(20, 50)}
    assert g.cell_of(Point2(-0.59, 0.01)) == (20, 50)
    assert g.cells_containing(Point2(-1.0, 0.005)) == {(0, 50)}


def test_gridspec_rejects_bad_sizes():
    with pytest.raises(ValueError):
        GridSpec(0)
    with pytest.raises(ValueError):
        GridSpec(2.5)
