"""Charging-aware random waypoint mobility on the unit disk.

A node walks at unit speed between waypoints drawn uniformly on the disk.
Once it has covered ``d`` since leaving its last waypoint (depleted), the
first point of the leg that also lies within ``d_prime`` of the charger
triggers a diversion: start -> trigger -> charger -> destination. The budget
resets at the charger and at every waypoint; a leg diverts at most once.

Occupancy is measured by sampling the path every ``sample_step`` of arc
length into a histogram over the evaluation grid.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .geometry import GridSpec, Point2
from .mixture import DensityField
from .scenario import Scenario

MIN_WINDOW_DISTANCE = 1e6
_CHUNK = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    total_distance: float = 5e6  # per measurement window
    windows: int = 10
    sample_step: float = 1e-3
    seed: int = 0
    strict_regime: bool = True
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if not self.total_distance >= MIN_WINDOW_DISTANCE:
            raise ValueError(f"total_distance per window must be >= {MIN_WINDOW_DISTANCE:g}, got {self.total_distance}")
        if int(self.windows) != self.windows or self.windows < 1:
            raise ValueError(f"windows must be a positive integer, got {self.windows}")
        if not (math.isfinite(self.sample_step) and 0 < self.sample_step <= 0.1):
            raise ValueError(f"sample_step must lie in (0, 0.1], got {self.sample_step}")
        if not (self.total_distance / self.sample_step) < 2 ** 62:
            raise ValueError("too many samples per window")

    @property
    def samples_per_window(self) -> int:
        return int(round(self.total_distance / self.sample_step))


class TrajectoryLeg(NamedTuple):
    start: Point2
    destination: Point2
    diversion: tuple[Point2, Point2] | None = None  # (trigger_point, charger)

    def path(self) -> list[Point2]:
        if self.diversion is None:
            return [self.start, self.destination]
        return [self.start, self.diversion[0], self.diversion[1], self.destination]

    def length(self) -> float:
        pts = self.path()
        return sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))


def next_waypoint(rng: np.random.Generator) -> Point2:
    """Uniform point on the unit disk (inverse-CDF in the radius)."""
    r = math.sqrt(rng.random())
    phi = rng.uniform(-math.pi, math.pi)
    return Point2(r * math.cos(phi), r * math.sin(phi))


def _waypoint_chunk(rng: np.random.Generator, n: int) -> np.ndarray:
    r = np.sqrt(rng.random(n))
    phi = rng.uniform(-np.pi, np.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@numba.njit(cache=True)
def _trigger_distance(px, py, qx, qy, d, dp, cx, cy):
    """Arc length along P->Q of the first point at distance >= d from P that
    lies in the closed disk of radius dp about C, or -1 if there is none."""
    lx = qx - px
    ly = qy - py
    length = math.sqrt(lx * lx + ly * ly)
    if length < d or length == 0.0:
        return -1.0
    ux = lx / length
    uy = ly / length
    # |P - C + t u|^2 = dp^2  ->  t^2 + 2 b t + c = 0
    wx = px - cx
    wy = py - cy
    b = ux * wx + uy * wy
    c = wx * wx + wy * wy - dp * dp
    disc = b * b - c
    if disc < 0.0:
        return -1.0
    root = math.sqrt(disc)
    t_in = -b - root
    t_out = -b + root
    lo = max(t_in, d)
    hi = min(t_out, length)
    if lo > hi:
        return -1.0
    return lo


def detect_diversion(leg_start: Point2, leg_end: Point2, s: Scenario) -> Point2 | None:
    c = s.charger
    t = _trigger_distance(leg_start[0], leg_start[1], leg_end[0], leg_end[1], s.d, s.d_prime, c[0], c[1])
    if t < 0:
        return None
    length = math.dist(leg_start, leg_end)
    f = t / length
    return Point2(leg_start[0] + f * (leg_end[0] - leg_start[0]), leg_start[1] + f * (leg_end[1] - leg_start[1]))


def plan_leg(start: Point2, destination: Point2, s: Scenario) -> TrajectoryLeg:
    trigger = None if s.never_depleted else detect_diversion(start, destination, s)
    if trigger is None:
        return TrajectoryLeg(start, destination)
    return TrajectoryLeg(start, destination, (trigger, s.charger))


@numba.njit(cache=True)
def _walk(ax, ay, bx, by, state, counts, hist, n, inv_w, step, per_window):
    # state: [phase, window, samples in window]; returns True when all windows are full
    dx = bx - ax
    dy = by - ay
    length = math.sqrt(dx * dx + dy * dy)
    if length == 0.0:
        return False
    ux = dx / length
    uy = dy / length
    t = state[0]
    win = int(state[1])
    count = counts[0]
    n_windows = hist.shape[0]
    while t < length:
        x = ax + t * ux
        y = ay + t * uy
        ix = int((x + 1.0) * inv_w)
        iy = int((y + 1.0) * inv_w)
        if ix >= n:
            ix = n - 1
        if iy >= n:
            iy = n - 1
        hist[win, iy, ix] += 1
        count += 1
        if count == per_window:
            count = 0
            win += 1
            if win == n_windows:
                state[1] = win
                counts[0] = count
                return True
        t += step
    state[0] = t - length
    state[1] = win
    counts[0] = count
    return False


@numba.njit(cache=True)
def _run_chunk(waypoints, pos, state, counts, hist, n, step, per_window, d, dp, cx, cy, divert, stats):
    inv_w = n / 2.0
    px = pos[0]
    py = pos[1]
    for i in range(waypoints.shape[0]):
        qx = waypoints[i, 0]
        qy = waypoints[i, 1]
        stats[0] += 1
        t = -1.0
        if divert:
            t = _trigger_distance(px, py, qx, qy, d, dp, cx, cy)
        if t >= 0.0:
            stats[1] += 1
            lx = qx - px
            ly = qy - py
            length = math.sqrt(lx * lx + ly * ly)
            tx = px + t / length * lx
            ty = py + t / length * ly
            if _walk(px, py, tx, ty, state, counts, hist, n, inv_w, step, per_window):
                return True
            if _walk(tx, ty, cx, cy, state, counts, hist, n, inv_w, step, per_window):
                return True
            if _walk(cx, cy, qx, qy, state, counts, hist, n, inv_w, step, per_window):
                return True
        else:
            if _walk(px, py, qx, qy, state, counts, hist, n, inv_w, step, per_window):
                return True
        px = qx
        py = qy
        pos[0] = px
        pos[1] = py
    return False


def simulate_counts(cfg: SimConfig) -> tuple[np.ndarray, dict]:
    """Raw occupancy histograms, shape (windows, n, n), rows indexed by y."""
    s = cfg.scenario
    s.check_simulable(strict=cfg.strict_regime)
    n = cfg.grid.points_per_axis
    rng = np.random.default_rng(cfg.seed)
    hist = np.zeros((cfg.windows, n, n), dtype=np.int64)
    first = next_waypoint(rng)
    pos = np.array([first.x, first.y])
    state = np.zeros(2)
    counts = np.zeros(1, dtype=np.int64)
    stats = np.zeros(2, dtype=np.int64)  # legs, diversions
    cx, cy = s.charger
    t0 = time.perf_counter()
    done = False
    while not done:
        chunk = _waypoint_chunk(rng, _CHUNK)
        done = _run_chunk(chunk, pos, state, counts, hist, n, cfg.sample_step, cfg.samples_per_window,
                          s.d, s.d_prime, cx, cy, not s.never_depleted, stats)
    meta = {
        "seed": cfg.seed,
        "scenario": asdict(s),
        "distance_per_window": cfg.total_distance,
        "windows": cfg.windows,
        "total_distance": cfg.total_distance * cfg.windows,
        "sample_step": cfg.sample_step,
        "samples_per_window": cfg.samples_per_window,
        "legs": int(stats[0]),
        "diversions": int(stats[1]),
        "wall_time_s": time.perf_counter() - t0,
    }
    return hist, meta


def counts_to_field(counts: np.ndarray, grid: GridSpec, scenario: Scenario | None = None, meta=None) -> DensityField:
    """Normalize an occupancy histogram so that sum(values) * cell_area = 1,
    with every cell whose center lies outside the disk set to exactly 0."""
    vals = counts.astype(float).ravel()
    vals[~grid.inside_mask()] = 0.0
    total = vals.sum()
    if total <= 0:
        raise ValueError("histogram has no mass inside the disk")
    return DensityField(grid, vals / (total * grid.cell_area), scenario, dict(meta or {}))


def simulate_density(cfg: SimConfig) -> list[DensityField]:
    hist, meta = simulate_counts(cfg)
    return [counts_to_field(h, cfg.grid, cfg.scenario, {**meta, "window": w}) for w, h in enumerate(hist)]


def average_fields(fields: list[DensityField]) -> DensityField:
    vals = np.mean([f.values for f in fields], axis=0)
    return DensityField(fields[0].grid, vals, fields[0].scenario, {"windows_averaged": len(fields)})


def run_metadata_json(meta: dict) -> str:
    return json.dumps({"format_version": 1, **meta}, indent=1)
