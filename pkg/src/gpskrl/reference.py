"""Reference paths: dense polylines with headings, speeds and arc positions.

A reference path is a sequence of full reference states

    r_i = [v_ref, 0, heading_i, 0, X_i, Y_i]

sampled densely along a geometric path. Reference lateral velocity, yaw rate
and control are zero; the heading comes from the local segment direction.
"""

from __future__ import annotations

import numpy as np

from .dynamics import N_STATES, PHI, PX, PY, VX, wrap_angle

DEFAULT_SPACING = 0.5


class DegenerateSpecError(ValueError):
    """Raised for path specs with fewer than two distinct points."""


class ReferencePath:
    """Dense polyline of reference states plus cumulative arc length."""

    def __init__(self, states: np.ndarray, arc: np.ndarray):
        self.states = np.asarray(states, dtype=float)
        self.arc = np.asarray(arc, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != N_STATES:
            raise ValueError("states must be (N, 6)")
        if len(self.arc) != len(self.states):
            raise ValueError("arc length mismatch")

    def __len__(self):
        return len(self.states)

    @property
    def xy(self) -> np.ndarray:
        return self.states[:, (PX, PY)]

    @property
    def total_length(self) -> float:
        return float(self.arc[-1])

    def state_at(self, index: int) -> np.ndarray:
        return self.states[index]


def _resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at (approximately) uniform spacing, keeping endpoints."""
    seg = np.diff(points, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 1e-12
    if not np.any(keep):
        raise DegenerateSpecError("need at least two distinct points")
    pts = np.vstack([points[0], points[1:][keep]])
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n = max(int(np.ceil(total / spacing)) + 1, 2)
    s = np.linspace(0.0, total, n)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.column_stack([x, y])


def path_from_xy(xy: np.ndarray, v_ref: float,
                 spacing: float = DEFAULT_SPACING) -> ReferencePath:
    """Build a ReferencePath from 2-D waypoints.

    Headings are finite differences of the resampled polyline; the last point
    reuses the final segment heading.
    """
    xy = np.asarray(xy, dtype=float)
    if xy.ndim != 2 or xy.shape[0] < 2:
        raise DegenerateSpecError("need at least two points")
    pts = _resample_polyline(xy, spacing)
    d = np.diff(pts, axis=0)
    heading = np.arctan2(d[:, 1], d[:, 0])
    heading = np.append(heading, heading[-1])
    heading = wrap_angle(heading)

    states = np.zeros((len(pts), N_STATES))
    states[:, VX] = v_ref
    states[:, PHI] = heading
    states[:, PX] = pts[:, 0]
    states[:, PY] = pts[:, 1]
    seg_len = np.hypot(d[:, 0], d[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    return ReferencePath(states, arc)


def straight_line(start_xy, end_xy, v_ref: float,
                  spacing: float = DEFAULT_SPACING) -> ReferencePath:
    start = np.asarray(start_xy, dtype=float)
    end = np.asarray(end_xy, dtype=float)
    if np.allclose(start, end):
        raise DegenerateSpecError("start and end coincide")
    return path_from_xy(np.vstack([start, end]), v_ref, spacing)


def racetrack(total_length: float, v_ref: float, straight_fraction: float = 0.5,
              center=(0.0, 0.0), spacing: float = DEFAULT_SPACING) -> ReferencePath:
    """Closed stadium track of the requested total length.

    Two straights of combined length `straight_fraction * total_length` joined
    by semicircular ends. `straight_fraction=0` gives a circle.
    """
    if total_length <= 0:
        raise DegenerateSpecError("total_length must be positive")
    if not 0 <= straight_fraction < 1:
        raise ValueError("straight_fraction in [0, 1)")
    straight = straight_fraction * total_length / 2.0
    radius = (total_length - 2 * straight) / (2 * np.pi)
    cx, cy = center

    pts = []
    n_arc = max(int(np.ceil(np.pi * radius / spacing)), 8)
    # bottom straight, right arc, top straight, left arc
    for t in np.linspace(0, 1, max(int(straight / spacing), 2), endpoint=False):
        pts.append((cx - straight / 2 + t * straight, cy - radius))
    for a in np.linspace(-np.pi / 2, np.pi / 2, n_arc, endpoint=False):
        pts.append((cx + straight / 2 + radius * np.cos(a), cy + radius * np.sin(a)))
    for t in np.linspace(0, 1, max(int(straight / spacing), 2), endpoint=False):
        pts.append((cx + straight / 2 - t * straight, cy + radius))
    for a in np.linspace(np.pi / 2, 3 * np.pi / 2, n_arc, endpoint=False):
        pts.append((cx - straight / 2 + radius * np.cos(a), cy + radius * np.sin(a)))
    pts.append(pts[0])
    return path_from_xy(np.array(pts), v_ref, spacing)


def build_reference(kind: str, spec: dict, v_ref: float,
                    spacing: float = DEFAULT_SPACING) -> ReferencePath:
    """Build a reference path. kind: straight | racetrack | waypoints."""
    if kind == "straight":
        return straight_line(spec["start"], spec["end"], v_ref, spacing)
    if kind == "racetrack":
        return racetrack(spec["total_length"], v_ref,
                         spec.get("straight_fraction", 0.5),
                         spec.get("center", (0.0, 0.0)), spacing)
    if kind == "waypoints":
        return path_from_xy(np.asarray(spec["points"], dtype=float), v_ref, spacing)
    raise ValueError(f"unknown path kind {kind!r}")
