"""Coordinate frames for trajectory figures.

The rotating frame keeps the x axis along the reference point's radial
direction at every sample, so a station-keeping orbit collapses to a
near-fixed point and a transfer reads as motion relative to the target
path rather than a full revolution.
"""

from __future__ import annotations

import numpy as np


def radial_basis(c_r: np.ndarray, c_v: np.ndarray) -> np.ndarray:
    """Orthonormal rows (dim, dim): x along the radial, planar y completes
    right-handed; in 3 dimensions z follows the orbit normal."""
    ex = c_r / np.linalg.norm(c_r)
    if c_r.shape[0] == 2:
        ey = np.array([-ex[1], ex[0]])
        return np.stack([ex, ey])
    w = np.cross(c_r, c_v)
    ez = w / np.linalg.norm(w)
    ey = np.cross(ez, ex)
    return np.stack([ex, ey, ez])


def to_rotating(
    points: np.ndarray, centers_r: np.ndarray, centers_v: np.ndarray
) -> np.ndarray:
    """Per-sample rotating coordinates of points about the reference.

    points, centers_r, centers_v: (N, dim).  Returns (N, dim) relative
    coordinates with x along the reference radial at each sample.
    """
    out = np.empty_like(points)
    for k in range(points.shape[0]):
        B = radial_basis(centers_r[k], centers_v[k])
        out[k] = B @ (points[k] - centers_r[k])
    return out


def to_relative(points: np.ndarray, centers_r: np.ndarray) -> np.ndarray:
    """Inertial-axes offsets from the reference path."""
    return points - centers_r
