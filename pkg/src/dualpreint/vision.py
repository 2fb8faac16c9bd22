"""Pinhole fiducial-marker measurement model.

Markers live in the follower body frame; the camera frame coincides with
the leader body frame (no extrinsic).
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import BehindCamera

_MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    sigma_px: float = 1.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.sigma_px <= 0:
            raise ValueError("fx, fy and sigma_px must be positive")


@dataclass(frozen=True)
class Marker:
    marker_id: int
    point: np.ndarray   # 3-vector in the follower body frame, m


@dataclass(frozen=True)
class FeatureObservation:
    marker_id: int
    pixel: np.ndarray   # 2-vector, px
    timestamp: float


def project(rel, marker, cam):
    """Project one marker through the relative pose; raises BehindCamera."""
    X = rel.R @ marker.point + rel.p
    if X[2] <= _MIN_DEPTH:
        raise BehindCamera(f"marker {marker.marker_id} at depth {X[2]}")
    return np.array([cam.fx * X[0] / X[2] + cam.cx,
                     cam.fy * X[1] / X[2] + cam.cy])


def reprojection_residual_and_jacobian(rel, marker, cam, obs):
    """Reprojection residual and its 2x9 Jacobian over (d_theta, d_p, d_v).

    The velocity block is identically zero: the projection does not depend
    on the relative velocity.
    """
    X = rel.R @ marker.point + rel.p
    if X[2] <= _MIN_DEPTH:
        raise BehindCamera(f"marker {marker.marker_id} at depth {X[2]}")
    x, y, z = X
    r = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy]) - obs.pixel

    d_pi = np.array([[cam.fx / z, 0.0, -cam.fx * x / z**2],
                     [0.0, cam.fy / z, -cam.fy * y / z**2]])
    J = np.zeros((2, 9))
    J[:, 0:3] = d_pi @ (-rel.R @ so3.hat(marker.point))
    J[:, 3:6] = d_pi
    return r, J


def in_bounds(pixel, cam):
    return 0.0 <= pixel[0] < cam.width and 0.0 <= pixel[1] < cam.height
