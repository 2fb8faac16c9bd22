"""SO(3) primitives: hat map, exponential/logarithm, right Jacobian and its inverse.

Rotations are plain 3x3 numpy arrays throughout the package; tangent vectors
are length-3 arrays in radians.
"""

import numpy as np

from .errors import NearPiRotation, OutOfDomain

# Below these magnitudes the closed forms are replaced by their series
# expansions; crossover chosen so both sides agree to ~1e-12.
_EXP_EPS = 1e-8
_JAC_EPS = 1e-5


def hat(v):
    """Skew-symmetric matrix of v, so that hat(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def exp_map(phi):
    """Rodrigues formula mapping an axis-angle vector to a rotation matrix."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    S = hat(phi)
    if angle < _EXP_EPS:
        return np.eye(3) + S + 0.5 * (S @ S)
    return (np.eye(3)
            + (np.sin(angle) / angle) * S
            + ((1.0 - np.cos(angle)) / angle**2) * (S @ S))


def log_map(R):
    """Principal-branch logarithm of a rotation matrix.

    Raises NearPiRotation when the rotation angle is within 1e-6 of pi,
    where the principal branch is ill-conditioned.
    """
    R = np.asarray(R, dtype=float)
    cos_angle = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if np.pi - angle < 1e-6:
        raise NearPiRotation(f"rotation angle {angle} within 1e-6 of pi")
    axis_times_sin = 0.5 * np.array([R[2, 1] - R[1, 2],
                                     R[0, 2] - R[2, 0],
                                     R[1, 0] - R[0, 1]])
    if angle < _EXP_EPS:
        # sin(angle)/angle ~ 1 - angle^2/6
        return axis_times_sin * (1.0 + angle**2 / 6.0)
    return axis_times_sin * (angle / np.sin(angle))


def right_jacobian(phi):
    """Right Jacobian Jr of SO(3) relating tangent perturbations to group increments."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    S = hat(phi)
    if angle < _JAC_EPS:
        return np.eye(3) - 0.5 * S + (S @ S) / 6.0
    return (np.eye(3)
            - ((1.0 - np.cos(angle)) / angle**2) * S
            + ((angle - np.sin(angle)) / angle**3) * (S @ S))


def right_jacobian_inv(phi):
    """Inverse of the right Jacobian.

    Valid for ||phi|| < 2*pi - 1e-6; raises OutOfDomain beyond that, where
    Jr is singular.
    """
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle >= 2.0 * np.pi - 1e-6:
        raise OutOfDomain(f"||phi|| = {angle} too close to 2*pi")
    S = hat(phi)
    if angle < _JAC_EPS:
        return np.eye(3) + 0.5 * S + (S @ S) / 12.0
    half = 0.5 * angle
    cot_term = half / np.tan(half)
    axis = phi / angle
    return (cot_term * np.eye(3)
            + (1.0 - cot_term) * np.outer(axis, axis)
            + half * hat(axis))


def is_rotation(R, tol=1e-9):
    """True if R is orthonormal with determinant +1 within tol."""
    R = np.asarray(R, dtype=float)
    return (np.linalg.norm(R @ R.T - np.eye(3)) < tol
            and abs(np.linalg.det(R) - 1.0) < tol)


def random_rotation(rng, max_angle=np.pi - 0.1):
    """Uniform-axis random rotation with angle uniform in (0, max_angle)."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_map(axis * rng.uniform(0.0, max_angle))
