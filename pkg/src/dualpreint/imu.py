"""Single-platform IMU preintegration.

Accumulates raw gyro/accel samples between two keyframes into rotation,
velocity and position increments together with a 9x9 covariance over
(rotation, velocity, position) errors and the five bias Jacobians needed
for first-order bias correction.
"""

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .errors import EmptySampleSet

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ImuSample:
    """One gyro/accel reading held over an interval dt (zero-order hold)."""
    gyro: np.ndarray      # rad/s
    accel: np.ndarray     # m/s^2, specific force
    dt: float             # s, in (0, 0.1]

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.1):
            raise ValueError(f"dt must be in (0, 0.1], got {self.dt}")


@dataclass(frozen=True)
class ImuNoiseModel:
    """Continuous-time IMU noise densities plus the gravity vector.

    sigma_gv/sigma_av are the gyro/accel white-noise densities, the
    sigma_*u entries the corresponding bias random-walk densities.
    """
    sigma_gv: float = 1.528e-3    # rad/(s sqrt(Hz))
    sigma_av: float = 1.244e-2    # m/(s^2 sqrt(Hz))
    sigma_gu: float = 1.867e-4    # rad/(s^2 sqrt(Hz))
    sigma_au: float = 7.841e-3    # m/(s^3 sqrt(Hz))
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in ("sigma_gv", "sigma_av", "sigma_gu", "sigma_au"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Bias:
    gyro: np.ndarray    # rad/s
    accel: np.ndarray   # m/s^2

    @staticmethod
    def zero():
        return Bias(np.zeros(3), np.zeros(3))

    def as_vector(self):
        return np.concatenate([self.gyro, self.accel])


@dataclass(frozen=True)
class Preintegration:
    """Preintegrated IMU increments over [t_i, t_j] at linearization bias."""
    delta_R: np.ndarray         # 3x3
    delta_v: np.ndarray         # 3
    delta_p: np.ndarray         # 3
    cov: np.ndarray             # 9x9, ordered (rot, vel, pos)
    J_R_bg: np.ndarray          # d(delta_R)/d(b_g), 3x3
    J_v_bg: np.ndarray
    J_v_ba: np.ndarray
    J_p_bg: np.ndarray
    J_p_ba: np.ndarray
    bias: Bias                  # linearization point
    dt_total: float
    n_samples: int


def integrate(samples, bias, noise):
    """Preintegrate an ordered list of ImuSamples at the given bias.

    The covariance is propagated sample by sample through the linearized
    error dynamics; continuous noise densities are discretized per sample
    as sigma_d^2 = sigma_c^2 / dt.
    """
    if len(samples) == 0:
        raise EmptySampleSet("need at least one IMU sample")

    dR = np.eye(3)
    dv = np.zeros(3)
    dp = np.zeros(3)
    cov = np.zeros((9, 9))
    J_R_bg = np.zeros((3, 3))
    J_v_bg = np.zeros((3, 3))
    J_v_ba = np.zeros((3, 3))
    J_p_bg = np.zeros((3, 3))
    J_p_ba = np.zeros((3, 3))
    dt_total = 0.0
    I3 = np.eye(3)

    for s in samples:
        dt = s.dt
        w = np.asarray(s.gyro, dtype=float) - bias.gyro
        a = np.asarray(s.accel, dtype=float) - bias.accel
        phi = w * dt
        R_inc = so3.exp_map(phi)
        Jr = so3.right_jacobian(phi)
        a_hat = so3.hat(a)
        dR_a_hat = dR @ a_hat

        # error-state transition on (d_rot, d_vel, d_pos)
        A = np.zeros((9, 9))
        A[0:3, 0:3] = R_inc.T
        A[3:6, 0:3] = -dR_a_hat * dt
        A[3:6, 3:6] = I3
        A[6:9, 0:3] = -0.5 * dR_a_hat * dt**2
        A[6:9, 3:6] = I3 * dt
        A[6:9, 6:9] = I3

        B = np.zeros((9, 6))
        B[0:3, 0:3] = Jr * dt
        B[3:6, 3:6] = dR * dt
        B[6:9, 3:6] = 0.5 * dR * dt**2

        Q = np.zeros((6, 6))
        Q[0:3, 0:3] = (noise.sigma_gv**2 / dt) * I3
        Q[3:6, 3:6] = (noise.sigma_av**2 / dt) * I3
        cov = A @ cov @ A.T + B @ Q @ B.T

        # bias Jacobians, recursive forms of the closed summations
        J_p_bg = J_p_bg + J_v_bg * dt - 0.5 * dR_a_hat @ J_R_bg * dt**2
        J_p_ba = J_p_ba + J_v_ba * dt - 0.5 * dR * dt**2
        J_v_bg = J_v_bg - dR_a_hat @ J_R_bg * dt
        J_v_ba = J_v_ba - dR * dt
        J_R_bg = R_inc.T @ J_R_bg - Jr * dt

        # nominal increments (position first: uses pre-update dv, dR)
        dp = dp + dv * dt + 0.5 * dR @ a * dt**2
        dv = dv + dR @ a * dt
        dR = dR @ R_inc
        dt_total += dt

    cov = 0.5 * (cov + cov.T)
    return Preintegration(dR, dv, dp, cov, J_R_bg, J_v_bg, J_v_ba,
                          J_p_bg, J_p_ba, bias, dt_total, len(samples))


def correct_for_bias(pre, bias):
    """First-order corrected (delta_R, delta_v, delta_p) at a new bias."""
    dbg = bias.gyro - pre.bias.gyro
    dba = bias.accel - pre.bias.accel
    dR = pre.delta_R @ so3.exp_map(pre.J_R_bg @ dbg)
    dv = pre.delta_v + pre.J_v_bg @ dbg + pre.J_v_ba @ dba
    dp = pre.delta_p + pre.J_p_bg @ dbg + pre.J_p_ba @ dba
    return dR, dv, dp


def bias_walk_covariance(noise, dt_total):
    """Between-keyframe bias random-walk covariances (gyro, accel)."""
    if dt_total <= 0.0:
        raise ValueError("dt_total must be positive")
    return (dt_total * noise.sigma_gu**2 * np.eye(3),
            dt_total * noise.sigma_au**2 * np.eye(3))
