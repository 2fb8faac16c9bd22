"""Dual-preintegration relative-state measurement and its factor.

Combines the leader and follower preintegrations into a synthesized
measurement of the next relative state, with a 9x9 covariance, first-order
measurement-update Jacobians, residuals and residual Jacobians.

Error/residual ordering is (rotation, velocity, position); the 21-dim
state-perturbation ordering is (d_theta, d_p, d_v, d_bFg, d_bFa, d_bLg,
d_bLa).
"""

from dataclasses import dataclass

import numpy as np

from . import imu, so3
from .errors import WindowMismatch

# column slices of the 21-dim state perturbation
SL_THETA = slice(0, 3)
SL_P = slice(3, 6)
SL_V = slice(6, 9)
SL_BFG = slice(9, 12)
SL_BFA = slice(12, 15)
SL_BLG = slice(15, 18)
SL_BLA = slice(18, 21)
STATE_DIM = 21


@dataclass(frozen=True)
class RelativeState:
    """Follower pose and velocity expressed in the leader body frame."""
    R: np.ndarray   # follower-to-leader rotation
    p: np.ndarray   # m
    v: np.ndarray   # m/s, world-difference relative velocity

    def copy(self):
        return RelativeState(self.R.copy(), self.p.copy(), self.v.copy())


@dataclass(frozen=True)
class FullState:
    rel: RelativeState
    bias_F: imu.Bias
    bias_L: imu.Bias

    def retract(self, dx):
        """Apply a 21-dim correction: multiplicative on rotation, additive elsewhere."""
        dx = np.asarray(dx, dtype=float)
        rel = RelativeState(self.rel.R @ so3.exp_map(dx[SL_THETA]),
                            self.rel.p + dx[SL_P],
                            self.rel.v + dx[SL_V])
        bF = imu.Bias(self.bias_F.gyro + dx[SL_BFG], self.bias_F.accel + dx[SL_BFA])
        bL = imu.Bias(self.bias_L.gyro + dx[SL_BLG], self.bias_L.accel + dx[SL_BLA])
        return FullState(rel, bF, bL)

    def local_delta(self, other):
        """other (-) self: the dx with self.retract(dx) == other to first order."""
        dx = np.empty(STATE_DIM)
        dx[SL_THETA] = so3.log_map(self.rel.R.T @ other.rel.R)
        dx[SL_P] = other.rel.p - self.rel.p
        dx[SL_V] = other.rel.v - self.rel.v
        dx[SL_BFG] = other.bias_F.gyro - self.bias_F.gyro
        dx[SL_BFA] = other.bias_F.accel - self.bias_F.accel
        dx[SL_BLG] = other.bias_L.gyro - self.bias_L.gyro
        dx[SL_BLA] = other.bias_L.accel - self.bias_L.accel
        return dx


def _check_window(pre_F, pre_L):
    if abs(pre_F.dt_total - pre_L.dt_total) > 1e-9:
        raise WindowMismatch(
            f"follower window {pre_F.dt_total} s vs leader {pre_L.dt_total} s")


def predict(x_i, pre_F, pre_L):
    """Propagate the relative state across one preintegration window.

    Both preintegrations are first bias-corrected at x_i's biases.
    """
    _check_window(pre_F, pre_L)
    dR_F, dv_F, dp_F = imu.correct_for_bias(pre_F, x_i.bias_F)
    dR_L, dv_L, dp_L = imu.correct_for_bias(pre_L, x_i.bias_L)
    R_i, p_i, v_i = x_i.rel.R, x_i.rel.p, x_i.rel.v
    dt = pre_F.dt_total
    R_j = dR_L.T @ R_i @ dR_F
    v_j = dR_L.T @ (R_i @ dv_F - dv_L + v_i)
    p_j = dR_L.T @ (R_i @ dp_F - dp_L + p_i + v_i * dt)
    return RelativeState(R_j, p_j, v_j)


@dataclass(frozen=True)
class DualPreintegrationFactor:
    """Synthesized relative-state measurement, frozen at its linearization point."""
    R_j: np.ndarray            # nominal measured rotation at x_bar
    v_j: np.ndarray
    p_j: np.ndarray
    cov: np.ndarray            # 9x9 over (rot, vel, pos) errors
    x_bar: FullState           # linearization point
    J_R: np.ndarray            # 3x21 measurement-update Jacobians
    J_v: np.ndarray
    J_p: np.ndarray
    dt_total: float
    pre_F: imu.Preintegration
    pre_L: imu.Preintegration


def build_factor(x_bar, pre_F, pre_L):
    """Build the dual-preintegration factor linearized at x_bar."""
    _check_window(pre_F, pre_L)

    # bias-correct both preintegrations to x_bar's biases
    dbg_F = x_bar.bias_F.gyro - pre_F.bias.gyro
    dbg_L = x_bar.bias_L.gyro - pre_L.bias.gyro
    dR_F, dv_F, dp_F = imu.correct_for_bias(pre_F, x_bar.bias_F)
    dR_L, dv_L, dp_L = imu.correct_for_bias(pre_L, x_bar.bias_L)
    # chain rule through Exp(J*db): the effective rotation-bias Jacobian
    # picks up a right-Jacobian factor when x_bar's bias differs from the
    # integration bias
    J_RF_bg = so3.right_jacobian(pre_F.J_R_bg @ dbg_F) @ pre_F.J_R_bg
    J_RL_bg = so3.right_jacobian(pre_L.J_R_bg @ dbg_L) @ pre_L.J_R_bg

    R_i, p_i, v_i = x_bar.rel.R, x_bar.rel.p, x_bar.rel.v
    dt = pre_F.dt_total
    dRLT = dR_L.T
    dRLT_Ri = dRLT @ R_i

    R_j = dRLT @ R_i @ dR_F
    v_j = dRLT @ (R_i @ dv_F - dv_L + v_i)
    p_j = dRLT @ (R_i @ dp_F - dp_L + p_i + v_i * dt)

    # measurement covariance: linear map of both platforms' preintegration errors
    Phi_F = np.zeros((9, 9))
    Phi_F[0:3, 0:3] = -np.eye(3)
    Phi_F[3:6, 3:6] = dRLT_Ri
    Phi_F[6:9, 6:9] = dRLT_Ri
    Phi_L = np.zeros((9, 9))
    Phi_L[0:3, 0:3] = R_j.T
    Phi_L[3:6, 0:3] = so3.hat(v_j)
    Phi_L[3:6, 3:6] = -dRLT
    Phi_L[6:9, 0:3] = so3.hat(p_j)
    Phi_L[6:9, 6:9] = -dRLT
    cov = Phi_F @ pre_F.cov @ Phi_F.T + Phi_L @ pre_L.cov @ Phi_L.T
    cov = 0.5 * (cov + cov.T)

    # measurement-update Jacobians; unlisted blocks are structural zeros
    J_R = np.zeros((3, STATE_DIM))
    J_R[:, SL_THETA] = dR_F.T
    J_R[:, SL_BFG] = J_RF_bg
    J_R[:, SL_BLG] = -R_j.T @ J_RL_bg

    J_v = np.zeros((3, STATE_DIM))
    J_v[:, SL_THETA] = -dRLT_Ri @ so3.hat(dv_F)
    J_v[:, SL_V] = dRLT
    J_v[:, SL_BFG] = dRLT_Ri @ pre_F.J_v_bg
    J_v[:, SL_BFA] = dRLT_Ri @ pre_F.J_v_ba
    J_v[:, SL_BLG] = so3.hat(v_j) @ J_RL_bg - dRLT @ pre_L.J_v_bg
    J_v[:, SL_BLA] = -dRLT @ pre_L.J_v_ba

    J_p = np.zeros((3, STATE_DIM))
    J_p[:, SL_THETA] = -dRLT_Ri @ so3.hat(dp_F)
    J_p[:, SL_P] = dRLT
    J_p[:, SL_V] = dRLT * dt
    J_p[:, SL_BFG] = dRLT_Ri @ pre_F.J_p_bg
    J_p[:, SL_BFA] = dRLT_Ri @ pre_F.J_p_ba
    J_p[:, SL_BLG] = so3.hat(p_j) @ J_RL_bg - dRLT @ pre_L.J_p_bg
    J_p[:, SL_BLA] = -dRLT @ pre_L.J_p_ba

    return DualPreintegrationFactor(R_j, v_j, p_j, cov, x_bar,
                                    J_R, J_v, J_p, dt, pre_F, pre_L)


def update_measurement(factor, dx_i):
    """First-order update of the measurement for a perturbation of x_bar."""
    dx_i = np.asarray(dx_i, dtype=float)
    R = factor.R_j @ so3.exp_map(factor.J_R @ dx_i)
    v = factor.v_j + factor.J_v @ dx_i
    p = factor.p_j + factor.J_p @ dx_i
    return R, v, p


def residual(factor, x_i, x_j):
    """9-dim residual (rotation, velocity, position) of the factor.

    The measurement is first-order updated from the stored linearization
    point; no re-integration happens here.
    """
    dx_i = factor.x_bar.local_delta(x_i)
    R_meas, v_meas, p_meas = update_measurement(factor, dx_i)
    r = np.empty(9)
    r[0:3] = so3.log_map(x_j.rel.R.T @ R_meas)
    r[3:6] = v_meas - x_j.rel.v
    r[6:9] = p_meas - x_j.rel.p
    return r


def residual_jacobians(factor, x_i, x_j):
    """Analytic Jacobians of the residual w.r.t. x_i (9x21) and x_j (9x9).

    x_j ordering is (d_theta_j, d_p_j, d_v_j).
    """
    dx_i = factor.x_bar.local_delta(x_i)
    R_meas, v_meas, p_meas = update_measurement(factor, dx_i)
    r_R = so3.log_map(x_j.rel.R.T @ R_meas)

    J_xi = np.zeros((9, STATE_DIM))
    # the inner right-Jacobian factor is I at dx_i = 0 and keeps the block
    # exact away from the linearization point
    J_xi[0:3, :] = (so3.right_jacobian_inv(r_R)
                    @ so3.right_jacobian(factor.J_R @ dx_i) @ factor.J_R)
    J_xi[3:6, :] = factor.J_v
    J_xi[6:9, :] = factor.J_p
    # away from the linearization point a rotation perturbation of x_i maps
    # to the local delta through Jr^-1 of the accumulated rotation delta
    J_xi[:, SL_THETA] = (
        J_xi[:, SL_THETA] @ so3.right_jacobian_inv(dx_i[SL_THETA]))

    J_xj = np.zeros((9, 9))
    J_xj[0:3, 0:3] = -so3.right_jacobian_inv(-r_R)
    J_xj[3:6, 6:9] = -np.eye(3)
    J_xj[6:9, 3:6] = -np.eye(3)
    return J_xi, J_xj
