"""Numerical bias-observability analysis of the dual-preintegration factor.

For each preintegration window the 9x12 Jacobian of the synthesized
measurement with respect to the four bias blocks (follower gyro/accel,
leader gyro/accel) is assembled; its numerical null space reveals which
bias combinations the relative-motion measurements cannot distinguish.
Special motion classes admit closed-form null directions built from the
relative rotation and the relative angular velocity, which this module
predicts and verifies.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import factor as fmod
from . import imu, synth
from .errors import UnsupportedCase

_BIAS_COLS = slice(9, 21)


def assemble_bias_jacobian(x_i, pre_F, pre_L):
    """9x12 sensitivity of the synthesized measurement to the biases.

    Rows are (rotation, velocity, position); columns (d_bFg, d_bFa,
    d_bLg, d_bLa).
    """
    f = fmod.build_factor(x_i, pre_F, pre_L)
    J = np.vstack([f.J_R, f.J_v, f.J_p])
    return J[:, _BIAS_COLS]


def null_space(J, rel_tol=1e-8):
    """Orthonormal basis of the numerical null space of J.

    Singular directions below rel_tol times the largest singular value
    count as null. Returns a (cols, k) array.
    """
    _, s, Vt = np.linalg.svd(J)
    smax = s[0] if len(s) else 0.0
    n_null = J.shape[1] - np.sum(s > rel_tol * smax)
    if n_null == 0:
        return np.zeros((J.shape[1], 0))
    return Vt[-n_null:].T


def _accel_direction(R_i, u):
    d = np.zeros(12)
    d[3:6] = R_i.T @ u
    d[9:12] = u
    return d / np.linalg.norm(d)


def _gyro_direction(R_i, u):
    d = np.zeros(12)
    d[0:3] = R_i.T @ u
    d[6:9] = u
    return d / np.linalg.norm(d)


def predicted_null_directions(case, R_i, omega_rel=None):
    """Closed-form unobservable bias directions for a motion case.

    ``omega_rel`` is the relative angular velocity in the leader frame,
    required for the fixed-axis cases 2 and 4. Columns are unit 12-vectors.
    """
    cid = case.case_id if isinstance(case, synth.MotionCaseSpec) else str(case)
    eye = np.eye(3)
    if cid == "case1":
        cols = [_accel_direction(R_i, eye[k]) for k in range(3)]
    elif cid == "case2":
        u = np.asarray(omega_rel, dtype=float)
        if np.linalg.norm(u) < 1e-12:
            raise UnsupportedCase("case2 needs a nonzero relative angular velocity")
        cols = [_accel_direction(R_i, u / np.linalg.norm(u))]
    elif cid == "case3":
        cols = ([_accel_direction(R_i, eye[k]) for k in range(3)]
                + [_gyro_direction(R_i, eye[k]) for k in range(3)])
    elif cid == "case4":
        u = np.asarray(omega_rel, dtype=float)
        if np.linalg.norm(u) < 1e-12:
            raise UnsupportedCase("case4 needs a nonzero relative angular velocity")
        cols = [_gyro_direction(R_i, u / np.linalg.norm(u))]
    else:
        raise UnsupportedCase(f"no predicted null directions for {cid!r}")
    return np.column_stack(cols)


def classify_window(J_bi, R_i, omega_rel=None, rel_tol=1e-6):
    """Which motion classes are consistent with one window's bias Jacobian.

    Returns a dict with the numeric null dimension and, per case, whether
    every predicted direction lies in the null space (relative residual
    below rel_tol).
    """
    smax = np.linalg.svd(J_bi, compute_uv=False)[0]
    out = {"null_dimension": int(null_space(J_bi, rel_tol).shape[1]),
           "sigma_max": float(smax), "cases": {}}
    for cid in ("case1", "case2", "case3", "case4"):
        try:
            dirs = predicted_null_directions(cid, R_i, omega_rel)
        except UnsupportedCase:
            out["cases"][cid] = None
            continue
        viol = np.linalg.norm(J_bi @ dirs, axis=0)
        out["cases"][cid] = bool(np.all(viol <= rel_tol * smax))
    return out


@dataclass
class ObservabilityReport:
    case: str
    n_windows: int
    n_predicted: int
    max_violation: float          # max ||J n|| / sigma_max over windows
    null_dimensions: list         # per window numeric null dims
    stacked_rank: int             # rank of all windows stacked
    sigma_max: float

    def to_dict(self):
        return {"schema": 1, "case": self.case, "n_windows": self.n_windows,
                "n_predicted": self.n_predicted,
                "max_violation": float(self.max_violation),
                "null_dimensions": list(self.null_dimensions),
                "stacked_rank": self.stacked_rank,
                "sigma_max": float(self.sigma_max)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _window_omega_rel(gt, ka, kb):
    """Mean relative angular velocity (leader frame) over a window."""
    k = (ka + kb) // 2
    R_rel = gt.R_L[k].T @ gt.R_F[k]
    return R_rel @ gt.gyro_F[min(k, gt.n_ticks - 1)] \
        - gt.gyro_L[min(k, gt.n_ticks - 1)]


def analyze_trajectory(gt, noise=None, max_windows=None, rel_tol=1e-8):
    """Per-window bias-Jacobian analysis of a noise-free ground-truth run."""
    noise = noise or imu.ImuNoiseModel()
    ticks = gt.camera_ticks()
    if max_windows is not None:
        ticks = ticks[:max_windows + 1]
    case = gt.cfg.case_label
    jacobians = []
    null_dims = []
    max_viol = 0.0
    sig_max = 0.0
    n_pred = 0
    for ka, kb in zip(ticks[:-1], ticks[1:]):
        x_i = gt.full_state(ka)
        sF = [imu.ImuSample(gt.gyro_F[k] + gt.bias_F_g[k],
                            gt.accel_F[k] + gt.bias_F_a[k], gt.dt)
              for k in range(ka, kb)]
        sL = [imu.ImuSample(gt.gyro_L[k] + gt.bias_L_g[k],
                            gt.accel_L[k] + gt.bias_L_a[k], gt.dt)
              for k in range(ka, kb)]
        pre_F = imu.integrate(sF, x_i.bias_F, noise)
        pre_L = imu.integrate(sL, x_i.bias_L, noise)
        J = assemble_bias_jacobian(x_i, pre_F, pre_L)
        jacobians.append(J)
        smax = np.linalg.svd(J, compute_uv=False)[0]
        sig_max = max(sig_max, smax)
        null_dims.append(int(null_space(J, rel_tol).shape[1]))
        if case in ("case1", "case2", "case3", "case4"):
            omega = _window_omega_rel(gt, ka, kb)
            dirs = predicted_null_directions(case, x_i.rel.R, omega)
            n_pred = dirs.shape[1]
            viol = np.max(np.linalg.norm(J @ dirs, axis=0)) / smax
            max_viol = max(max_viol, viol)
    stacked = np.vstack(jacobians)
    s = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(s > rel_tol * s[0]))
    return ObservabilityReport(case=case, n_windows=len(jacobians),
                               n_predicted=n_pred, max_violation=max_viol,
                               null_dimensions=null_dims, stacked_rank=rank,
                               sigma_max=sig_max)


def analyze_case(case, duration=2.0, seed=0, rel_tol=1e-8):
    """Generate the scenario for ``case`` and analyze its windows."""
    cfg = synth.scenario(case, duration=duration, seed=seed)
    gt = synth.generate_trajectory(cfg)
    return analyze_trajectory(gt, rel_tol=rel_tol)
