"""Synthetic trajectory generation, measurement synthesis and Monte Carlo runs.

Ground truth is generated on a fine grid (``substeps`` subdivisions of the
IMU interval) by zero-order-hold integration and subsampled to the IMU
rate. With ``substeps=1`` the IMU measurement stream is exactly consistent
with the discrete truth, so noise-free estimation errors sit at the
numerical floor; with ``substeps>1`` the leader's angular-rate profile may
vary inside an IMU interval, which reintroduces the sampling nonlinearity
that degrades estimation under erratic rotation.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import imu, so3, vision
from .errors import UnsupportedCase
from .factor import FullState, RelativeState

Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float
    imu_rate: int = 250
    cam_rate: int = 25
    substeps: int = 1
    # ("constant", w) | ("harmonic", A, f) | ("stochastic", sigma) | ("none",)
    leader_profile: tuple = ("none",)
    leader_axis: np.ndarray = field(default_factory=lambda: Z_AXIS.copy())
    # relative-frame scripts: ("zero",) | ("harmonic3", amps, freqs, phases)
    # | ("fixed_axis", axis, base, amp, freq); or ("own_harmonic3", amps,
    # freqs, phases) for an independent follower body-rate script
    rel_rot_script: tuple = ("zero",)
    # ("constant", p0) | ("harmonic", p0, amps, freqs, phases) in the
    # leader frame; or ("world", d0, amps, freqs, phases) for an
    # independent follower path offset in the world frame
    rel_trans_script: tuple = ("constant", (0.0, 0.0, 0.8))
    leader_trans_script: tuple = ("constant", (0.0, 0.0, 0.0))
    bias_F: imu.Bias = field(default_factory=imu.Bias.zero)
    bias_L: imu.Bias = field(default_factory=imu.Bias.zero)
    bias_walk: bool = False
    seed: int = 0
    case_label: str = "general"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.imu_rate % self.cam_rate != 0:
            raise ValueError("IMU rate must be a multiple of the camera rate")


@dataclass
class GroundTruth:
    """Per-IMU-tick true kinematics, ideal measurements and biases."""
    cfg: TrajectoryConfig
    times: np.ndarray           # (N+1,)
    R_L: np.ndarray             # (N+1, 3, 3) world attitude of the leader
    p_L: np.ndarray
    v_L: np.ndarray
    R_F: np.ndarray
    p_F: np.ndarray
    v_F: np.ndarray
    gyro_L: np.ndarray          # (N, 3) ideal body-rate samples (tick start)
    accel_L: np.ndarray         # (N, 3) ideal specific-force samples
    gyro_F: np.ndarray
    accel_F: np.ndarray
    bias_F_g: np.ndarray        # (N+1, 3) true bias trajectories
    bias_F_a: np.ndarray
    bias_L_g: np.ndarray
    bias_L_a: np.ndarray
    lam: np.ndarray             # (N,) per-tick nonlinearity level
    omega_scalar: np.ndarray    # (N,) leader angular-speed samples

    @property
    def n_ticks(self):
        return len(self.times) - 1

    @property
    def dt(self):
        return 1.0 / self.cfg.imu_rate

    def relative_state(self, k):
        R_L = self.R_L[k]
        R = R_L.T @ self.R_F[k]
        p = R_L.T @ (self.p_F[k] - self.p_L[k])
        v = R_L.T @ (self.v_F[k] - self.v_L[k])
        return RelativeState(R, p, v)

    def full_state(self, k):
        return FullState(self.relative_state(k),
                         imu.Bias(self.bias_F_g[k], self.bias_F_a[k]),
                         imu.Bias(self.bias_L_g[k], self.bias_L_a[k]))

    def camera_ticks(self):
        step = self.cfg.imu_rate // self.cfg.cam_rate
        return list(range(0, self.n_ticks + 1, step))


def _eval_harmonic(script, t):
    """Evaluate a ("harmonic", p0, amps, freqs, phases) position script."""
    p0 = np.asarray(script[1], dtype=float)
    if script[0] == "constant":
        return np.broadcast_to(p0, (len(t), 3)).copy()
    amps = np.asarray(script[2], dtype=float)
    freqs = np.asarray(script[3], dtype=float)
    phases = np.asarray(script[4], dtype=float)
    out = np.empty((len(t), 3))
    for ax in range(3):
        out[:, ax] = p0[ax] + amps[ax] * np.sin(2 * np.pi * freqs[ax] * t + phases[ax])
    return out


def _leader_speed(profile, t, rng, substeps):
    """Leader angular-speed samples on the fine grid.

    The stochastic profile is drawn independently at the IMU rate; with
    substepping, an additional white component rides on top of each held
    draw, so the rate keeps moving between consecutive gyro samples and
    part of the rotation is invisible to the IMU.
    """
    kind = profile[0]
    if kind == "none":
        return np.zeros(len(t))
    if kind == "constant":
        return np.full(len(t), float(profile[1]))
    if kind == "harmonic":
        A, f = float(profile[1]), float(profile[2])
        return A * np.sin(2 * np.pi * f * t)
    if kind == "stochastic":
        sigma = float(profile[1])
        draws = rng.normal(0.0, sigma, size=(len(t) - 1) // substeps + 1)
        out = np.repeat(draws, substeps)[:len(t)]
        if substeps > 1:
            out = out + rng.normal(0.0, sigma, size=len(t))
        return out
    raise ValueError(f"unknown leader profile {kind!r}")


def _rel_omega(script, t):
    """Relative angular velocity (leader frame) on the fine grid, (n, 3)."""
    kind = script[0]
    n = len(t)
    if kind == "zero":
        return np.zeros((n, 3))
    if kind in ("harmonic3", "own_harmonic3"):
        amps = np.asarray(script[1], dtype=float)
        freqs = np.asarray(script[2], dtype=float)
        phases = np.asarray(script[3], dtype=float)
        out = np.empty((n, 3))
        for ax in range(3):
            out[:, ax] = amps[ax] * np.sin(2 * np.pi * freqs[ax] * t + phases[ax])
        return out
    if kind == "fixed_axis":
        axis = np.asarray(script[1], dtype=float)
        axis = axis / np.linalg.norm(axis)
        base, amp, freq = float(script[2]), float(script[3]), float(script[4])
        s = base + amp * np.sin(2 * np.pi * freq * t)
        return np.outer(s, axis)
    raise ValueError(f"unknown relative rotation script {kind!r}")


def _forward_solve(p, dt):
    """Velocities/accelerations making (p, v, a) an exact ZOH trajectory."""
    n = len(p) - 1
    v = np.zeros((n + 1, 3))
    a = np.zeros((n, 3))
    v[0] = (p[1] - p[0]) / dt
    for k in range(n):
        a[k] = 2.0 * (p[k + 1] - p[k] - v[k] * dt) / dt**2
        v[k + 1] = v[k] + a[k] * dt
    return v, a


def generate_trajectory(cfg):
    """Generate discrete ZOH ground truth plus ideal IMU samples."""
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration * cfg.imu_rate))
    S = cfg.substeps
    nf = n * S
    dtf = 1.0 / (cfg.imu_rate * S)
    tf = np.arange(nf + 1) * dtf

    axis = cfg.leader_axis / np.linalg.norm(cfg.leader_axis)
    speed = _leader_speed(cfg.leader_profile, tf, rng, S)
    w_rel = _rel_omega(cfg.rel_rot_script, tf)

    R_Lf = np.empty((nf + 1, 3, 3))
    R_Ff = np.empty((nf + 1, 3, 3))
    R_Lf[0] = np.eye(3)
    R_Ff[0] = np.eye(3)
    own_rot = cfg.rel_rot_script[0] == "own_harmonic3"
    for k in range(nf):
        R_Lf[k + 1] = R_Lf[k] @ so3.exp_map(axis * speed[k] * dtf)
        if own_rot:
            # follower rotates on its own, from its body-rate script
            R_Ff[k + 1] = R_Ff[k] @ so3.exp_map(w_rel[k] * dtf)
        else:
            # scripted relative rotation, rigidly referenced to the leader
            R_Ff[k + 1] = R_Lf[k + 1] @ so3.exp_map(w_rel[k] * dtf) \
                @ R_Lf[k].T @ R_Ff[k]

    p_Lf = _eval_harmonic(cfg.leader_trans_script, tf)
    if cfg.rel_trans_script[0] == "world":
        p_Ff = p_Lf + _eval_harmonic(("harmonic",) + cfg.rel_trans_script[1:],
                                     tf)
    else:
        p_relf = _eval_harmonic(cfg.rel_trans_script, tf)
        p_Ff = p_Lf + np.einsum("nij,nj->ni", R_Lf, p_relf)
    v_Lf, a_Lf = _forward_solve(p_Lf, dtf)
    v_Ff, a_Ff = _forward_solve(p_Ff, dtf)

    # subsample to IMU ticks; measurements are the instantaneous samples at
    # the tick start
    idx = np.arange(0, nf + 1, S)
    g = imu.GRAVITY
    gyro_L = np.empty((n, 3))
    gyro_F = np.empty((n, 3))
    accel_L = np.empty((n, 3))
    accel_F = np.empty((n, 3))
    for k in range(n):
        kf = k * S
        gyro_L[k] = axis * speed[kf]
        gyro_F[k] = so3.log_map(R_Ff[kf].T @ R_Ff[kf + 1]) / dtf
        accel_L[k] = R_Lf[kf].T @ (a_Lf[kf] - g)
        accel_F[k] = R_Ff[kf].T @ (a_Ff[kf] - g)

    # bias truth: constant, or random walk at the IMU tick level
    dt = 1.0 / cfg.imu_rate
    noise = imu.ImuNoiseModel()
    biases = {}
    for name, b0 in (("F", cfg.bias_F), ("L", cfg.bias_L)):
        bg = np.tile(b0.gyro, (n + 1, 1)).astype(float)
        ba = np.tile(b0.accel, (n + 1, 1)).astype(float)
        if cfg.bias_walk:
            bg += np.cumsum(
                np.vstack([np.zeros(3),
                           rng.normal(0, noise.sigma_gu * np.sqrt(dt), (n, 3))]), axis=0)
            ba += np.cumsum(
                np.vstack([np.zeros(3),
                           rng.normal(0, noise.sigma_au * np.sqrt(dt), (n, 3))]), axis=0)
        biases[name] = (bg, ba)

    w_tick = speed[idx[:-1]]
    lam = np.zeros(n)
    if n > 2:
        wdot = np.gradient(w_tick, dt)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.abs(wdot * dt / (2.0 * w_tick))
        lam[~np.isfinite(lam)] = 0.0

    return GroundTruth(cfg=cfg, times=idx * dtf,
                       R_L=R_Lf[idx], p_L=p_Lf[idx], v_L=v_Lf[idx],
                       R_F=R_Ff[idx], p_F=p_Ff[idx], v_F=v_Ff[idx],
                       gyro_L=gyro_L, accel_L=accel_L,
                       gyro_F=gyro_F, accel_F=accel_F,
                       bias_F_g=biases["F"][0], bias_F_a=biases["F"][1],
                       bias_L_g=biases["L"][0], bias_L_a=biases["L"][1],
                       lam=lam, omega_scalar=w_tick)


def synthesize_imu(gt, noise, seed):
    """Noise- and bias-corrupted IMU sample streams (follower, leader)."""
    rng = np.random.default_rng(seed)
    n = gt.n_ticks
    dt = gt.dt
    sg = noise.sigma_gv / np.sqrt(dt)
    sa = noise.sigma_av / np.sqrt(dt)
    out = []
    for gyro, accel, bg, ba in ((gt.gyro_F, gt.accel_F, gt.bias_F_g, gt.bias_F_a),
                                (gt.gyro_L, gt.accel_L, gt.bias_L_g, gt.bias_L_a)):
        eta_g = rng.normal(0.0, sg, (n, 3))
        eta_a = rng.normal(0.0, sa, (n, 3))
        samples = [imu.ImuSample(gyro[k] + bg[k] + eta_g[k],
                                 accel[k] + ba[k] + eta_a[k], dt)
                   for k in range(n)]
        out.append(samples)
    return out[0], out[1]


def default_markers(ring_radius=0.1, n_ring=24, z_offset=0.1):
    """Ring of markers in the follower x-y plane plus four off-plane points."""
    markers = []
    for i in range(n_ring):
        ang = 2 * np.pi * i / n_ring
        markers.append(vision.Marker(i, np.array([ring_radius * np.cos(ang),
                                                  ring_radius * np.sin(ang), 0.0])))
    off = [(z_offset, 0, z_offset), (-z_offset, 0, -z_offset),
           (0, z_offset, z_offset), (0, -z_offset, -z_offset)]
    for j, pt in enumerate(off):
        markers.append(vision.Marker(n_ring + j, np.array(pt, dtype=float)))
    return markers


def default_camera(sigma_px=1.0):
    return vision.CameraModel(fx=600.0, fy=600.0, cx=640.0, cy=400.0,
                              width=1280, height=800, sigma_px=sigma_px)


def synthesize_features(gt, markers, cam, sigma_px, seed):
    """Per-camera-tick feature observations with Gaussian pixel noise."""
    rng = np.random.default_rng(seed)
    frames = []
    for k in gt.camera_ticks():
        rel = gt.relative_state(k)
        t = gt.times[k]
        obs = []
        for m in markers:
            X = rel.R @ m.point + rel.p
            if X[2] <= 1e-6:
                continue
            px = np.array([cam.fx * X[0] / X[2] + cam.cx,
                           cam.fy * X[1] / X[2] + cam.cy])
            if sigma_px > 0:
                px = px + rng.normal(0.0, sigma_px, 2)
            if vision.in_bounds(px, cam):
                obs.append(vision.FeatureObservation(m.marker_id, px, t))
        frames.append(obs)
    return frames


@dataclass(frozen=True)
class MotionCaseSpec:
    """Identifier of a special-motion scenario.

    ``case1``..``case4`` are the bias-observability motion classes;
    ``scenario1``..``scenario3`` are the bias-convergence experiments
    (fixed-attitude leader with free / z-axis / no follower rotation).
    """
    case_id: str


_TRANS_EXCITED = ("harmonic", (0.0, 0.0, 0.8), (0.08, 0.06, 0.05),
                  (0.4, 0.3, 0.5), (0.0, 1.2, 2.1))
_LEADER_TRANS = ("harmonic", (0.0, 0.0, 0.0), (0.10, 0.08, 0.06),
                 (0.35, 0.45, 0.25), (0.3, 1.8, 0.9))
_FREE_ROT = ("harmonic3", (1.2, 1.0, 1.4), (0.3, 0.25, 0.35), (0.0, 1.0, 2.0))


def scenario(case, duration=5.0, seed=0):
    """Trajectory config whose ground truth satisfies the given motion case."""
    cid = case.case_id if isinstance(case, MotionCaseSpec) else str(case)
    common = dict(duration=duration, seed=seed, case_label=cid)
    if cid == "case1":
        # constant relative rotation, leader spinning, translations excited
        return TrajectoryConfig(leader_profile=("constant", np.pi),
                                rel_rot_script=("zero",),
                                rel_trans_script=_TRANS_EXCITED,
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "case2":
        # fixed-axis relative rotation
        return TrajectoryConfig(leader_profile=("constant", np.pi),
                                rel_rot_script=("fixed_axis", Z_AXIS, 0.8, 0.5, 0.6),
                                rel_trans_script=_TRANS_EXCITED,
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "case3":
        # no rotation anywhere, co-located, rigid common translation; a
        # nonzero constant offset would re-excite the gyro biases through
        # the frame coupling of the position measurement
        return TrajectoryConfig(leader_profile=("none",),
                                rel_rot_script=("zero",),
                                rel_trans_script=("constant", (0.0, 0.0, 0.0)),
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "case4":
        # fixed-axis relative rotation, non-rotating leader, rigid offset
        return TrajectoryConfig(leader_profile=("none",),
                                rel_rot_script=("fixed_axis", Z_AXIS, 0.8, 0.5, 0.6),
                                rel_trans_script=("constant", (0.0, 0.0, 0.8)),
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "scenario1":
        # fixed-attitude leader, free follower rotation, zero relative velocity
        return TrajectoryConfig(leader_profile=("none",),
                                rel_rot_script=_FREE_ROT,
                                rel_trans_script=("constant", (0.0, 0.0, 0.8)),
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "scenario2":
        return TrajectoryConfig(leader_profile=("none",),
                                rel_rot_script=("fixed_axis", Z_AXIS, 0.8, 0.5, 0.6),
                                rel_trans_script=("constant", (0.0, 0.0, 0.8)),
                                leader_trans_script=_LEADER_TRANS, **common)
    if cid == "scenario3":
        return TrajectoryConfig(leader_profile=("none",),
                                rel_rot_script=("zero",),
                                rel_trans_script=("constant", (0.0, 0.0, 0.8)),
                                leader_trans_script=_LEADER_TRANS, **common)
    raise UnsupportedCase(f"unknown motion case {cid!r}")


_FREE_ROT_OWN = ("own_harmonic3", (0.6, 0.5, 0.7), (0.5, 0.4, 0.6),
                 (0.0, 1.0, 2.0))
_TRANS_WORLD = ("world", (0.2, 0.0, 0.8), (0.05, 0.05, 0.04),
                (0.4, 0.3, 0.5), (0.0, 1.2, 2.1))


def general_motion_config(profile, duration=10.0, seed=0, substeps=1):
    """Leader spins per ``profile`` while the follower moves independently.

    The mean follower offset lies on the leader's rotation axis so the
    markers stay in view however fast the leader turns.
    """
    return TrajectoryConfig(duration=duration, seed=seed, substeps=substeps,
                            leader_profile=profile,
                            rel_rot_script=_FREE_ROT_OWN,
                            rel_trans_script=_TRANS_WORLD,
                            leader_trans_script=_LEADER_TRANS,
                            case_label="general")


def rotation_error_deg(R_est, R_true):
    return np.degrees(np.linalg.norm(so3.log_map(R_true.T @ R_est)))


@dataclass
class MonteCarloResult:
    rmse_theta_deg: np.ndarray    # per run
    rmse_p_cm: np.ndarray
    update_ms: np.ndarray         # mean per-keyframe wall clock per run
    failures: list

    @property
    def mean_rmse_theta_deg(self):
        return float(np.mean(self.rmse_theta_deg))

    @property
    def mean_rmse_p_cm(self):
        return float(np.mean(self.rmse_p_cm))


def evaluate_estimates(gt, keyframe_ticks, estimates):
    """(RMSE_theta deg, RMSE_p cm) of per-keyframe relative-pose estimates."""
    errs_th = []
    errs_p = []
    for k, est in zip(keyframe_ticks, estimates):
        truth = gt.relative_state(k)
        errs_th.append(np.radians(rotation_error_deg(est.rel.R, truth.R)))
        errs_p.append(np.linalg.norm(est.rel.p - truth.p))
    return (np.degrees(np.sqrt(np.mean(np.square(errs_th)))),
            100.0 * np.sqrt(np.mean(np.square(errs_p))))


def run_monte_carlo(cfg, runs, seed=0, window_cfg=None, noise=None,
                    sigma_px=1.0, markers=None, cam=None):
    """Monte Carlo estimation runs over independent noise realizations.

    The ground truth is shared across runs; each run redraws measurement
    noise. Solver failures are recorded per run, not raised.
    """
    from .smoother import WindowConfig, run_fixed_lag  # deferred: heavy module

    if runs < 1:
        raise ValueError("runs must be >= 1")
    noise = noise or imu.ImuNoiseModel()
    markers = markers or default_markers()
    cam = cam or default_camera(sigma_px=max(sigma_px, 1e-6))
    window_cfg = window_cfg or WindowConfig()
    gt = generate_trajectory(cfg)

    rmse_th, rmse_p, upd_ms, failures = [], [], [], []
    root = np.random.SeedSequence(seed)
    for run, child in enumerate(root.spawn(runs)):
        s1, s2 = child.generate_state(2)
        imu_F, imu_L = synthesize_imu(gt, noise, int(s1))
        feats = synthesize_features(gt, markers, cam, sigma_px, int(s2))
        try:
            t0 = time.perf_counter()
            ticks, estimates, _ = run_fixed_lag(
                gt, imu_F, imu_L, feats, markers, cam, noise, window_cfg)
            elapsed = time.perf_counter() - t0
            th, p = evaluate_estimates(gt, ticks, estimates)
            rmse_th.append(th)
            rmse_p.append(p)
            upd_ms.append(1e3 * elapsed / max(len(ticks), 1))
        except Exception as exc:  # noqa: BLE001 - per-run failures are data
            failures.append((run, repr(exc)))
    return MonteCarloResult(np.array(rmse_th), np.array(rmse_p),
                            np.array(upd_ms), failures)
