"""Fixed-lag Gauss-Newton smoother over relative states and IMU biases.

Each keyframe state is 21-dimensional: relative rotation, position and
velocity plus both platforms' gyro/accel biases. The window holds ``lag``
keyframes; older keyframes are folded into a dense Gaussian prior by Schur
complement. The dual-preintegration factor stays frozen at the
linearization point it was built at and is corrected to first order, so no
re-integration happens during optimization.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import factor as fmod
from . import imu, so3, vision
from .errors import SingularNormalEquations

D = fmod.STATE_DIM


@dataclass(frozen=True)
class WindowConfig:
    lag: int = 2
    max_iterations: int = 1
    max_halvings: int = 5
    regularization: float = 1e-12

    def __post_init__(self):
        if self.lag < 2:
            raise ValueError("lag must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PriorSpec:
    """Initial-state prior: mean and per-component standard deviations."""
    state: fmod.FullState
    sigmas: np.ndarray    # 21 stddevs in state-perturbation order

    @staticmethod
    def from_state(state, sigma_rot=1e-2, sigma_pos=1e-2, sigma_vel=1e-2,
                   sigma_bg=2e-2, sigma_ba=2e-1):
        s = np.empty(D)
        s[fmod.SL_THETA] = sigma_rot
        s[fmod.SL_P] = sigma_pos
        s[fmod.SL_V] = sigma_vel
        s[fmod.SL_BFG] = s[fmod.SL_BLG] = sigma_bg
        s[fmod.SL_BFA] = s[fmod.SL_BLA] = sigma_ba
        return PriorSpec(state, s)


@dataclass
class _Prior:
    """Quadratic prior 0.5 dx'H dx + b'dx in the deltas from x_bar."""
    ticks: list
    x_bar: dict          # tick -> FullState
    H: np.ndarray
    b: np.ndarray

    def delta(self, states):
        return np.concatenate([self.x_bar[t].local_delta(states[t])
                               for t in self.ticks])

    def cost(self, states):
        dx = self.delta(states)
        return 0.5 * dx @ self.H @ dx + self.b @ dx


class _DualFactor:
    def __init__(self, tick_i, tick_j, dp_factor):
        self.ticks = (tick_i, tick_j)
        self.dp = dp_factor
        self.W = np.linalg.inv(dp_factor.cov)

    def residual_blocks(self, states):
        x_i, x_j = states[self.ticks[0]], states[self.ticks[1]]
        r = fmod.residual(self.dp, x_i, x_j)
        J_xi, J_xj9 = fmod.residual_jacobians(self.dp, x_i, x_j)
        J_xj = np.zeros((9, D))
        J_xj[:, 0:9] = J_xj9
        return r, {self.ticks[0]: J_xi, self.ticks[1]: J_xj}, self.W

    def cost(self, states):
        r = fmod.residual(self.dp, states[self.ticks[0]], states[self.ticks[1]])
        return 0.5 * r @ self.W @ r


class _BiasWalkFactor:
    """Random-walk constraint between consecutive keyframes' biases."""

    def __init__(self, tick_i, tick_j, noise, dt_total):
        self.ticks = (tick_i, tick_j)
        cov_g, cov_a = imu.bias_walk_covariance(noise, dt_total)
        w = np.empty(12)
        w[0:3] = w[6:9] = 1.0 / cov_g[0, 0]
        w[3:6] = w[9:12] = 1.0 / cov_a[0, 0]
        self.W = np.diag(w)

    def _res(self, states):
        x_i, x_j = states[self.ticks[0]], states[self.ticks[1]]
        return np.concatenate([x_j.bias_F.as_vector() - x_i.bias_F.as_vector(),
                               x_j.bias_L.as_vector() - x_i.bias_L.as_vector()])

    def residual_blocks(self, states):
        r = self._res(states)
        J_j = np.zeros((12, D))
        J_j[:, 9:21] = np.eye(12)
        J_i = -J_j
        return r, {self.ticks[0]: J_i, self.ticks[1]: J_j}, self.W

    def cost(self, states):
        r = self._res(states)
        return 0.5 * r @ self.W @ r


class _VisionFactor:
    """Stacked marker reprojection residuals for one keyframe."""

    def __init__(self, tick, observations, marker_map, cam):
        self.ticks = (tick,)
        self.obs = [(marker_map[o.marker_id], o) for o in observations
                    if o.marker_id in marker_map]
        self.inv_var = 1.0 / cam.sigma_px**2
        self.cam = cam

    def residual_blocks(self, states):
        rel = states[self.ticks[0]].rel
        m = len(self.obs)
        r = np.empty(2 * m)
        J = np.zeros((2 * m, D))
        for k, (marker, ob) in enumerate(self.obs):
            rk, Jk = vision.reprojection_residual_and_jacobian(
                rel, marker, self.cam, ob)
            r[2 * k:2 * k + 2] = rk
            J[2 * k:2 * k + 2, 0:6] = Jk[:, 0:6]
        return r, {self.ticks[0]: J}, self.inv_var * np.eye(2 * len(self.obs))

    def cost(self, states):
        rel = states[self.ticks[0]].rel
        c = 0.0
        for marker, ob in self.obs:
            rk, _ = vision.reprojection_residual_and_jacobian(
                rel, marker, self.cam, ob)
            c += 0.5 * self.inv_var * (rk @ rk)
        return c


@dataclass
class SmootherEstimate:
    tick: int
    state: fmod.FullState
    cov: np.ndarray       # 21x21 marginal of this state at solve time
    cost: float
    update_ms: float
    n_iterations: int


class FixedLagSmoother:
    """Sliding-window Gauss-Newton estimator over dual-preintegration,
    bias-random-walk and marker-reprojection factors."""

    def __init__(self, window_cfg, noise, markers, cam, prior_spec):
        self.cfg = window_cfg
        self.noise = noise
        self.marker_map = {m.marker_id: m for m in markers}
        self.cam = cam
        self.states = {}
        self.order = []
        self.factors = []
        self._init_prior_spec = prior_spec

    # ---- graph assembly -------------------------------------------------

    def _solve_spd(self, H, g):
        Hr = H + self.cfg.regularization * np.eye(H.shape[0])
        try:
            L = np.linalg.cholesky(Hr)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalEquations(str(exc)) from None
        y = np.linalg.solve(L, g)
        return np.linalg.solve(L.T, y), Hr

    def _assemble(self, ticks, factors, prior):
        idx = {t: D * i for i, t in enumerate(ticks)}
        n = D * len(ticks)
        H = np.zeros((n, n))
        g = np.zeros(n)
        for f in factors:
            r, blocks, W = f.residual_blocks(self.states)
            items = [(idx[t], J) for t, J in blocks.items()]
            Wr = W @ r
            for o1, J1 in items:
                g[o1:o1 + D] += J1.T @ Wr
                J1tW = J1.T @ W
                for o2, J2 in items:
                    H[o1:o1 + D, o2:o2 + D] += J1tW @ J2
        if prior is not None:
            po = [idx[t] for t in prior.ticks]
            dx = prior.delta(self.states)
            grad = prior.H @ dx + prior.b
            for a, oa in enumerate(po):
                g[oa:oa + D] += grad[D * a:D * a + D]
                for bcol, ob in enumerate(po):
                    H[oa:oa + D, ob:ob + D] += \
                        prior.H[D * a:D * a + D, D * bcol:D * bcol + D]
        return H, g, idx

    def _total_cost(self, states, factors, prior):
        c = sum(f.cost(states) for f in factors)
        if prior is not None:
            c += prior.cost(states)
        return c

    # ---- public API -----------------------------------------------------

    def add_keyframe(self, tick, imu_F=None, imu_L=None, observations=None):
        """Insert a keyframe, optimize the window, slide if necessary.

        The first keyframe is initialized from the prior; later keyframes
        need the IMU samples of both platforms covering the interval since
        the previous keyframe.
        """
        t0 = time.perf_counter()
        if not self.order:
            spec = self._init_prior_spec
            self.states[tick] = spec.state
            H0 = np.diag(1.0 / spec.sigmas**2)
            self.prior = _Prior([tick], {tick: spec.state}, H0, np.zeros(D))
            self.order.append(tick)
        else:
            prev = self.order[-1]
            x_prev = self.states[prev]
            pre_F = imu.integrate(imu_F, x_prev.bias_F, self.noise)
            pre_L = imu.integrate(imu_L, x_prev.bias_L, self.noise)
            dp = fmod.build_factor(x_prev, pre_F, pre_L)
            rel_j = fmod.predict(x_prev, pre_F, pre_L)
            self.states[tick] = fmod.FullState(rel_j, x_prev.bias_F,
                                               x_prev.bias_L)
            self.order.append(tick)
            self.factors.append(_DualFactor(prev, tick, dp))
            self.factors.append(
                _BiasWalkFactor(prev, tick, self.noise, pre_F.dt_total))
        if observations:
            self.factors.append(
                _VisionFactor(tick, observations, self.marker_map, self.cam))

        cost, cov, iters = self.optimize()
        est = SmootherEstimate(tick, self.states[tick], cov, cost,
                               1e3 * (time.perf_counter() - t0), iters)
        if len(self.order) > self.cfg.lag:
            self.marginalize_oldest()
        return est

    def optimize(self):
        """Gauss-Newton iterations with step halving over the active window.

        Returns (final cost, marginal covariance of the newest state,
        iterations run).
        """
        ticks = self.order
        cost = self._total_cost(self.states, self.factors, self.prior)
        iters = 0
        Hr = None
        for _ in range(self.cfg.max_iterations):
            H, g, idx = self._assemble(ticks, self.factors, self.prior)
            dx, Hr = self._solve_spd(H, -g)
            step = 1.0
            accepted = False
            for _ in range(self.cfg.max_halvings + 1):
                trial = {t: self.states[t].retract(step * dx[o:o + D])
                         for t, o in idx.items()}
                trial_cost = self._total_cost(trial, self.factors, self.prior)
                if trial_cost <= cost:
                    self.states.update(trial)
                    cost = trial_cost
                    accepted = True
                    break
                step *= 0.5
            iters += 1
            if not accepted:
                break
        if Hr is None:
            H, g, idx = self._assemble(ticks, self.factors, self.prior)
            Hr = H + self.cfg.regularization * np.eye(H.shape[0])
        o = D * (len(ticks) - 1)
        cov_full = np.linalg.inv(Hr)
        return cost, cov_full[o:o + D, o:o + D], iters

    def marginalize_oldest(self):
        """Fold the oldest keyframe into the prior by Schur complement.

        Only the factors touching that keyframe (plus the existing prior)
        enter the local system; they are then removed from the graph.
        """
        old = self.order[0]
        touching = [f for f in self.factors if old in f.ticks]
        involved = {old}
        for f in touching:
            involved.update(f.ticks)
        involved.update(self.prior.ticks)
        ticks = sorted(involved)
        H, g, idx = self._assemble(ticks, touching, self.prior)

        keep = [t for t in ticks if t != old]
        im = list(range(idx[old], idx[old] + D))
        ik = [c for t in keep for c in range(idx[t], idx[t] + D)]
        H_mm = H[np.ix_(im, im)] + self.cfg.regularization * np.eye(D)
        H_km = H[np.ix_(ik, im)]
        sol = np.linalg.solve(H_mm, np.column_stack([H_km.T, g[im]]))
        H_new = H[np.ix_(ik, ik)] - H_km @ sol[:, :-1]
        b_new = g[ik] - H_km @ sol[:, -1]
        H_new = 0.5 * (H_new + H_new.T)

        self.prior = _Prior(keep, {t: self.states[t] for t in keep},
                            H_new, b_new)
        self.factors = [f for f in self.factors if old not in f.ticks]
        self.order.remove(old)
        del self.states[old]


def run_fixed_lag(gt, imu_F, imu_L, feature_frames, markers, cam, noise,
                  window_cfg, prior_spec=None):
    """Drive the smoother along a synthetic run, one keyframe per camera tick.

    Returns (keyframe ticks, per-keyframe FullState estimates recorded at
    solve time, per-keyframe SmootherEstimate diagnostics).
    """
    ticks = gt.camera_ticks()
    if prior_spec is None:
        prior_spec = PriorSpec.from_state(gt.full_state(0))
    sm = FixedLagSmoother(window_cfg, noise, markers, cam, prior_spec)
    estimates = []
    diags = []
    for n, (ka, kb) in enumerate(zip([None] + ticks[:-1], ticks)):
        if ka is None:
            est = sm.add_keyframe(kb, observations=feature_frames[n])
        else:
            est = sm.add_keyframe(kb, imu_F=imu_F[ka:kb], imu_L=imu_L[ka:kb],
                                  observations=feature_frames[n])
        estimates.append(est.state)
        diags.append(est)
    return ticks, estimates, diags
