import numpy as np
import pytest

from dualpreint import factor as fmod
from dualpreint import imu, so3, synth
from dualpreint.errors import WindowMismatch

NOISE = imu.ImuNoiseModel()


def random_samples(rng, n, dt=0.004):
    return [imu.ImuSample(rng.normal(0, 1.0, 3), rng.normal(0, 3.0, 3), dt)
            for _ in range(n)]


def random_state(rng, bias_scale=0.01):
    rel = fmod.RelativeState(so3.random_rotation(rng),
                             rng.normal(0, 0.5, 3), rng.normal(0, 0.3, 3))
    bF = imu.Bias(rng.normal(0, bias_scale, 3), rng.normal(0, 10 * bias_scale, 3))
    bL = imu.Bias(rng.normal(0, bias_scale, 3), rng.normal(0, 10 * bias_scale, 3))
    return fmod.FullState(rel, bF, bL)


def random_problem(rng, n=10):
    x = random_state(rng)
    pre_F = imu.integrate(random_samples(rng, n), imu.Bias.zero(), NOISE)
    pre_L = imu.integrate(random_samples(rng, n), imu.Bias.zero(), NOISE)
    return x, pre_F, pre_L


def test_retract_local_delta_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = random_state(rng)
        dx = rng.normal(0, 0.1, fmod.STATE_DIM)
        assert np.linalg.norm(x.local_delta(x.retract(dx)) - dx) < 1e-12


def test_window_mismatch_raises():
    rng = np.random.default_rng(1)
    x = random_state(rng)
    pre_F = imu.integrate(random_samples(rng, 10), imu.Bias.zero(), NOISE)
    pre_L = imu.integrate(random_samples(rng, 11), imu.Bias.zero(), NOISE)
    with pytest.raises(WindowMismatch):
        fmod.predict(x, pre_F, pre_L)
    with pytest.raises(WindowMismatch):
        fmod.build_factor(x, pre_F, pre_L)


def test_predict_matches_ground_truth():
    # noise-free synthetic world: propagation must land on the true next
    # relative state, which also exercises the gravity cancellation
    cfg = synth.general_motion_config(("constant", np.pi), duration=1.0, seed=4)
    gt = synth.generate_trajectory(cfg)
    ticks = gt.camera_ticks()
    for ka, kb in zip(ticks[:-1], ticks[1:]):
        sF = [imu.ImuSample(gt.gyro_F[k], gt.accel_F[k], gt.dt)
              for k in range(ka, kb)]
        sL = [imu.ImuSample(gt.gyro_L[k], gt.accel_L[k], gt.dt)
              for k in range(ka, kb)]
        pre_F = imu.integrate(sF, imu.Bias.zero(), NOISE)
        pre_L = imu.integrate(sL, imu.Bias.zero(), NOISE)
        pred = fmod.predict(gt.full_state(ka), pre_F, pre_L)
        truth = gt.relative_state(kb)
        assert np.linalg.norm(so3.log_map(truth.R.T @ pred.R)) < 1e-9
        assert np.linalg.norm(pred.v - truth.v) < 1e-9
        assert np.linalg.norm(pred.p - truth.p) < 1e-9


def test_factor_rebuild_matches_first_order_update():
    # the frozen factor's first-order update tracks a rebuild at the
    # perturbed linearization point
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, pre_F, pre_L = random_problem(rng)
        f = fmod.build_factor(x, pre_F, pre_L)
        dx = rng.normal(size=fmod.STATE_DIM)
        dx *= 1e-4 / np.linalg.norm(dx)
        g = fmod.build_factor(x.retract(dx), pre_F, pre_L)
        R_u, v_u, p_u = fmod.update_measurement(f, dx)
        assert np.linalg.norm(so3.log_map(g.R_j.T @ R_u)) < 1e-7
        assert np.linalg.norm(v_u - g.v_j) < 1e-7
        assert np.linalg.norm(p_u - g.p_j) < 1e-7


def _fd_measurement_jacobians(x, pre_F, pre_L, h=1e-6):
    f0 = fmod.build_factor(x, pre_F, pre_L)
    J_R = np.empty((3, fmod.STATE_DIM))
    J_v = np.empty((3, fmod.STATE_DIM))
    J_p = np.empty((3, fmod.STATE_DIM))
    for k in range(fmod.STATE_DIM):
        e = np.zeros(fmod.STATE_DIM)
        e[k] = h
        fp = fmod.build_factor(x.retract(e), pre_F, pre_L)
        fm = fmod.build_factor(x.retract(-e), pre_F, pre_L)
        J_R[:, k] = (so3.log_map(f0.R_j.T @ fp.R_j)
                     - so3.log_map(f0.R_j.T @ fm.R_j)) / (2 * h)
        J_v[:, k] = (fp.v_j - fm.v_j) / (2 * h)
        J_p[:, k] = (fp.p_j - fm.p_j) / (2 * h)
    return f0, J_R, J_v, J_p


def _rel_err(fd, an):
    return np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1.0)


def test_measurement_jacobians_finite_difference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, pre_F, pre_L = random_problem(rng)
        f0, J_R, J_v, J_p = _fd_measurement_jacobians(x, pre_F, pre_L)
        assert _rel_err(J_R, f0.J_R) < 1e-5
        assert _rel_err(J_v, f0.J_v) < 1e-5
        assert _rel_err(J_p, f0.J_p) < 1e-5


def test_measurement_jacobian_structural_zeros():
    rng = np.random.default_rng(4)
    x, pre_F, pre_L = random_problem(rng)
    f = fmod.build_factor(x, pre_F, pre_L)
    # rotation measurement is blind to position, velocity and accel biases
    for sl in (fmod.SL_P, fmod.SL_V, fmod.SL_BFA, fmod.SL_BLA):
        assert np.all(f.J_R[:, sl] == 0.0)
    # velocity measurement is blind to position
    assert np.all(f.J_v[:, fmod.SL_P] == 0.0)


def test_residual_zero_at_consistent_states():
    rng = np.random.default_rng(5)
    x, pre_F, pre_L = random_problem(rng)
    f = fmod.build_factor(x, pre_F, pre_L)
    x_j = fmod.FullState(fmod.predict(x, pre_F, pre_L), x.bias_F, x.bias_L)
    assert np.linalg.norm(fmod.residual(f, x, x_j)) < 1e-12


def test_residual_jacobians_finite_difference():
    rng = np.random.default_rng(6)
    h = 1e-6
    for _ in range(50):
        x, pre_F, pre_L = random_problem(rng)
        f = fmod.build_factor(x, pre_F, pre_L)
        x_i = x.retract(rng.normal(0, 0.01, fmod.STATE_DIM))
        x_j = fmod.FullState(
            fmod.predict(x, pre_F, pre_L), x.bias_F, x.bias_L).retract(
                rng.normal(0, 0.01, fmod.STATE_DIM))
        J_xi, J_xj = fmod.residual_jacobians(f, x_i, x_j)
        fd_i = np.empty((9, fmod.STATE_DIM))
        for k in range(fmod.STATE_DIM):
            e = np.zeros(fmod.STATE_DIM)
            e[k] = h
            fd_i[:, k] = (fmod.residual(f, x_i.retract(e), x_j)
                          - fmod.residual(f, x_i.retract(-e), x_j)) / (2 * h)
        fd_j = np.empty((9, 9))
        for k in range(9):
            e = np.zeros(fmod.STATE_DIM)
            e[k] = h
            fd_j[:, k] = (fmod.residual(f, x_i, x_j.retract(e))
                          - fmod.residual(f, x_i, x_j.retract(-e))) / (2 * h)
        assert _rel_err(fd_i, J_xi) < 1e-5
        assert _rel_err(fd_j, J_xj) < 1e-5


def _sample_measurement_errors(rng, n_draws, scale=1.0):
    """Empirical synthesized-measurement errors and the predicted cov."""
    noise = imu.ImuNoiseModel(sigma_gv=scale * NOISE.sigma_gv,
                              sigma_av=scale * NOISE.sigma_av)
    base_F = random_samples(rng, 10)
    base_L = random_samples(rng, 10)
    x = random_state(rng, bias_scale=0.0)
    f0 = fmod.build_factor(x, imu.integrate(base_F, imu.Bias.zero(), noise),
                           imu.integrate(base_L, imu.Bias.zero(), noise))
    sg = noise.sigma_gv / np.sqrt(0.004)
    sa = noise.sigma_av / np.sqrt(0.004)
    draws = np.empty((n_draws, 9))
    for i in range(n_draws):
        noisy = []
        for base in (base_F, base_L):
            noisy.append([imu.ImuSample(s.gyro + rng.normal(0, sg, 3),
                                        s.accel + rng.normal(0, sa, 3), s.dt)
                          for s in base])
        fi = fmod.build_factor(x, imu.integrate(noisy[0], imu.Bias.zero(), noise),
                               imu.integrate(noisy[1], imu.Bias.zero(), noise))
        draws[i, 0:3] = so3.log_map(f0.R_j.T @ fi.R_j)
        draws[i, 3:6] = fi.v_j - f0.v_j
        draws[i, 6:9] = fi.p_j - f0.p_j
    return draws, f0.cov


def test_covariance_sampling_oracle():
    rng = np.random.default_rng(7)
    draws, cov = _sample_measurement_errors(rng, 2000)
    ratio = np.var(draws, axis=0) / np.diag(cov)
    assert np.all(ratio > 1 / 1.5) and np.all(ratio < 1.5)


def test_covariance_noise_scaling():
    # halving the white-noise densities scales the covariance by 1/4
    rng = np.random.default_rng(8)
    d1, _ = _sample_measurement_errors(rng, 2000, scale=1.0)
    rng = np.random.default_rng(8)
    d2, _ = _sample_measurement_errors(rng, 2000, scale=0.5)
    ratio = np.var(d1, axis=0) / np.var(d2, axis=0)
    assert np.all(ratio > 4.0 * 0.85) and np.all(ratio < 4.0 * 1.15)


def test_covariance_symmetric_positive_definite():
    rng = np.random.default_rng(9)
    for _ in range(10):
        x, pre_F, pre_L = random_problem(rng)
        f = fmod.build_factor(x, pre_F, pre_L)
        assert np.allclose(f.cov, f.cov.T)
        assert np.all(np.linalg.eigvalsh(f.cov) > 0)
