import numpy as np
import pytest

from dualpreint import imu, so3
from dualpreint.errors import EmptySampleSet

RNG = np.random.default_rng(3)
NOISE = imu.ImuNoiseModel()


def random_samples(n, dt=0.004, gyro_scale=1.0, accel_scale=3.0, rng=RNG):
    return [imu.ImuSample(rng.normal(0, gyro_scale, 3),
                          rng.normal(0, accel_scale, 3), dt)
            for _ in range(n)]


def naive_increments(samples, bias):
    """Straight-line re-implementation of the nominal increment recursions."""
    dR, dv, dp = np.eye(3), np.zeros(3), np.zeros(3)
    for s in samples:
        w = s.gyro - bias.gyro
        a = s.accel - bias.accel
        dp = dp + dv * s.dt + 0.5 * dR @ a * s.dt**2
        dv = dv + dR @ a * s.dt
        dR = dR @ so3.exp_map(w * s.dt)
    return dR, dv, dp


def test_sample_validation():
    with pytest.raises(ValueError):
        imu.ImuSample(np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        imu.ImuSample(np.zeros(3), np.zeros(3), 0.2)
    with pytest.raises(ValueError):
        imu.ImuNoiseModel(sigma_gv=-1.0)
    with pytest.raises(EmptySampleSet):
        imu.integrate([], imu.Bias.zero(), NOISE)


def test_nominal_increments_match_naive_oracle():
    for _ in range(20):
        samples = random_samples(25)
        bias = imu.Bias(RNG.normal(0, 0.01, 3), RNG.normal(0, 0.1, 3))
        pre = imu.integrate(samples, bias, NOISE)
        dR, dv, dp = naive_increments(samples, bias)
        assert np.linalg.norm(pre.delta_R - dR) < 1e-12
        assert np.linalg.norm(pre.delta_v - dv) < 1e-12
        assert np.linalg.norm(pre.delta_p - dp) < 1e-12
        assert pre.n_samples == 25
        assert abs(pre.dt_total - 0.1) < 1e-12


def test_constant_rate_closed_form():
    w = np.array([0.3, -0.2, 0.5])
    samples = [imu.ImuSample(w, np.zeros(3), 0.004) for _ in range(50)]
    pre = imu.integrate(samples, imu.Bias.zero(), NOISE)
    assert np.linalg.norm(pre.delta_R - so3.exp_map(w * 0.2)) < 1e-12


def test_concatenation_composition():
    # increments over [0, T2] equal the composition of the two halves
    s1 = random_samples(20)
    s2 = random_samples(30)
    b = imu.Bias.zero()
    p01 = imu.integrate(s1, b, NOISE)
    p12 = imu.integrate(s2, b, NOISE)
    p02 = imu.integrate(s1 + s2, b, NOISE)
    T2 = p12.dt_total
    assert np.linalg.norm(p02.delta_R - p01.delta_R @ p12.delta_R) < 1e-12
    assert np.linalg.norm(p02.delta_v
                          - (p01.delta_v + p01.delta_R @ p12.delta_v)) < 1e-12
    assert np.linalg.norm(
        p02.delta_p - (p01.delta_p + p01.delta_v * T2
                       + p01.delta_R @ p12.delta_p)) < 1e-11


def test_bias_update_matches_reintegration():
    # first-order corrected increments vs full re-integration at the new bias
    rng = np.random.default_rng(11)
    for _ in range(100):
        samples = random_samples(62, rng=rng)   # ~0.25 s at 250 Hz
        b0 = imu.Bias(rng.normal(0, 0.01, 3), rng.normal(0, 0.1, 3))
        db = rng.normal(size=6)
        db *= rng.uniform(0, 1e-3) / np.linalg.norm(db)
        b1 = imu.Bias(b0.gyro + db[:3], b0.accel + db[3:])
        pre = imu.integrate(samples, b0, NOISE)
        dR_c, dv_c, dp_c = imu.correct_for_bias(pre, b1)
        dR_r, dv_r, dp_r = naive_increments(samples, b1)
        assert np.linalg.norm(so3.log_map(dR_r.T @ dR_c)) < 1e-6
        assert np.linalg.norm(dv_c - dv_r) < 1e-6
        assert np.linalg.norm(dp_c - dp_r) < 1e-7


def test_bias_jacobians_finite_difference():
    samples = random_samples(25)
    b0 = imu.Bias(np.array([0.005, -0.01, 0.002]), np.array([0.05, 0.1, -0.02]))
    pre = imu.integrate(samples, b0, NOISE)
    h = 1e-6
    J_R, J_vg, J_va, J_pg, J_pa = (np.empty((3, 3)) for _ in range(5))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        pg_p = imu.integrate(samples, imu.Bias(b0.gyro + e, b0.accel), NOISE)
        pg_m = imu.integrate(samples, imu.Bias(b0.gyro - e, b0.accel), NOISE)
        pa_p = imu.integrate(samples, imu.Bias(b0.gyro, b0.accel + e), NOISE)
        pa_m = imu.integrate(samples, imu.Bias(b0.gyro, b0.accel - e), NOISE)
        J_R[:, k] = (so3.log_map(pre.delta_R.T @ pg_p.delta_R)
                     - so3.log_map(pre.delta_R.T @ pg_m.delta_R)) / (2 * h)
        J_vg[:, k] = (pg_p.delta_v - pg_m.delta_v) / (2 * h)
        J_va[:, k] = (pa_p.delta_v - pa_m.delta_v) / (2 * h)
        J_pg[:, k] = (pg_p.delta_p - pg_m.delta_p) / (2 * h)
        J_pa[:, k] = (pa_p.delta_p - pa_m.delta_p) / (2 * h)
    for fd, an in ((J_R, pre.J_R_bg), (J_vg, pre.J_v_bg), (J_va, pre.J_v_ba),
                   (J_pg, pre.J_p_bg), (J_pa, pre.J_p_ba)):
        assert np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1.0) < 1e-5


def test_covariance_sampling_consistency():
    # empirical scatter of noisy increments vs the propagated covariance
    rng = np.random.default_rng(5)
    base = random_samples(25, rng=rng)
    b = imu.Bias.zero()
    pre0 = imu.integrate(base, b, NOISE)
    sg = NOISE.sigma_gv / np.sqrt(0.004)
    sa = NOISE.sigma_av / np.sqrt(0.004)
    draws = []
    for _ in range(1500):
        noisy = [imu.ImuSample(s.gyro + rng.normal(0, sg, 3),
                               s.accel + rng.normal(0, sa, 3), s.dt)
                 for s in base]
        p = imu.integrate(noisy, b, NOISE)
        e = np.empty(9)
        e[0:3] = so3.log_map(p.delta_R.T @ pre0.delta_R)
        e[3:6] = pre0.delta_v - p.delta_v
        e[6:9] = pre0.delta_p - p.delta_p
        draws.append(e)
    emp = np.cov(np.array(draws).T)
    ratio = np.diag(emp) / np.diag(pre0.cov)
    assert np.all(ratio > 1 / 1.5) and np.all(ratio < 1.5)


def test_bias_walk_covariance():
    cg, ca = imu.bias_walk_covariance(NOISE, 0.04)
    assert np.allclose(cg, 0.04 * NOISE.sigma_gu**2 * np.eye(3))
    assert np.allclose(ca, 0.04 * NOISE.sigma_au**2 * np.eye(3))
    with pytest.raises(ValueError):
        imu.bias_walk_covariance(NOISE, 0.0)
