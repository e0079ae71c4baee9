import math

import numpy as np
import pytest
from scipy import stats

from manoma.channel import (ConfigError, SystemConfig, channel_gain,
                            channel_matrix, channel_vector, frv,
                            min_pair_distance, path_difference,
                            sample_feasible_apv, sample_realization,
                            total_gain, trial_rng)


def test_path_difference_reference_point():
    assert path_difference((0.0, 0.0), 1.3, 0.4) == 0.0


def test_path_difference_axis_case():
    assert path_difference((1.0, 0.0), math.pi / 2, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_path_difference_scalar_reevaluation():
    # independent scalar evaluation: 0.3*sin(1.1)*cos(0.7) - 0.2*cos(1.1)
    expected = 0.3 * math.sin(1.1) * math.cos(0.7) - 0.2 * math.cos(1.1)
    assert path_difference((0.3, -0.2), 1.1, 0.7) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(0.11377067169291141, rel=1e-12)


def test_frv_reference_point_all_ones():
    theta = np.array([0.3, 1.2, 2.0])
    phi = np.array([0.1, 0.6, 3.0])
    g = frv((0.0, 0.0), theta, phi, wavelength=0.1)
    assert np.allclose(g, np.ones(3))


def test_frv_half_wavelength_phase():
    lam = 0.25
    g = frv((lam / 2, 0.0), np.array([math.pi / 2]), np.array([0.0]), lam)
    assert g[0] == pytest.approx(-1.0 + 0j, abs=1e-12)


def test_frv_entrywise_oracle_and_unit_modulus():
    rng = np.random.default_rng(7)
    lam = 0.1
    for _ in range(100):
        theta = rng.uniform(0, math.pi, 5)
        phi = rng.uniform(0, math.pi, 5)
        u = rng.uniform(-0.15, 0.15, 2)
        g = frv(u, theta, phi, lam)
        expected = np.array([
            np.exp(1j * 2 * math.pi / lam * path_difference(u, t, p))
            for t, p in zip(theta, phi)
        ])
        assert np.allclose(g, expected, atol=1e-14)
        assert np.max(np.abs(np.abs(g) - 1.0)) < 1e-12


def test_channel_vector_single_antenna_at_origin():
    f = np.array([0.3 + 0.1j, -0.2j, 0.05 + 0.4j])
    theta = np.array([0.3, 1.2, 2.0])
    phi = np.array([0.1, 0.6, 3.0])
    h = channel_vector(np.array([[0.0, 0.0]]), theta, phi, f, 0.1)
    assert h[0] == pytest.approx(f.sum(), abs=1e-14)


def test_channel_vector_single_path_modulus():
    rng = np.random.default_rng(3)
    f = np.array([0.7 - 0.2j])
    theta = rng.uniform(0, math.pi, 1)
    phi = rng.uniform(0, math.pi, 1)
    apv = rng.uniform(-0.1, 0.1, (4, 2))
    h = channel_vector(apv, theta, phi, f, 0.1)
    assert np.allclose(np.abs(h), abs(f[0]), atol=1e-12)


def test_channel_vector_matches_dense_product_oracle():
    rng = np.random.default_rng(11)
    L, M, lam = 5, 4, 0.1
    theta = rng.uniform(0, math.pi, L)
    phi = rng.uniform(0, math.pi, L)
    f = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    apv = rng.uniform(-0.15, 0.15, (M, 2))
    G = np.stack([frv(apv[m], theta, phi, lam) for m in range(M)], axis=1)  # (L, M)
    oracle = G.conj().T @ f
    assert np.allclose(channel_vector(apv, theta, phi, f, lam), oracle, atol=1e-13)


def test_channel_vector_incremental_assembly():
    rng = np.random.default_rng(12)
    L, M, lam = 3, 5, 0.1
    theta = rng.uniform(0, math.pi, L)
    phi = rng.uniform(0, math.pi, L)
    f = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    apv = rng.uniform(-0.15, 0.15, (M, 2))
    full = channel_vector(apv, theta, phi, f, lam)
    per_antenna = np.array([
        channel_vector(apv[m:m + 1], theta, phi, f, lam)[0] for m in range(M)
    ])
    assert np.allclose(full, per_antenna, rtol=1e-14, atol=0.0)


def test_channel_gain_single_path_is_position_independent():
    rng = np.random.default_rng(4)
    f = np.array([0.9 + 0.5j])
    theta, phi = np.array([0.8]), np.array([1.9])
    for _ in range(5):
        apv = rng.uniform(-0.2, 0.2, (3, 2))
        g = channel_gain(apv, theta, phi, f, 0.1)
        assert g == pytest.approx(3 * abs(f[0]) ** 2, rel=1e-12)


def test_channel_gain_two_term_example():
    f = np.array([1.0, 1.0j]) / math.sqrt(2)
    theta, phi = np.array([0.4, 2.2]), np.array([0.9, 0.3])
    g = channel_gain(np.array([[0.0, 0.0]]), theta, phi, f, 0.1)
    assert g == pytest.approx(abs((1 + 1j) / math.sqrt(2)) ** 2, rel=1e-12)


def test_channel_gain_equals_vector_norm():
    rng = np.random.default_rng(5)
    L, M, lam = 4, 3, 0.1
    theta = rng.uniform(0, math.pi, L)
    phi = rng.uniform(0, math.pi, L)
    f = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    apv = rng.uniform(-0.15, 0.15, (M, 2))
    h = channel_vector(apv, theta, phi, f, lam)
    assert channel_gain(apv, theta, phi, f, lam) == pytest.approx(
        float(np.linalg.norm(h) ** 2), rel=1e-12)


def test_gain_translation_covariance_single_path():
    rng = np.random.default_rng(6)
    f = np.array([0.3 - 0.8j])
    theta, phi = np.array([1.1]), np.array([0.5])
    apv = rng.uniform(-0.1, 0.1, (4, 2))
    g0 = channel_gain(apv, theta, phi, f, 0.1)
    g1 = channel_gain(apv + np.array([0.04, -0.02]), theta, phi, f, 0.1)
    assert g1 == pytest.approx(g0, rel=1e-10)


def test_sample_realization_deterministic():
    cfg = SystemConfig().validate()
    r1 = sample_realization(cfg, 42)
    r2 = sample_realization(cfg, 42)
    assert np.array_equal(r1.theta, r2.theta)
    assert np.array_equal(r1.phi, r2.phi)
    assert np.array_equal(r1.prv, r2.prv)
    assert np.array_equal(r1.distances, r2.distances)
    r3 = sample_realization(cfg, 43)
    assert not np.array_equal(r1.prv, r3.prv)


def test_sample_realization_ranges_match_defaults():
    cfg = SystemConfig().validate()
    r = sample_realization(cfg, 0)
    assert np.all((r.theta >= 0) & (r.theta <= math.pi))
    assert np.all((r.phi >= 0) & (r.phi <= math.pi))
    assert np.all((r.distances >= 50.0) & (r.distances <= 100.0))


def test_prv_second_moment_monte_carlo():
    # pin the distance so the target variance is a constant
    d = 70.0
    cfg = SystemConfig(num_users=200, num_paths=500,
                       distance_range=(d, d)).validate()
    r = sample_realization(cfg, 123)
    target = cfg.pathloss_ref * d**(-cfg.pathloss_exp) / cfg.num_paths
    measured = float(np.mean(np.abs(r.prv) ** 2))
    assert abs(measured - target) / target < 0.03


def test_theta_uniformity_ks():
    cfg = SystemConfig(num_users=100, num_paths=100).validate()
    r = sample_realization(cfg, 9)
    stat = stats.kstest(r.theta.ravel() / math.pi, "uniform")
    assert stat.pvalue > 0.01


def test_reorder_permutes_users():
    cfg = SystemConfig(num_users=4).validate()
    r = sample_realization(cfg, 1)
    order = np.array([2, 0, 3, 1])
    r2 = r.reorder(order)
    assert np.array_equal(r2.prv[0], r.prv[2])
    assert np.array_equal(r2.theta[3], r.theta[1])


def test_total_gain_is_sum_of_user_gains():
    cfg = SystemConfig(num_users=3, num_antennas=2).validate()
    r = sample_realization(cfg, 2)
    apv = sample_feasible_apv(cfg, trial_rng(0))
    per_user = sum(
        channel_gain(apv, r.theta[k], r.phi[k], r.prv[k], cfg.wavelength)
        for k in range(3))
    assert total_gain(apv, r, cfg.wavelength) == pytest.approx(per_user, rel=1e-12)
    H = channel_matrix(apv, r, cfg.wavelength)
    assert H.shape == (3, 2)


def test_config_packing_bound_rejected():
    with pytest.raises(ConfigError, match="num_antennas"):
        SystemConfig(num_antennas=100, region_side=0.3, min_spacing=0.05).validate()


@pytest.mark.parametrize("field,value", [
    ("num_users", 0), ("wavelength", 0.0), ("noise_power", 0.0),
    ("min_rate", -1.0), ("distance_range", (0.0, 10.0)),
    ("tol_stage_one", 0.0), ("max_iters_stage_two", 0),
])
def test_config_validation_names_field(field, value):
    with pytest.raises(ConfigError, match=field.split("_")[0]):
        SystemConfig(**{field: value}).validate()


def test_sample_feasible_apv_respects_constraints():
    cfg = SystemConfig(num_antennas=6).validate()
    for seed in range(10):
        apv = sample_feasible_apv(cfg, trial_rng(seed))
        assert apv.shape == (6, 2)
        assert np.all(np.abs(apv) <= cfg.region_side / 2 + 1e-12)
        assert min_pair_distance(apv) >= cfg.min_spacing - 1e-12


def test_trial_rng_streams_are_independent_and_reproducible():
    a = trial_rng(5, 0).standard_normal(4)
    b = trial_rng(5, 1).standard_normal(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, trial_rng(5, 0).standard_normal(4))
