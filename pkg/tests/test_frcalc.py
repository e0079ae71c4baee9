import math

import numpy as np
import pytest

from conftest import fd_gradient, fd_hessian
from manoma import frcalc
from manoma.channel import SystemConfig, channel_gain, channel_matrix, \
    sample_feasible_apv, sample_realization, trial_rng
from manoma.frcalc import (build_gamma_context, build_phi_context,
                           gamma_curvature_bound, gamma_grad, gamma_hess,
                           gamma_value, phi_curvature_bound, phi_grad,
                           phi_hess, phi_value, rate_surrogate_theta,
                           surrogate_distance_lb, surrogate_gamma_lb,
                           surrogate_phi_lb, surrogate_upsilon_ub,
                           theta_coefficients, upsilon_grad, upsilon_value)

LAM = 0.1
FD_STEP = 1e-6 * LAM


def make_phi(seed, K=3, L=4):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, math.pi, (K, L))
    phi = rng.uniform(0, math.pi, (K, L))
    prv = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) * 1e-2
    return theta, phi, prv, build_phi_context(theta, phi, prv, LAM)


def make_gamma(seed, K=3, M=3, L=4, m=1, k=0, i=2, zero_beam=False):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, math.pi, (K, L))
    phi = rng.uniform(0, math.pi, (K, L))
    prv = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) * 1e-2
    w = (rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))) * 0.1
    if zero_beam:
        w[k] = 0.0
    apv = rng.uniform(-0.12, 0.12, (M, 2))
    ctx = build_gamma_context(w, apv, m, k, i, theta, phi, prv, LAM)
    return theta, phi, prv, w, apv, ctx


# ---------------------------------------------------------------------------
# Phi
# ---------------------------------------------------------------------------

def test_phi_single_path_is_constant():
    theta, phi, prv, ctx = make_phi(0, K=1, L=1)
    vals = [phi_value(ctx, u) for u in ([0, 0], [0.05, -0.1], [0.12, 0.03])]
    assert np.allclose(vals, abs(prv[0, 0]) ** 2, rtol=1e-12)
    assert np.allclose(phi_grad(ctx, [0.03, 0.01]), 0.0, atol=1e-18)
    assert np.allclose(phi_hess(ctx, [0.03, 0.01]), 0.0, atol=1e-15)
    assert phi_curvature_bound(ctx, [0.0, 0.0]) == 0.0


def test_phi_matches_channel_definition():
    rng = np.random.default_rng(1)
    theta, phi, prv, ctx = make_phi(1)
    for _ in range(20):
        u = rng.uniform(-0.15, 0.15, 2)
        oracle = sum(
            channel_gain(u[None, :], theta[k], phi[k], prv[k], LAM)
            for k in range(theta.shape[0]))
        assert phi_value(ctx, u) == pytest.approx(oracle, rel=1e-10)
    # reference point included
    oracle0 = sum(channel_gain(np.zeros((1, 2)), theta[k], phi[k], prv[k], LAM)
                  for k in range(theta.shape[0]))
    assert phi_value(ctx, (0.0, 0.0)) == pytest.approx(oracle0, rel=1e-10)


def test_phi_grad_matches_finite_difference():
    rng = np.random.default_rng(2)
    for seed in range(25):
        _, _, _, ctx = make_phi(seed + 10)
        u = rng.uniform(-0.12, 0.12, 2)
        fd = fd_gradient(lambda v: phi_value(ctx, v), u, FD_STEP)
        an = phi_grad(ctx, u)
        assert np.linalg.norm(an - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_phi_grad_zero_y_component_for_horizontal_paths():
    theta = np.array([[math.pi / 2, math.pi / 2]])
    phi = np.array([[0.0, math.pi]])
    prv = np.array([[0.4 + 0.1j, -0.2 + 0.3j]])
    ctx = build_phi_context(theta, phi, prv, LAM)
    g = phi_grad(ctx, (0.04, -0.07))
    assert g[1] == pytest.approx(0.0, abs=1e-16)


def test_phi_hess_matches_finite_difference_and_is_symmetric():
    rng = np.random.default_rng(3)
    for seed in range(25):
        _, _, _, ctx = make_phi(seed + 40)
        u = rng.uniform(-0.12, 0.12, 2)
        fd = fd_hessian(lambda v: phi_value(ctx, v), u, FD_STEP * 30)
        an = phi_hess(ctx, u)
        assert an[0, 1] == an[1, 0]
        assert np.linalg.norm(an - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_phi_curvature_dominates_eigenvalues():
    rng = np.random.default_rng(4)
    for seed in range(50):
        _, _, _, ctx = make_phi(seed + 80)
        u = rng.uniform(-0.12, 0.12, 2)
        H = phi_hess(ctx, u)
        delta = phi_curvature_bound(ctx, u)
        assert delta >= np.max(np.linalg.eigvalsh(H)) - 1e-12 * max(1, delta)
        assert delta == pytest.approx(math.sqrt(np.sum(H**2)), rel=1e-12)


# ---------------------------------------------------------------------------
# Gamma
# ---------------------------------------------------------------------------

def test_gamma_context_single_antenna_has_no_residual():
    _, _, _, _, _, ctx = make_gamma(5, M=1, m=0)
    assert ctx.zeta_sq == 0.0
    assert np.all(ctx.ampc == 0.0)


def test_gamma_context_zero_beam():
    _, _, _, _, _, ctx = make_gamma(6, zero_beam=True)
    assert np.all(ctx.ampB == 0.0)
    assert np.all(ctx.ampc == 0.0)
    u = np.array([0.02, -0.05])
    assert gamma_value(ctx, u) == 0.0
    assert np.allclose(gamma_grad(ctx, u), 0.0)
    assert np.allclose(gamma_hess(ctx, u), 0.0)
    assert gamma_curvature_bound(ctx, u) == 0.0


def test_gamma_context_rejects_bad_antenna_index():
    with pytest.raises(ValueError):
        make_gamma(7, M=3, m=5)


def test_gamma_value_matches_channel_definition():
    from manoma.channel import ChannelRealization
    for seed in range(10):
        theta, phi, prv, w, apv, ctx = make_gamma(seed + 100)
        rng = np.random.default_rng(seed)
        real = ChannelRealization(theta=theta, phi=phi, prv=prv,
                                  distances=np.ones(3))
        for _ in range(5):
            u = rng.uniform(-0.12, 0.12, 2)
            trial = apv.copy()
            trial[1] = u
            H = channel_matrix(trial, real, LAM)
            oracle = abs(np.vdot(H[2], w[0])) ** 2
            assert gamma_value(ctx, u) == pytest.approx(oracle, rel=1e-10)


def test_gamma_single_path_single_antenna_constant():
    theta, phi, prv, w, apv, ctx = make_gamma(8, K=2, M=1, L=1, m=0, k=0, i=1)
    vals = [gamma_value(ctx, u) for u in ([0, 0], [0.1, -0.05])]
    expected = abs(prv[1, 0]) ** 2 * abs(w[0, 0]) ** 2
    assert np.allclose(vals, expected, rtol=1e-12)
    assert np.allclose(gamma_grad(ctx, [0.05, 0.0]), 0.0, atol=1e-16)


def test_gamma_grad_hess_match_finite_differences():
    rng = np.random.default_rng(9)
    for seed in range(25):
        _, _, _, _, _, ctx = make_gamma(seed + 200)
        u = rng.uniform(-0.12, 0.12, 2)
        fn = lambda v: gamma_value(ctx, v)
        fd_g = fd_gradient(fn, u, FD_STEP)
        an_g = gamma_grad(ctx, u)
        assert np.linalg.norm(an_g - fd_g) <= 1e-5 * max(1.0, np.linalg.norm(fd_g))
        fd_h = fd_hessian(fn, u, FD_STEP * 30)
        an_h = gamma_hess(ctx, u)
        assert np.linalg.norm(an_h - fd_h) <= 1e-4 * max(1.0, np.linalg.norm(fd_h))


def test_gamma_curvature_dominates_eigenvalues():
    rng = np.random.default_rng(10)
    for seed in range(50):
        _, _, _, _, _, ctx = make_gamma(seed + 300)
        u = rng.uniform(-0.12, 0.12, 2)
        H = gamma_hess(ctx, u)
        bound = gamma_curvature_bound(ctx, u)
        assert bound >= np.max(np.linalg.eigvalsh(H)) - 1e-12 * max(1, bound)
    _, _, _, _, _, ctx0 = make_gamma(11, zero_beam=True)
    assert gamma_curvature_bound(ctx0, np.zeros(2)) == 0.0


# ---------------------------------------------------------------------------
# Upsilon
# ---------------------------------------------------------------------------

def build_upsilon_setup(seed, K=3, M=3, L=3, m=1):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, math.pi, (K, L))
    phi = rng.uniform(0, math.pi, (K, L))
    prv = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) * 1e-2
    w = (rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))) * 0.1
    apv = rng.uniform(-0.12, 0.12, (M, 2))
    pi = np.eye(K, dtype=np.int8)
    iu = np.triu_indices(K, k=1)
    pi[iu] = rng.integers(0, 2, len(iu[0]))
    i = int(rng.integers(0, K))
    contexts = [build_gamma_context(w, apv, m, j, i, theta, phi, prv, LAM)
                for j in range(K)]
    return contexts, pi, i


def test_upsilon_single_user_cancels_itself():
    contexts, _, _ = build_upsilon_setup(12, K=1)
    pi = np.array([[1]])
    g = upsilon_grad(contexts, pi, 0, 0, np.zeros(2))
    assert np.allclose(g, 0.0)
    assert frcalc.upsilon_curvature([1.23], pi, 0, 0) == 0.0


def test_upsilon_full_cancellation_at_last_position():
    contexts, _, i = build_upsilon_setup(13, K=3)
    pi = np.triu(np.ones((3, 3), dtype=np.int8))
    g = upsilon_grad(contexts, pi, 2, i, np.array([0.01, 0.02]))
    assert np.allclose(g, 0.0)
    assert frcalc.upsilon_curvature([0.5, 0.6, 0.7], pi, 2, i) == 0.0


def test_upsilon_grad_matches_finite_difference():
    for seed in range(15):
        contexts, pi, i = build_upsilon_setup(seed + 400)
        rng = np.random.default_rng(seed)
        k = int(rng.integers(0, 3))
        u = rng.uniform(-0.1, 0.1, 2)
        noise = 1e-3
        fn = lambda v: upsilon_value(contexts, pi, k, i, v, noise)
        fd = fd_gradient(fn, u, FD_STEP)
        an = upsilon_grad(contexts, pi, k, i, u)
        assert np.linalg.norm(an - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_upsilon_curvature_dominates_fd_hessian():
    for seed in range(15):
        contexts, pi, i = build_upsilon_setup(seed + 500)
        rng = np.random.default_rng(seed)
        k = int(rng.integers(0, 3))
        u = rng.uniform(-0.1, 0.1, 2)
        fn = lambda v: upsilon_value(contexts, pi, k, i, v, 0.0)
        fd_h = fd_hessian(fn, u, FD_STEP * 30)
        bounds = [gamma_curvature_bound(c, u) for c in contexts]
        psi = frcalc.upsilon_curvature(bounds, pi, k, i)
        assert psi >= np.max(np.linalg.eigvalsh(0.5 * (fd_h + fd_h.T))) - 1e-4 * max(1, psi)


# ---------------------------------------------------------------------------
# Surrogates
# ---------------------------------------------------------------------------

def test_phi_surrogate_anchored_and_one_sided():
    rng = np.random.default_rng(14)
    _, _, _, ctx = make_phi(600)
    anchor = rng.uniform(-0.1, 0.1, 2)
    sur = surrogate_phi_lb(ctx, anchor)
    assert sur.evaluate(anchor) == pytest.approx(phi_value(ctx, anchor), abs=1e-15)
    for _ in range(100):
        u = rng.uniform(-0.15, 0.15, 2)
        assert sur.evaluate(u) <= phi_value(ctx, u) + 1e-9


def test_gamma_surrogate_anchored_and_one_sided():
    rng = np.random.default_rng(15)
    _, _, _, _, _, ctx = make_gamma(700)
    anchor = rng.uniform(-0.1, 0.1, 2)
    sur = surrogate_gamma_lb(ctx, anchor)
    assert sur.evaluate(anchor) == pytest.approx(gamma_value(ctx, anchor), abs=1e-15)
    for _ in range(100):
        u = rng.uniform(-0.15, 0.15, 2)
        assert sur.evaluate(u) <= gamma_value(ctx, u) + 1e-9


def test_upsilon_surrogate_anchored_and_one_sided():
    rng = np.random.default_rng(16)
    contexts, pi, i = build_upsilon_setup(800)
    anchor = rng.uniform(-0.1, 0.1, 2)
    noise = 1e-3
    sur = surrogate_upsilon_ub(contexts, pi, 1, i, anchor, noise)
    true_anchor = upsilon_value(contexts, pi, 1, i, anchor, noise)
    assert sur.evaluate(anchor) == pytest.approx(true_anchor, rel=1e-12)
    for _ in range(100):
        u = rng.uniform(-0.15, 0.15, 2)
        assert sur.evaluate(u) >= upsilon_value(contexts, pi, 1, i, u, noise) - 1e-9


def test_distance_surrogate_first_order():
    anchor = np.array([0.05, -0.02])
    other = np.array([-0.01, 0.04])
    sur = surrogate_distance_lb(anchor, other)
    assert sur.evaluate(anchor) == pytest.approx(
        float(np.sum((anchor - other) ** 2)), rel=1e-15)
    rng = np.random.default_rng(17)
    for _ in range(100):
        u = rng.uniform(-0.15, 0.15, 2)
        assert sur.evaluate(u) <= float(np.sum((u - other) ** 2)) + 1e-12


def test_theta_surrogate_anchor_and_frozen_value():
    assert rate_surrogate_theta(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    # anchored at (1, 1), evaluated at (2, 1): 1 - log2(e)/2
    assert rate_surrogate_theta(2.0, 1.0, 1.0, 1.0) == pytest.approx(
        0.2786524795555183, rel=1e-12)
    assert math.log2(1.5) == pytest.approx(0.5849625007211562, rel=1e-12)
    assert rate_surrogate_theta(2.0, 1.0, 1.0, 1.0) <= math.log2(1.5)


def test_theta_surrogate_one_sided_sampling():
    rng = np.random.default_rng(18)
    for _ in range(1000):
        at, bt = rng.uniform(0.05, 20.0, 2)
        a, b = rng.uniform(0.05, 20.0, 2)
        assert rate_surrogate_theta(a, b, at, bt) <= math.log2(1 + 1 / (a * b)) + 1e-12


def test_theta_surrogate_rejects_bad_anchors():
    with pytest.raises(ValueError):
        theta_coefficients(0.0, 1.0)
    with pytest.raises(ValueError):
        rate_surrogate_theta(-1.0, 1.0, 1.0, 1.0)


def test_phi_context_asserts_hermitian():
    theta = np.array([[0.3, 0.7]])
    phi = np.array([[0.1, 0.2]])
    prv = np.array([[0.1 + 0.2j, 0.3 - 0.1j]])
    build_phi_context(theta, phi, prv, LAM)  # fine
