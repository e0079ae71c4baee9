"""Conic encodings of the three inner subproblems.

All builders normalize their data before emitting a problem: channels are
divided by the per-user noise standard deviation and beam powers by the
power budget, so the solver sees quantities of order one instead of the
raw watt-scale values (which span ten or more decades).

Hyperbolic constraints  alpha * T >= 1  (both sides nonnegative) are encoded
as the second-order cone  ||(2, alpha - T)|| <= alpha + T.  Hermitian PSD
blocks are embedded as real symmetric blocks of doubled order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import frcalc
from .cones import smat, svec
from .problem import NONNEG, PSD, SOC, ConicProblem, svec_dim
from .ipm import solve_conic


# ---------------------------------------------------------------------------
# Hermitian <-> real symmetric embedding
# ---------------------------------------------------------------------------

def herm_embed(H: np.ndarray) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]]; PSD iff H is PSD, trace doubled."""
    Re, Im = H.real, H.imag
    return np.block([[Re, -Im], [Im, Re]])


def herm_recover(S: np.ndarray) -> np.ndarray:
    """Average a real symmetric 2M x 2M block back to an M x M Hermitian
    matrix; PSD input gives a PSD output."""
    M = S.shape[0] // 2
    re = 0.5 * (S[:M, :M] + S[M:, M:])
    im = 0.5 * (S[M:, :M] - S[:M, M:])
    W = re + 1j * im
    return 0.5 * (W + W.conj().T)


# ---------------------------------------------------------------------------
# Active pair bookkeeping
# ---------------------------------------------------------------------------

def active_pairs(pi: np.ndarray) -> list:
    """(k, i) with pi[k, i] = 1 and k <= i, row-major; includes every (k, k)."""
    K = pi.shape[0]
    return [(k, i) for k in range(K) for i in range(k, K) if pi[k, i] == 1]


@dataclass
class SlackAnchors:
    """Raw-unit anchors for the rate-surrogate slack variables, one per
    active (k, i) pair: alpha = 1/Gamma, beta = Upsilon, both positive."""

    pairs: list
    alpha: np.ndarray
    beta: np.ndarray

    def lookup(self, k: int, i: int):
        idx = self.pairs.index((k, i))
        return self.alpha[idx], self.beta[idx]


# ---------------------------------------------------------------------------
# Problem (gain step): concave 2-D QP over box and linearized spacing cuts
# ---------------------------------------------------------------------------

def _spacing_rows(anchor, fixed_positions, min_spacing, num_vars):
    """Linearized pairwise-spacing half-planes as orthant rows."""
    rows, rhs = [], []
    for un in fixed_positions:
        d = anchor - un
        row = np.zeros(num_vars)
        row[0:2] = -2.0 * d
        rows.append(row)
        rhs.append(float(d @ d) - 2.0 * float(d @ anchor) - min_spacing**2)
    return rows, rhs


def build_gain_qp(anchor, grad, curvature, fixed_positions, region_side,
                  min_spacing) -> ConicProblem:
    """Conic form of one antenna's surrogate-gain maximization step.

    Variables (x, y, t) with t an epigraph of ||u - anchor||^2; objective is
    normalized to unit scale (the caller evaluates true objectives itself).
    """
    anchor = np.asarray(anchor, dtype=float)
    quad = curvature > 0.0
    n = 3 if quad else 2
    half = region_side / 2.0
    g_rows = [np.zeros(n) for _ in range(4)]
    g_rows[0][0] = 1.0
    g_rows[1][0] = -1.0
    g_rows[2][1] = 1.0
    g_rows[3][1] = -1.0
    h_rows = [half, half, half, half]
    sp_rows, sp_rhs = _spacing_rows(anchor, fixed_positions, min_spacing, n)
    g_rows += sp_rows
    h_rows += sp_rhs
    cones = [(NONNEG, len(g_rows))]
    G = np.array(g_rows)
    h = np.array(h_rows)
    c = np.zeros(n)
    c[0:2] = grad
    if quad:
        c[2] = -0.5 * curvature
        soc = np.zeros((4, n))
        soc[0, 2] = -1.0
        soc[1, 0] = -2.0
        soc[2, 1] = -2.0
        soc[3, 2] = -1.0
        hs = np.array([1.0, -2.0 * anchor[0], -2.0 * anchor[1], -1.0])
        G = np.vstack([G, soc])
        h = np.concatenate([h, hs])
        cones.append((SOC, 4))
    scale = max(np.max(np.abs(c)), 1e-30)
    return ConicProblem(c=c / scale, G=G, h=h, cones=cones, name="gain-step")


def solve_gain_qp(anchor, phi_ctx, fixed_positions, config,
                  tolerances=None) -> np.ndarray:
    """One surrogate step for a single antenna: closed-form box-clipped
    vertex when no spacing cut is active, conic solve otherwise, anchor on
    any failure.  The returned point always satisfies the box and the
    linearized spacing cuts."""
    anchor = np.asarray(anchor, dtype=float)
    grad = frcalc.phi_grad(phi_ctx, anchor)
    curv = frcalc.phi_curvature_bound(phi_ctx, anchor)
    half = config.region_side / 2.0
    fixed = np.asarray(fixed_positions, dtype=float).reshape(-1, 2)

    def cuts_ok(u):
        for un in fixed:
            d = anchor - un
            if float(d @ d) + 2.0 * float(d @ (u - anchor)) < config.min_spacing**2 - 1e-12:
                return False
        return True

    if curv > 0.0:
        vertex = np.clip(anchor + grad / curv, -half, half)
    elif np.linalg.norm(grad) > 0.0:
        vertex = np.where(grad > 0, half, np.where(grad < 0, -half, anchor))
    else:
        return anchor
    if cuts_ok(vertex):
        return vertex

    problem = build_gain_qp(anchor, grad, curv, fixed, config.region_side,
                            config.min_spacing)
    sol = solve_conic(problem, **(tolerances or {}))
    if not sol.optimal:
        return anchor
    u = sol.x[0:2]
    if not cuts_ok(u) or np.max(np.abs(u)) > half + 1e-9:
        return anchor
    return u


# ---------------------------------------------------------------------------
# Problem (beamforming step): SDP over lifted beams
# ---------------------------------------------------------------------------

def _normalized_anchors(anchors: SlackAnchors, noise, pairs):
    noise = np.asarray(noise, dtype=float)
    a_hat = np.empty(len(pairs))
    b_hat = np.empty(len(pairs))
    for p, (k, i) in enumerate(pairs):
        a_hat[p] = anchors.alpha[p] * noise[i]
        b_hat[p] = anchors.beta[p] / noise[i]
    return a_hat, b_hat


def build_beamforming_sdp(h_table, pi, anchors: SlackAnchors, config,
                          r_min: float, noise=None) -> ConicProblem:
    """Lifted beamforming problem at fixed positions and indicator matrix.

    Variables: svec of the doubled real embedding of each W_k / P_max, the
    per-user rates, and the slack pair variables (alpha, beta) in
    noise-normalized units.
    """
    h_table = np.asarray(h_table)
    pi = np.asarray(pi)
    K, M = h_table.shape
    noise = np.full(K, config.noise_power) if noise is None else np.asarray(noise)
    pairs = anchors.pairs
    P = len(pairs)
    sb = svec_dim(2 * M)
    n = K * sb + K + 2 * P

    def sl_S(k):
        return slice(k * sb, (k + 1) * sb)

    def ix_R(k):
        return K * sb + k

    def ix_a(p):
        return K * sb + K + p

    def ix_b(p):
        return K * sb + K + P + p

    # normalized channel outer products: q_i . svec(S_k) = Tr(W_hat_k Hh_i)
    q = np.empty((K, sb))
    for i in range(K):
        hh = h_table[i] * math.sqrt(config.max_power) / math.sqrt(noise[i])
        q[i] = svec(herm_embed(np.outer(hh, hh.conj()))) / 2.0

    a_hat, b_hat = _normalized_anchors(anchors, noise, pairs)

    rows, rhs = [], []
    # total power
    row = np.zeros(n)
    tr = svec(np.eye(2 * M)) / 2.0
    for k in range(K):
        row[sl_S(k)] = tr
    rows.append(row)
    rhs.append(1.0)
    # QoS
    for k in range(K):
        row = np.zeros(n)
        row[ix_R(k)] = -1.0
        rows.append(row)
        rhs.append(-r_min)
    # anchored rate surrogate per active pair
    for p, (k, i) in enumerate(pairs):
        val, ca, cb = frcalc.theta_coefficients(a_hat[p], b_hat[p])
        row = np.zeros(n)
        row[ix_R(k)] = 1.0
        row[ix_a(p)] = ca
        row[ix_b(p)] = cb
        rows.append(row)
        rhs.append(val + ca * a_hat[p] + cb * b_hat[p])
    # interference slack per active pair
    for p, (k, i) in enumerate(pairs):
        row = np.zeros(n)
        for j in range(K):
            weight = 1.0 - (pi[j, i] if j <= k else 0)
            if weight:
                row[sl_S(j)] += weight * q[i]
        row[ix_b(p)] = -1.0
        rows.append(row)
        rhs.append(-1.0)

    G = np.array(rows)
    h = np.array(rhs)
    cones = [(NONNEG, len(rows))]

    # hyperbolic rows: alpha_p * Tr(W_k Hh_i) >= 1
    soc_G, soc_h = [], []
    for p, (k, i) in enumerate(pairs):
        r0 = np.zeros(n)
        r0[ix_a(p)] = -1.0
        r0[sl_S(k)] = -q[i]
        r1 = np.zeros(n)
        r2 = np.zeros(n)
        r2[ix_a(p)] = -1.0
        r2[sl_S(k)] = q[i]
        soc_G += [r0, r1, r2]
        soc_h += [0.0, 2.0, 0.0]
        cones.append((SOC, 3))
    G = np.vstack([G, np.array(soc_G)])
    h = np.concatenate([h, np.array(soc_h)])

    # PSD lift per beam
    psd_G = np.zeros((K * sb, n))
    for k in range(K):
        psd_G[k * sb:(k + 1) * sb, sl_S(k)] = -np.eye(sb)
        cones.append((PSD, 2 * M))
    G = np.vstack([G, psd_G])
    h = np.concatenate([h, np.zeros(K * sb)])

    c = np.zeros(n)
    for k in range(K):
        c[ix_R(k)] = 1.0
    return ConicProblem(c=c, G=G, h=h, cones=cones, name="beamforming-sdp")


def beams_from_solution(x: np.ndarray, K: int, M: int, max_power: float):
    """Recover the K lifted Hermitian beam matrices (watt units) from a
    beamforming solution vector."""
    sb = svec_dim(2 * M)
    out = []
    for k in range(K):
        S = smat(x[k * sb:(k + 1) * sb], 2 * M)
        out.append(herm_recover(S) * max_power)
    return out


def extract_rank_one(W: np.ndarray, ratio_tol: float = 1e-4, rng=None,
                     score_fn=None, num_candidates: int = 100):
    """Principal-eigenpair beam from a lifted matrix.

    Returns (w, ratio, path).  ratio is lambda_2/lambda_1; when it exceeds
    ratio_tol and an rng is supplied, Gaussian randomization draws
    num_candidates beams from W (rescaled to Tr(W) power) and keeps the
    best-scoring one.
    """
    W = np.asarray(W)
    herm_defect = np.linalg.norm(W - W.conj().T)
    if herm_defect > 1e-8 * max(1.0, np.linalg.norm(W)):
        raise ValueError(f"matrix is not Hermitian (defect {herm_defect:.2e})")
    W = 0.5 * (W + W.conj().T)
    vals, vecs = np.linalg.eigh(W)
    lam1 = float(max(vals[-1], 0.0))
    lam2 = float(max(vals[-2], 0.0)) if W.shape[0] > 1 else 0.0
    ratio = lam2 / lam1 if lam1 > 0 else 0.0
    w = math.sqrt(lam1) * vecs[:, -1]
    if ratio <= ratio_tol or rng is None:
        return w, ratio, "principal"
    # Gaussian randomization
    if score_fn is None:
        score_fn = lambda v: float(np.real(np.vdot(v, W @ v)))
    root = vecs @ (np.sqrt(np.clip(vals, 0.0, None))[:, None] * vecs.conj().T)
    power = float(np.real(np.trace(W)))
    best, best_score = w, score_fn(w)
    for _ in range(num_candidates):
        g = (rng.standard_normal(W.shape[0])
             + 1j * rng.standard_normal(W.shape[0])) / math.sqrt(2.0)
        cand = root @ g
        nrm = np.linalg.norm(cand)
        if nrm == 0.0:
            continue
        cand = cand * math.sqrt(power) / nrm
        sc = score_fn(cand)
        if sc > best_score:
            best, best_score = cand, sc
    return best, ratio, "randomized"


# ---------------------------------------------------------------------------
# Problem (position step): SOCP in one antenna position
# ---------------------------------------------------------------------------

def build_position_program(m, apv, contexts, pi, anchors: SlackAnchors,
                           config, r_min: float, noise=None) -> ConicProblem:
    """One antenna's position subproblem at fixed beams and indicator.

    contexts[j][i] must hold the beam-j/user-i coupling constants for
    antenna m.  Variables: (x, y), a shared epigraph q of the squared step
    length, the rates, and the noise-normalized slack pairs.
    """
    apv = np.asarray(apv, dtype=float)
    pi = np.asarray(pi)
    K = pi.shape[0]
    noise = np.full(K, config.noise_power) if noise is None else np.asarray(noise)
    anchor = apv[m]
    pairs = anchors.pairs
    P = len(pairs)
    n = 3 + K + 2 * P
    ix_q = 2

    def ix_R(k):
        return 3 + k

    def ix_a(p):
        return 3 + K + p

    def ix_b(p):
        return 3 + K + P + p

    a_hat, b_hat = _normalized_anchors(anchors, noise, pairs)

    # noise-normalized values/gradients/curvatures of Gamma at the anchor
    gam0 = np.empty((K, K))
    gamg = np.empty((K, K, 2))
    gamc = np.empty((K, K))
    for j in range(K):
        for i in range(K):
            ctx = contexts[j][i]
            gam0[j, i] = frcalc.gamma_value(ctx, anchor) / noise[i]
            gamg[j, i] = frcalc.gamma_grad(ctx, anchor) / noise[i]
            gamc[j, i] = frcalc.gamma_curvature_bound(ctx, anchor) / noise[i]

    rows, rhs = [], []
    half = config.region_side / 2.0
    for sign, coord in ((1.0, 0), (-1.0, 0), (1.0, 1), (-1.0, 1)):
        row = np.zeros(n)
        row[coord] = sign
        rows.append(row)
        rhs.append(half)
    others = [apv[nn] for nn in range(apv.shape[0]) if nn != m]
    sp_rows, sp_rhs = _spacing_rows(anchor, others, config.min_spacing, n)
    rows += sp_rows
    rhs += sp_rhs
    for k in range(K):
        row = np.zeros(n)
        row[ix_R(k)] = -1.0
        rows.append(row)
        rhs.append(-r_min)
    for p, (k, i) in enumerate(pairs):
        val, ca, cb = frcalc.theta_coefficients(a_hat[p], b_hat[p])
        row = np.zeros(n)
        row[ix_R(k)] = 1.0
        row[ix_a(p)] = ca
        row[ix_b(p)] = cb
        rows.append(row)
        rhs.append(val + ca * a_hat[p] + cb * b_hat[p])
    # beta >= quadratic upper bound on normalized interference
    for p, (k, i) in enumerate(pairs):
        weights = np.ones(K)
        weights[: k + 1] -= pi[: k + 1, i]
        ups0 = float(weights @ gam0[:, i]) + 1.0
        upsg = np.einsum("j,jd->d", weights, gamg[:, i, :])
        psi = float(weights @ gamc[:, i])
        row = np.zeros(n)
        row[0:2] = upsg
        row[ix_q] = 0.5 * psi
        row[ix_b(p)] = -1.0
        rows.append(row)
        rhs.append(float(upsg @ anchor) - ups0)

    G = np.array(rows)
    h = np.array(rhs)
    cones = [(NONNEG, len(rows))]

    soc_G = [np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)]
    soc_G[0][ix_q] = -1.0
    soc_G[1][0] = -2.0
    soc_G[2][1] = -2.0
    soc_G[3][ix_q] = -1.0
    soc_h = [1.0, -2.0 * anchor[0], -2.0 * anchor[1], -1.0]
    G = np.vstack([G, np.array(soc_G)])
    h = np.concatenate([h, np.array(soc_h)])
    cones.append((SOC, 4))

    # alpha_p * Gamma_lb(u) >= 1 per active pair
    hyp_G, hyp_h = [], []
    for p, (k, i) in enumerate(pairs):
        av = np.zeros(n)
        av[0:2] = gamg[k, i]
        av[ix_q] = -0.5 * gamc[k, i]
        dv = gam0[k, i] - float(gamg[k, i] @ anchor)
        r0 = -av.copy()
        r0[ix_a(p)] -= 1.0
        r1 = np.zeros(n)
        r2 = av.copy()
        r2[ix_a(p)] -= 1.0
        hyp_G += [r0, r1, r2]
        hyp_h += [dv, 2.0, -dv]
        cones.append((SOC, 3))
    G = np.vstack([G, np.array(hyp_G)])
    h = np.concatenate([h, np.array(hyp_h)])

    c = np.zeros(n)
    for k in range(K):
        c[ix_R(k)] = 1.0
    return ConicProblem(c=c, G=G, h=h, cones=cones, name="position-step")
