"""Dense primal-dual interior-point solver over symmetric cones.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step.  Internally minimizes -c.x; the public result is
reported in the problem's maximization sense.  Problem sizes here are tiny
(a few hundred scalar variables), so every linear-algebra object is dense
and the per-iteration KKT system is reduced to an (n + p) x (n + p) solve.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .cones import ScalingFailure, make_blocks
from .problem import ConicProblem, ConicSolution, cone_dim


class _Partition:
    """Slicing helper mapping block-structured vectors to cone blocks."""

    def __init__(self, blocks):
        self.blocks = blocks
        self.slices = []
        off = 0
        for blk in blocks:
            self.slices.append(slice(off, off + blk.dim))
            off += blk.dim
        self.dim = off

    def each(self, v):
        for blk, sl in zip(self.blocks, self.slices):
            yield blk, v[sl]

    def map_blockwise(self, fn, *vecs):
        out = np.empty(self.dim)
        for blk, sl in zip(self.blocks, self.slices):
            out[sl] = fn(blk, *[v[sl] for v in vecs])
        return out

    def max_step(self, v, dv):
        alpha = math.inf
        for blk, sl in zip(self.blocks, self.slices):
            alpha = min(alpha, blk.max_step(v[sl], dv[sl]))
        return alpha


class _KKT:
    """One factorization of the NT-scaled KKT system.

    The cone rows are pre-scaled by W^{-T}, which keeps the condition number
    of the factored matrix at the square root of the normal-equations form;
    a small static regularization plus iterative refinement against the
    unregularized matrix recovers full accuracy near the central path's end.
    """

    def __init__(self, G, A, scalings, part):
        self.part = part
        n = G.shape[1]
        p = A.shape[0]
        m = part.dim
        self.n, self.p, self.m = n, p, m
        # dense W and W^{-T} per block (diagonal vectors for the orthant)
        self.Wmat = []
        self.Wtimat = []
        Gs = np.empty_like(G)
        for (blk, sl), sc in zip(zip(part.blocks, part.slices), scalings):
            if blk.kind == "nn":
                w = sc["w"]
                self.Wmat.append(w)
                self.Wtimat.append(1.0 / w)
                Gs[sl] = G[sl] / w[:, None]
            else:
                Wm = _dense_W(blk, sc)
                Wti = _dense_Wt_inv(blk, sc)
                self.Wmat.append(Wm)
                self.Wtimat.append(Wti)
                Gs[sl] = Wti @ G[sl]
        self.Gs = Gs
        self.A = A
        N = n + p + m
        K = np.zeros((N, N))
        K[:n, n:n + p] = A.T
        K[n:n + p, :n] = A
        K[:n, n + p:] = Gs.T
        K[n + p:, :n] = Gs
        K[n + p:, n + p:] = -np.eye(m)
        delta = 1e-8
        reg = np.concatenate([np.full(n, delta), np.full(p, -delta),
                              np.full(m, -delta)])
        self.K = K
        self.factor = sla.lu_factor(K + np.diag(reg))

    def apply_Wt_inv(self, v):
        out = np.empty_like(v)
        for Wt, sl in zip(self.Wtimat, self.part.slices):
            out[sl] = Wt * v[sl] if Wt.ndim == 1 else Wt @ v[sl]
        return out

    def apply_W(self, v):
        out = np.empty_like(v)
        for Wm, sl in zip(self.Wmat, self.part.slices):
            out[sl] = Wm * v[sl] if Wm.ndim == 1 else Wm @ v[sl]
        return out

    def apply_W_inv(self, v):
        out = np.empty_like(v)
        for Wt, sl in zip(self.Wtimat, self.part.slices):
            out[sl] = Wt * v[sl] if Wt.ndim == 1 else Wt.T @ v[sl]
        return out

    def apply_Wt(self, v):
        out = np.empty_like(v)
        for Wm, sl in zip(self.Wmat, self.part.slices):
            out[sl] = Wm * v[sl] if Wm.ndim == 1 else Wm.T @ v[sl]
        return out

    def solve(self, r1, r2, r3, refine: int = 6):
        """Solve the scaled symmetric system
           [0    A^T  Gs^T] [dx]    [r1]
           [A    0    0   ] [dy]  = [r2]
           [Gs   0   -I   ] [dzs]   [Wti r3]
        returning (dx, dy, dz) with dz unscaled.  Iterative refinement runs
        against the unregularized matrix until it stalls."""
        rhs = np.concatenate([r1, r2, self.apply_Wt_inv(r3)])
        rhs_norm = max(1.0, np.linalg.norm(rhs))
        sol = sla.lu_solve(self.factor, rhs)
        best = sol
        best_err = np.linalg.norm(rhs - self.K @ sol)
        for _ in range(refine):
            if best_err <= 1e-14 * rhs_norm:
                break
            err = rhs - self.K @ sol
            sol = sol + sla.lu_solve(self.factor, err)
            err_norm = np.linalg.norm(rhs - self.K @ sol)
            if err_norm >= best_err:
                break
            best, best_err = sol, err_norm
        n, p = self.n, self.p
        dx, dy, dzs = best[:n], best[n:n + p], best[n + p:]
        return dx, dy, self.apply_W_inv(dzs)


def _dense_W(blk, sc):
    return sc["W"]


def _dense_Wt_inv(blk, sc):
    if blk.kind == "psd":
        from .cones import congruence_matrix
        return congruence_matrix(sc["rti"])
    return np.linalg.inv(sc["W"].T)


def _equilibrate(G, h, A, b, c, cones, rounds: int = 10):
    """Ruiz row/column equilibration.

    Second-order and PSD blocks take one scalar per block so cone membership
    is preserved; orthant rows scale individually.  Returns the scaled data
    plus the diagonal scalings needed to map iterates back."""
    m, n = G.shape
    p = A.shape[0]
    groups = []
    off = 0
    for kind, size in cones:
        d = cone_dim(kind, size)
        if kind == "nn":
            groups.extend(slice(off + i, off + i + 1) for i in range(d))
        else:
            groups.append(slice(off, off + d))
        off += d
    D = np.ones(m)
    DA = np.ones(p)
    E = np.ones(n)
    Gs = G.copy()
    As = A.copy()
    for _ in range(rounds):
        for sl in groups:
            r = np.abs(Gs[sl]).max() if Gs[sl].size else 0.0
            if r > 0:
                f = 1.0 / math.sqrt(r)
                D[sl] *= f
                Gs[sl] *= f
        if p:
            r = np.abs(As).max(axis=1)
            f = np.where(r > 0, 1.0 / np.sqrt(np.maximum(r, 1e-300)), 1.0)
            DA *= f
            As *= f[:, None]
        cmax = np.abs(Gs).max(axis=0) if m else np.zeros(n)
        if p:
            cmax = np.maximum(cmax, np.abs(As).max(axis=0))
        f = np.where(cmax > 0, 1.0 / np.sqrt(np.maximum(cmax, 1e-300)), 1.0)
        E *= f
        Gs *= f[None, :]
        if p:
            As *= f[None, :]
    cE = c * E
    sigma = max(1.0, float(np.abs(cE).max()) if n else 1.0)
    return Gs, D * h, As, DA * b, cE / sigma, D, DA, E, sigma


def solve_conic(problem: ConicProblem, feas_tol: float = 1e-7,
                gap_tol: float = 1e-7, max_iters: int = 100,
                verbose: bool = False) -> ConicSolution:
    """Solve a conic problem; deterministic for fixed inputs.

    The Newton machinery runs on Ruiz-equilibrated data; convergence,
    certificates and every reported residual are evaluated against the
    original problem data."""
    problem.validate()
    c_o = -problem.c        # internal minimization, original units
    G_o, h_o = problem.G, problem.h
    A_o, b_o = problem.A, problem.b
    n = problem.num_vars
    blocks = make_blocks(problem.cones)
    part = _Partition(blocks)
    m = part.dim

    G, h, A, b, c, D, DA, E, sigma = _equilibrate(
        G_o, h_o, A_o, b_o, c_o, problem.cones)

    x = np.zeros(n)
    y = np.zeros(A.shape[0])
    s = np.concatenate([blk.unit() for blk in blocks]) if m else np.zeros(0)
    z = s.copy()
    tau, kappa = 1.0, 1.0
    nu = sum(blk.degree for blk in blocks) + 1

    norm_bh = 1.0 + math.hypot(np.linalg.norm(b_o), np.linalg.norm(h_o))
    norm_c = 1.0 + np.linalg.norm(c_o)

    def unscale():
        # original-space iterate (still in HSD ray coordinates)
        return E * x, sigma * (DA * y), sigma * (D * z), s / D

    def finish(status, msg="", iters=0, metrics=None):
        metrics = metrics or {}
        obj = np.nan
        xs = ys = zs = ss = None
        x_o, y_o, z_o, s_o = unscale()
        if status in ("optimal", "max-iter", "numerical-failure") and tau > 1e-300:
            xs, ys, zs, ss = x_o / tau, y_o / tau, z_o / tau, s_o / tau
            obj = problem.c @ xs + problem.obj_offset
            if status != "optimal":
                obj = float(obj)
        elif status in ("infeasible", "unbounded"):
            scale = metrics.get("cert_scale", 1.0)
            xs, ys, zs, ss = x_o * scale, y_o * scale, z_o * scale, s_o * scale
        return ConicSolution(
            status=status, x=xs, y=ys, z=zs, s=ss, objective=obj,
            primal_residual=metrics.get("pres", np.nan),
            dual_residual=metrics.get("dres", np.nan),
            gap=metrics.get("gap", np.nan), rel_gap=metrics.get("relgap", np.nan),
            iterations=iters, message=msg)

    stalled = 0
    metrics = {}
    best = None  # (score, iterate tuple, metrics) of the best point seen

    def remember(score, mets):
        nonlocal best
        if best is None or score < best[0]:
            best = (score, (x.copy(), y.copy(), z.copy(), s.copy(), tau, kappa),
                    dict(mets))

    def restore_best():
        nonlocal x, y, z, s, tau, kappa
        if best is None:
            return metrics
        x, y, z, s, tau, kappa = best[1]
        return best[2]

    for it in range(max_iters):
        # residuals of the scaled self-dual system drive the Newton steps
        res_x = A.T @ y + G.T @ z + c * tau
        res_y = -A @ x + b * tau
        res_z = -G @ x + h * tau - s
        res_tau = -c @ x - b @ y - h @ z - kappa

        # convergence accounting happens on the original data
        x_o, y_o, z_o, s_o = unscale()
        pcost = (c_o @ x_o) / tau
        gap = float(s_o @ z_o) / tau**2
        relgap = gap / max(1.0, abs(pcost))
        pres = math.hypot(np.linalg.norm(A_o @ x_o - b_o * tau),
                          np.linalg.norm(G_o @ x_o + s_o - h_o * tau)) / tau / norm_bh
        dres = np.linalg.norm(A_o.T @ y_o + G_o.T @ z_o + c_o * tau) / tau / norm_c
        metrics = {"pres": pres, "dres": dres, "gap": gap, "relgap": relgap}
        if verbose:
            print(f"iter {it:3d} pcost {-pcost:+.6e} gap {gap:.2e} "
                  f"pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}")

        score = max(pres / feas_tol, dres / feas_tol, relgap / gap_tol)
        remember(score, metrics)
        if score <= 1.0:
            return finish("optimal", iters=it, metrics=metrics)

        # certificates of primal infeasibility / unboundedness
        by_hz = b_o @ y_o + h_o @ z_o
        if by_hz < 0:
            cert = np.linalg.norm(A_o.T @ y_o + G_o.T @ z_o) / (-by_hz) / norm_c
            if cert <= feas_tol:
                metrics["cert_scale"] = 1.0 / (-by_hz)
                return finish("infeasible", f"Farkas certificate residual {cert:.2e}",
                              it, metrics)
        cx = c_o @ x_o
        if cx < 0:
            cert = math.hypot(np.linalg.norm(A_o @ x_o),
                              np.linalg.norm(G_o @ x_o + s_o)) / (-cx) / norm_bh
            if cert <= feas_tol:
                metrics["cert_scale"] = 1.0 / (-cx)
                return finish("unbounded", f"ray certificate residual {cert:.2e}",
                              it, metrics)

        mu = (float(s @ z) + tau * kappa) / nu

        try:
            scalings = [blk.compute_scaling(s[sl], z[sl])
                        for blk, sl in zip(blocks, part.slices)]
            kkt = _KKT(G, A, scalings, part)
        except (ScalingFailure, sla.LinAlgError, ValueError) as exc:
            metrics = restore_best()
            return finish("numerical-failure", f"scaling/factorization failed: {exc}",
                          it, metrics)

        lam = np.concatenate([sc["lam"] for sc in scalings]) if m else np.zeros(0)

        dx1, dy1, dz1 = kkt.solve(-c, b, h)
        denom_static = kappa / tau - (c @ dx1 + b @ dy1 + h @ dz1)

        def direction(weight, dst, dtk):
            lam_inv = _jordan_solve_all(part, scalings, dst)
            wt_lam_inv = kkt.apply_Wt(lam_inv)
            dx2, dy2, dz2 = kkt.solve(-weight * res_x, weight * res_y,
                                      weight * res_z - wt_lam_inv)
            num = -weight * res_tau + dtk / tau + c @ dx2 + b @ dy2 + h @ dz2
            dtau = num / denom_static
            dx_ = dx2 + dtau * dx1
            dy_ = dy2 + dtau * dy1
            dz_ = dz2 + dtau * dz1
            ds_ = kkt.apply_Wt(lam_inv - kkt.apply_W(dz_))
            dkappa = (dtk - kappa * dtau) / tau
            return dx_, dy_, dz_, ds_, dtau, dkappa

        # predictor
        lam_lam = _jordan_all(part, lam, lam)
        dst_aff = -lam_lam
        dxa, dya, dza, dsa, dta, dka = direction(1.0, dst_aff, -tau * kappa)
        alpha_aff = _step_length(part, s, dsa, z, dza, tau, dta, kappa, dka)
        alpha_aff = min(1.0, alpha_aff)
        mu_aff = (float((s + alpha_aff * dsa) @ (z + alpha_aff * dza))
                  + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        Wdz = kkt.apply_W(dza)
        Wtids = kkt.apply_Wt_inv(dsa)
        corr = _jordan_all(part, Wtids, Wdz)
        e = np.concatenate([blk.unit() for blk in blocks]) if m else np.zeros(0)
        dst = -lam_lam - corr + sigma * mu * e
        dtk = -tau * kappa - dta * dka + sigma * mu
        dx_, dy_, dz_, ds_, dtau, dkappa = direction(1.0 - sigma, dst, dtk)

        alpha = _step_length(part, s, ds_, z, dz_, tau, dtau, kappa, dkappa)
        alpha = min(1.0, 0.99 * alpha)
        if alpha < 1e-9:
            stalled += 1
            if stalled >= 2:
                metrics = restore_best()
                return finish("numerical-failure", "step length collapsed", it, metrics)
        else:
            stalled = 0

        x = x + alpha * dx_
        y = y + alpha * dy_
        z = z + alpha * dz_
        s = s + alpha * ds_
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not np.isfinite(tau) or not np.isfinite(kappa) or tau <= 0 or kappa < 0 \
                or not np.all(np.isfinite(x)):
            metrics = restore_best()
            return finish("numerical-failure", "iterate diverged", it, metrics)

    metrics = restore_best()
    return finish("max-iter", "iteration limit reached", max_iters, metrics)


# -- blockwise helpers -------------------------------------------------------

def _jordan_all(part, u, v):
    return part.map_blockwise(lambda blk, a, b_: blk.jordan(a, b_), u, v)


def _jordan_solve_all(part, scalings, v):
    out = np.empty(part.dim)
    for (blk, sl), sc in zip(zip(part.blocks, part.slices), scalings):
        out[sl] = blk.jordan_solve(sc, v[sl])
    return out


def _step_length(part, s, ds, z, dz, tau, dtau, kappa, dkappa):
    alpha = part.max_step(s, ds) if part.dim else math.inf
    alpha = min(alpha, part.max_step(z, dz) if part.dim else math.inf)
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha
