"""Symmetric-cone block operations for the interior-point solver.

Each block supports the operations the predictor-corrector loop needs:
an identity element, Nesterov-Todd scaling, Jordan algebra products and
inverses, and maximum feasible step lengths.  PSD blocks work in svec
coordinates (off-diagonals scaled by sqrt(2)) so that inner products of
svec vectors equal trace inner products of the matrices.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .problem import NONNEG, PSD, SOC, svec_dim

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# svec/smat
# ---------------------------------------------------------------------------

def _tri_indices(order: int):
    return np.tril_indices(order)


def svec(S: np.ndarray) -> np.ndarray:
    """Lower-triangle stacking with sqrt(2) off-diagonal scaling."""
    order = S.shape[0]
    i, j = _tri_indices(order)
    v = S[i, j].astype(float).copy()
    v[i != j] *= _SQRT2
    return v


def smat(v: np.ndarray, order: int) -> np.ndarray:
    i, j = _tri_indices(order)
    S = np.zeros((order, order))
    w = np.asarray(v, dtype=float).copy()
    w[i != j] /= _SQRT2
    S[i, j] = w
    S[j, i] = w
    return S


def congruence_matrix(P: np.ndarray) -> np.ndarray:
    """Dense svec-coordinate matrix of the linear map X -> P^T X P."""
    order = P.shape[0]
    d = svec_dim(order)
    i, j = _tri_indices(order)
    cols = np.empty((d, d))
    for a in range(d):
        e = np.zeros(d)
        e[a] = 1.0
        E = smat(e, order)
        cols[:, a] = svec(P.T @ E @ P)
    return cols


# ---------------------------------------------------------------------------
# Cone blocks
# ---------------------------------------------------------------------------

class ScalingFailure(RuntimeError):
    """Loss of cone interiority during scaling computation."""


class NonnegBlock:
    kind = NONNEG

    def __init__(self, size: int):
        self.size = size
        self.dim = size
        self.degree = size

    def unit(self):
        return np.ones(self.dim)

    def max_step(self, v, dv):
        neg = dv < 0
        if not np.any(neg):
            return math.inf
        return float(np.min(-v[neg] / dv[neg]))

    def jordan(self, u, v):
        return u * v

    def jordan_solve(self, scaling, v):
        return v / scaling["lam"]

    def compute_scaling(self, s, z):
        if np.any(s <= 0) or np.any(z <= 0):
            raise ScalingFailure("orthant iterate left the interior")
        w = np.sqrt(s / z)
        return {"w": w, "lam": np.sqrt(s * z)}


class SocBlock:
    kind = SOC

    def __init__(self, size: int):
        assert size >= 2
        self.size = size
        self.dim = size
        self.degree = 1

    def unit(self):
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    @staticmethod
    def _resid(v):
        return v[0] ** 2 - float(v[1:] @ v[1:])

    def max_step(self, v, dv):
        # largest alpha with (v + alpha dv) in the cone
        a = self._resid(dv)
        b = 2.0 * (v[0] * dv[0] - float(v[1:] @ dv[1:]))
        c = self._resid(v)
        roots = []
        if abs(a) > 1e-300:
            disc = b * b - 4 * a * c
            if disc >= 0:
                sq = math.sqrt(disc)
                roots.extend([(-b - sq) / (2 * a), (-b + sq) / (2 * a)])
        elif abs(b) > 1e-300:
            roots.append(-c / b)
        pos = [r for r in roots if r > 1e-300]
        alpha = min(pos) if pos else math.inf
        if dv[0] < 0:
            alpha = min(alpha, -v[0] / dv[0])
        return float(alpha)

    def jordan(self, u, v):
        out = np.empty(self.dim)
        out[0] = float(u @ v)
        out[1:] = u[0] * v[1:] + v[0] * u[1:]
        return out

    def jordan_solve(self, scaling, v):
        lam = scaling["lam"]
        det = lam[0] ** 2 - float(lam[1:] @ lam[1:])
        u = np.empty(self.dim)
        u[0] = (lam[0] * v[0] - float(lam[1:] @ v[1:])) / det
        u[1:] = (v[1:] - u[0] * lam[1:]) / lam[0]
        return u

    def compute_scaling(self, s, z):
        rs = self._resid(s)
        rz = self._resid(z)
        if rs <= 0 or rz <= 0 or s[0] <= 0 or z[0] <= 0:
            raise ScalingFailure("second-order iterate left the interior")
        nrm_s, nrm_z = math.sqrt(rs), math.sqrt(rz)
        sb = s / nrm_s
        zb = z / nrm_z
        gamma = math.sqrt((1.0 + float(sb @ zb)) / 2.0)
        wb = np.empty(self.dim)
        wb[0] = (sb[0] + zb[0]) / (2 * gamma)
        wb[1:] = (sb[1:] - zb[1:]) / (2 * gamma)
        eta = math.sqrt(nrm_s / nrm_z)
        H = np.empty((self.dim, self.dim))
        H[0, 0] = wb[0]
        H[0, 1:] = wb[1:]
        H[1:, 0] = wb[1:]
        H[1:, 1:] = np.eye(self.dim - 1) + np.outer(wb[1:], wb[1:]) / (1.0 + wb[0])
        W = eta * H
        lam = W @ z
        return {"W": W, "lam": lam}


class PsdBlock:
    kind = PSD

    def __init__(self, order: int):
        self.order = order
        self.dim = svec_dim(order)
        self.degree = order

    def unit(self):
        return svec(np.eye(self.order))

    def max_step(self, v, dv):
        S = smat(v, self.order)
        dS = smat(dv, self.order)
        try:
            L = sla.cholesky(S, lower=True)
        except sla.LinAlgError:
            raise ScalingFailure("psd iterate left the interior")
        T = sla.solve_triangular(L, dS, lower=True)
        Md = sla.solve_triangular(L, T.T, lower=True)
        lam_min = float(np.min(sla.eigvalsh(0.5 * (Md + Md.T))))
        return math.inf if lam_min >= 0 else 1.0 / (-lam_min)

    def jordan(self, u, v):
        U = smat(u, self.order)
        V = smat(v, self.order)
        return svec(0.5 * (U @ V + V @ U))

    def jordan_solve(self, scaling, v):
        d = scaling["lam_diag"]
        V = smat(v, self.order)
        U = 2.0 * V / (d[:, None] + d[None, :])
        return svec(U)

    def compute_scaling(self, s, z):
        S = smat(s, self.order)
        Z = smat(z, self.order)
        try:
            Ls = sla.cholesky(S, lower=True)
            Lz = sla.cholesky(Z, lower=True)
        except sla.LinAlgError:
            raise ScalingFailure("psd iterate left the interior")
        U, sig, Vt = sla.svd(Lz.T @ Ls)
        if np.any(sig <= 0):
            raise ScalingFailure("degenerate NT scaling")
        isq = 1.0 / np.sqrt(sig)
        r = Ls @ (Vt.T * isq)
        rti = Lz @ (U * isq)
        W = congruence_matrix(r)           # svec map X -> r^T X r
        lam = svec(np.diag(sig))
        return {"r": r, "rti": rti, "W": W, "lam": lam, "lam_diag": sig}


def make_blocks(cones) -> list:
    blocks = []
    for kind, size in cones:
        if kind == NONNEG:
            blocks.append(NonnegBlock(size))
        elif kind == SOC:
            blocks.append(SocBlock(size))
        elif kind == PSD:
            blocks.append(PsdBlock(size))
        else:
            raise ValueError(f"unknown cone kind {kind}")
    return blocks
