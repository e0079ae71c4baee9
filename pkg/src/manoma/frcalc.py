"""Closed-form values, gradients, Hessians and curvature bounds of the
position-dependent channel terms, plus the anchored quadratic surrogates used
by the successive convex approximation steps.

Two families of functions of a single antenna position u = (x, y):

* the per-position total channel gain  Phi(u) = sum_k |g_k(u)^H f_k|^2, and
* the beam/user coupling  Gamma(u)    = |h_i(apv)^H w_k|^2  seen as a
  function of antenna m's position with the other antennas frozen.

Both are finite trigonometric sums, so first and second derivatives are
available in closed form.  Curvature bounds are Frobenius norms of the 2x2
Hessians, recomputed at every anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import TWO_PI, frv, path_difference

LOG2E = math.log2(math.e)


# ---------------------------------------------------------------------------
# Phi: total channel gain as a function of one antenna position
# ---------------------------------------------------------------------------

@dataclass
class PhiContext:
    """Precomputed trigonometric tables for Phi and its derivatives.

    amp/ph0 hold modulus and phase of the per-user PRV outer products
    A_k = f_k f_k^H; dax/day hold the per-path-pair direction coefficient
    differences that multiply x and y inside the cosine arguments.
    """

    wavelength: float
    amp: np.ndarray   # (K, L, L) |A_k|
    ph0: np.ndarray   # (K, L, L) arg(A_k)
    dax: np.ndarray   # (K, L, L) -a_{l1} + a_{l2}, a = sin(theta)cos(phi)
    day: np.ndarray   # (K, L, L) -b_{l1} + b_{l2}, b = cos(theta)

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength


def build_phi_context(theta, phi, prv, wavelength: float) -> PhiContext:
    theta = np.atleast_2d(theta)
    phi = np.atleast_2d(phi)
    prv = np.atleast_2d(prv)
    outer = prv[:, :, None] * prv.conj()[:, None, :]   # (K, L, L), A_k
    hermit = np.max(np.abs(outer - outer.conj().transpose(0, 2, 1)))
    assert hermit < 1e-12, "PRV outer products must be Hermitian"
    a = np.sin(theta) * np.cos(phi)
    b = np.cos(theta)
    dax = -a[:, :, None] + a[:, None, :]
    day = -b[:, :, None] + b[:, None, :]
    return PhiContext(wavelength=wavelength, amp=np.abs(outer),
                      ph0=np.angle(outer), dax=dax, day=day)


def _phi_angles(ctx: PhiContext, u) -> np.ndarray:
    x, y = float(u[0]), float(u[1])
    return ctx.ph0 + ctx.wavenumber * (ctx.dax * x + ctx.day * y)


def phi_value(ctx: PhiContext, u) -> float:
    return float(np.sum(ctx.amp * np.cos(_phi_angles(ctx, u))))


def phi_grad(ctx: PhiContext, u) -> np.ndarray:
    s = ctx.amp * np.sin(_phi_angles(ctx, u))
    k = ctx.wavenumber
    return np.array([-k * np.sum(s * ctx.dax), -k * np.sum(s * ctx.day)])


def phi_hess(ctx: PhiContext, u) -> np.ndarray:
    c = ctx.amp * np.cos(_phi_angles(ctx, u))
    k2 = ctx.wavenumber ** 2
    hxx = -k2 * np.sum(c * ctx.dax**2)
    hxy = -k2 * np.sum(c * ctx.dax * ctx.day)
    hyy = -k2 * np.sum(c * ctx.day**2)
    return np.array([[hxx, hxy], [hxy, hyy]])


def phi_curvature_bound(ctx: PhiContext, u) -> float:
    """Frobenius norm of the Hessian; dominates its largest eigenvalue."""
    return float(np.linalg.norm(phi_hess(ctx, u), "fro"))


# ---------------------------------------------------------------------------
# Gamma: beam/user coupling as a function of one antenna position
# ---------------------------------------------------------------------------

@dataclass
class GammaContext:
    """Constants of Gamma(u) = |f_i^H g_i(u) w_{k,m} + zeta|^2 for a fixed
    (beam k, user i, antenna m) triple.

    The quadratic part comes from B = |w_{k,m}|^2 f_i f_i^H, the linear part
    from c = 2 conj(w_{k,m}) zeta f_i, and zeta collects the contribution of
    the frozen antennas n != m.
    """

    wavelength: float
    ampB: np.ndarray   # (L, L)
    phB: np.ndarray    # (L, L)
    dax: np.ndarray    # (L, L)
    day: np.ndarray    # (L, L)
    ampc: np.ndarray   # (L,)
    phc: np.ndarray    # (L,)
    a: np.ndarray      # (L,) sin(theta)cos(phi) of user i
    b: np.ndarray      # (L,) cos(theta) of user i
    zeta_sq: float

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength


def build_gamma_context(w_set, apv, m: int, k: int, i: int,
                        theta, phi, prv, wavelength: float) -> GammaContext:
    """Assemble the Gamma constants for beam k observed by user i as a
    function of antenna m, freezing the remaining antenna positions."""
    apv = np.atleast_2d(apv)
    M = apv.shape[0]
    if not 0 <= m < M:
        raise ValueError(f"antenna index {m} outside 0..{M - 1}")
    w_k = np.asarray(w_set)[k]
    f_i = np.asarray(prv)[i]
    th_i = np.asarray(theta)[i]
    ph_i = np.asarray(phi)[i]
    # zeta = sum_{n != m} f_i^H g_i(u_n) w_{k,n}
    zeta = 0.0 + 0.0j
    for n in range(M):
        if n == m:
            continue
        g = frv(apv[n], th_i, ph_i, wavelength)
        zeta += np.vdot(f_i, g) * w_k[n]
    B = (abs(w_k[m]) ** 2) * (f_i[:, None] * f_i.conj()[None, :])
    c = 2.0 * np.conj(w_k[m]) * zeta * f_i
    a = np.sin(th_i) * np.cos(ph_i)
    b = np.cos(th_i)
    return GammaContext(
        wavelength=wavelength,
        ampB=np.abs(B), phB=np.angle(B),
        dax=-a[:, None] + a[None, :], day=-b[:, None] + b[None, :],
        ampc=np.abs(c), phc=np.angle(c),
        a=a, b=b, zeta_sq=float(abs(zeta) ** 2),
    )


def _gamma_angles(ctx: GammaContext, u):
    x, y = float(u[0]), float(u[1])
    kw = ctx.wavenumber
    angB = ctx.phB + kw * (ctx.dax * x + ctx.day * y)
    # kappa_l = -arg(c_l) + (2 pi / lambda) rho_l(u)
    angc = -ctx.phc + kw * (ctx.a * x + ctx.b * y)
    return angB, angc


def gamma_value(ctx: GammaContext, u) -> float:
    angB, angc = _gamma_angles(ctx, u)
    val = np.sum(ctx.ampB * np.cos(angB)) + np.sum(ctx.ampc * np.cos(angc)) + ctx.zeta_sq
    return float(val)


def gamma_grad(ctx: GammaContext, u) -> np.ndarray:
    angB, angc = _gamma_angles(ctx, u)
    kw = ctx.wavenumber
    sB = ctx.ampB * np.sin(angB)
    sc = ctx.ampc * np.sin(angc)
    gx = -kw * (np.sum(sB * ctx.dax) + np.sum(sc * ctx.a))
    gy = -kw * (np.sum(sB * ctx.day) + np.sum(sc * ctx.b))
    return np.array([gx, gy])


def gamma_hess(ctx: GammaContext, u) -> np.ndarray:
    angB, angc = _gamma_angles(ctx, u)
    k2 = ctx.wavenumber ** 2
    cB = ctx.ampB * np.cos(angB)
    cc = ctx.ampc * np.cos(angc)
    hxx = -k2 * (np.sum(cB * ctx.dax**2) + np.sum(cc * ctx.a**2))
    hxy = -k2 * (np.sum(cB * ctx.dax * ctx.day) + np.sum(cc * ctx.a * ctx.b))
    hyy = -k2 * (np.sum(cB * ctx.day**2) + np.sum(cc * ctx.b**2))
    return np.array([[hxx, hxy], [hxy, hyy]])


def gamma_curvature_bound(ctx: GammaContext, u) -> float:
    return float(np.linalg.norm(gamma_hess(ctx, u), "fro"))


# ---------------------------------------------------------------------------
# Upsilon: interference-plus-noise seen by user i while decoding message k
# ---------------------------------------------------------------------------

def _upsilon_weights(pi, k: int, i: int) -> np.ndarray:
    """Weight of Gamma(j, i) inside Upsilon(k, i): 1 for not-yet-cancelled
    beams, 0 for beams j <= k with pi[j, i] = 1."""
    pi = np.asarray(pi)
    K = pi.shape[0]
    w = np.ones(K)
    w[: k + 1] -= pi[: k + 1, i]
    return w


def upsilon_value(contexts, pi, k: int, i: int, u, noise_power: float) -> float:
    w = _upsilon_weights(pi, k, i)
    return float(sum(w[j] * gamma_value(contexts[j], u) for j in range(len(w)))
                 + noise_power)


def upsilon_grad(contexts, pi, k: int, i: int, u) -> np.ndarray:
    """Gradient of Upsilon(k, i) at u: weighted sum of the Gamma gradients of
    every beam, dropping the beams already cancelled at user i."""
    w = _upsilon_weights(pi, k, i)
    g = np.zeros(2)
    for j in range(len(w)):
        if w[j] != 0.0:
            g += w[j] * gamma_grad(contexts[j], u)
    return g


def upsilon_curvature(gamma_bounds, pi, k: int, i: int) -> float:
    """Curvature bound for Upsilon(k, i): sum of the per-beam Gamma bounds
    over the non-cancelled beams."""
    w = _upsilon_weights(pi, k, i)
    return float(np.dot(w, np.asarray(gamma_bounds)))


# ---------------------------------------------------------------------------
# Anchored quadratic surrogates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticSurrogate:
    """value0 + grad.(u - anchor) -/+ (curvature/2)||u - anchor||^2.

    sense 'lb' subtracts the quadratic (concave minorant), 'ub' adds it
    (convex majorant).  Exact at the anchor by construction.
    """

    anchor: np.ndarray
    value0: float
    grad: np.ndarray
    curvature: float
    sense: str

    def __post_init__(self):
        assert self.sense in ("lb", "ub")
        assert self.curvature >= 0.0

    def evaluate(self, u) -> float:
        d = np.asarray(u, dtype=float) - self.anchor
        quad = 0.5 * self.curvature * float(d @ d)
        lin = self.value0 + float(self.grad @ d)
        return lin - quad if self.sense == "lb" else lin + quad


def surrogate_phi_lb(ctx: PhiContext, anchor) -> QuadraticSurrogate:
    anchor = np.asarray(anchor, dtype=float)
    return QuadraticSurrogate(anchor, phi_value(ctx, anchor), phi_grad(ctx, anchor),
                              phi_curvature_bound(ctx, anchor), "lb")


def surrogate_gamma_lb(ctx: GammaContext, anchor) -> QuadraticSurrogate:
    anchor = np.asarray(anchor, dtype=float)
    return QuadraticSurrogate(anchor, gamma_value(ctx, anchor), gamma_grad(ctx, anchor),
                              gamma_curvature_bound(ctx, anchor), "lb")


def surrogate_upsilon_ub(contexts, pi, k: int, i: int, anchor,
                         noise_power: float) -> QuadraticSurrogate:
    anchor = np.asarray(anchor, dtype=float)
    bounds = [gamma_curvature_bound(c, anchor) for c in contexts]
    return QuadraticSurrogate(
        anchor,
        upsilon_value(contexts, pi, k, i, anchor, noise_power),
        upsilon_grad(contexts, pi, k, i, anchor),
        upsilon_curvature(bounds, pi, k, i),
        "ub",
    )


def surrogate_distance_lb(anchor, other) -> QuadraticSurrogate:
    """First-order minorant of ||u - u_n||^2 around the anchor (exact
    linearization of a convex quadratic, so curvature is zero)."""
    anchor = np.asarray(anchor, dtype=float)
    other = np.asarray(other, dtype=float)
    d = anchor - other
    return QuadraticSurrogate(anchor, float(d @ d), 2.0 * d, 0.0, "lb")


def theta_coefficients(alpha_t: float, beta_t: float):
    """Linearization of log2(1 + 1/(alpha*beta)) at a positive anchor:
    returns (value_at_anchor, slope_alpha, slope_beta), both slopes >= 0 and
    entering with a minus sign."""
    if not (alpha_t > 0 and beta_t > 0):
        raise ValueError("surrogate anchors must be strictly positive")
    val = math.log2(1.0 + 1.0 / (alpha_t * beta_t))
    ca = LOG2E / (alpha_t + alpha_t**2 * beta_t)
    cb = LOG2E / (beta_t + beta_t**2 * alpha_t)
    return val, ca, cb


def rate_surrogate_theta(alpha: float, beta: float,
                         alpha_t: float, beta_t: float) -> float:
    """Linear lower bound on log2(1 + 1/(alpha*beta)) anchored at
    (alpha_t, beta_t); exact at the anchor."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("rate surrogate requires positive arguments")
    val, ca, cb = theta_coefficients(alpha_t, beta_t)
    return val - ca * (alpha - alpha_t) - cb * (beta - beta_t)
