"""Field-response channel model and random geometric channel generation.

The transmit array consists of M movable antennas confined to a square
region centered at the array reference point.  Each user's channel is a
superposition of L plane-wave paths; moving an antenna only changes the
per-path phases through the propagation path difference, so the channel
vector is a deterministic function of the antenna position vector (APV)
once the path angles and path-response vector (PRV) are drawn.

All quantities are linear (watts, meters, radians).  Unit conversions such
as dBm happen at the CLI boundary, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised when a system configuration violates a declared invariant."""


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters shared by every module.

    Powers are watts, distances meters, rates bits/s/Hz.  ``pathloss_ref``
    is the linear power gain at 1 m reference distance.
    """

    num_antennas: int = 4
    num_users: int = 6
    num_paths: int = 5
    wavelength: float = 0.1
    region_side: float = 0.3
    min_spacing: float = 0.05
    max_power: float = 0.01
    noise_power: float = 1e-11
    min_rate: float = 0.25
    pathloss_ref: float = 1e-3
    pathloss_exp: float = 2.8
    distance_range: tuple[float, float] = (50.0, 100.0)
    tol_stage_one: float = 1e-2
    tol_stage_two: float = 1e-2
    max_sweeps_stage_one: int = 100
    max_iters_stage_two: int = 50

    def validate(self) -> "SystemConfig":
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.num_antennas < 1:
            bad("num_antennas", "must be >= 1")
        if self.num_users < 1:
            bad("num_users", "must be >= 1")
        if self.num_paths < 1:
            bad("num_paths", "must be >= 1")
        if not self.wavelength > 0:
            bad("wavelength", "must be > 0")
        if not self.region_side > 0:
            bad("region_side", "must be > 0")
        if not self.min_spacing > 0:
            bad("min_spacing", "must be > 0")
        # Necessary packing bound: a grid with pitch D inside the region
        # holds at most ceil(A/D + 1)^2 points.
        cap = math.ceil(self.region_side / self.min_spacing + 1.0) ** 2
        if self.num_antennas > cap:
            bad(
                "num_antennas",
                f"region of side {self.region_side} cannot hold "
                f"{self.num_antennas} antennas with spacing "
                f">= {self.min_spacing} (packing bound {cap})",
            )
        if not self.max_power > 0:
            bad("max_power", "must be > 0")
        if not self.noise_power > 0:
            bad("noise_power", "must be > 0")
        if self.min_rate < 0:
            bad("min_rate", "must be >= 0")
        if not self.pathloss_ref > 0:
            bad("pathloss_ref", "must be > 0")
        d_lo, d_hi = self.distance_range
        if not (0 < d_lo <= d_hi):
            bad("distance_range", "need 0 < d_lo <= d_hi")
        if not self.tol_stage_one > 0:
            bad("tol_stage_one", "must be > 0")
        if not self.tol_stage_two > 0:
            bad("tol_stage_two", "must be > 0")
        if self.max_sweeps_stage_one < 1:
            bad("max_sweeps_stage_one", "must be >= 1")
        if self.max_iters_stage_two < 1:
            bad("max_iters_stage_two", "must be >= 1")
        return self


@dataclass
class ChannelRealization:
    """Random propagation environment for all K users.

    theta, phi : (K, L) elevation/azimuth departure angles in [0, pi].
    prv        : (K, L) complex path-response vectors.
    distances  : (K,) BS-to-user distances in meters.
    """

    theta: np.ndarray
    phi: np.ndarray
    prv: np.ndarray
    distances: np.ndarray

    @property
    def num_users(self) -> int:
        return self.theta.shape[0]

    @property
    def num_paths(self) -> int:
        return self.theta.shape[1]

    def reorder(self, order: np.ndarray) -> "ChannelRealization":
        """Return a copy with users permuted so new user k is old user order[k]."""
        idx = np.asarray(order, dtype=int)
        return ChannelRealization(
            theta=self.theta[idx].copy(),
            phi=self.phi[idx].copy(),
            prv=self.prv[idx].copy(),
            distances=self.distances[idx].copy(),
        )


def trial_rng(master_seed: int, trial_index: int = 0) -> np.random.Generator:
    """Per-trial RNG stream: the trial index is mixed into the master seed
    through a SeedSequence spawn key, so trials are independent and
    reproducible regardless of execution order."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    return np.random.default_rng(ss)


def sample_realization(config: SystemConfig, seed: int) -> ChannelRealization:
    """Draw one random channel realization.

    Angles are i.i.d. Uniform[0, pi], distances Uniform[d_lo, d_hi], and PRV
    entries circularly-symmetric complex Gaussian with per-entry variance
    pathloss_ref * d^(-pathloss_exp) / L.  Deterministic given the seed.
    """
    rng = trial_rng(seed)
    K, L = config.num_users, config.num_paths
    theta = rng.uniform(0.0, math.pi, size=(K, L))
    phi = rng.uniform(0.0, math.pi, size=(K, L))
    d_lo, d_hi = config.distance_range
    distances = rng.uniform(d_lo, d_hi, size=K)
    var = config.pathloss_ref * distances**(-config.pathloss_exp) / L  # (K,)
    scale = np.sqrt(var / 2.0)[:, None]
    prv = scale * (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L)))
    return ChannelRealization(theta=theta, phi=phi, prv=prv.astype(np.complex128),
                              distances=distances)


# ---------------------------------------------------------------------------
# Deterministic channel geometry
# ---------------------------------------------------------------------------

def path_difference(u, theta, phi):
    """Propagation path difference of position u relative to the reference
    point: x*sin(theta)*cos(phi) + y*cos(theta).  Broadcasts over angle
    arrays."""
    u = np.asarray(u, dtype=float)
    return u[..., 0] * np.sin(theta) * np.cos(phi) + u[..., 1] * np.cos(theta)


def frv(u, theta, phi, wavelength: float) -> np.ndarray:
    """Transmit field-response vector at position u for one user: unit-modulus
    entries with phases (2*pi/lambda) * path_difference per path."""
    rho = path_difference(u, theta, phi)
    return np.exp(1j * (TWO_PI / wavelength) * rho)


def channel_vector(apv, theta, phi, f, wavelength: float) -> np.ndarray:
    """Channel vector h of one user: entry m is g(u_m)^H f."""
    apv = np.atleast_2d(np.asarray(apv, dtype=float))
    # g[m, l] = exp(j*2pi/lam * rho_l(u_m))
    rho = path_difference(apv[:, None, :], theta[None, :], phi[None, :])
    g = np.exp(1j * (TWO_PI / wavelength) * rho)
    return g.conj() @ f


def channel_gain(apv, theta, phi, f, wavelength: float) -> float:
    """Squared Euclidean norm of the channel vector, ||h(apv)||^2."""
    h = channel_vector(apv, theta, phi, f, wavelength)
    return float(np.vdot(h, h).real)


def channel_matrix(apv, realization: ChannelRealization, wavelength: float) -> np.ndarray:
    """(K, M) matrix whose row k is user k's channel vector."""
    return np.stack([
        channel_vector(apv, realization.theta[k], realization.phi[k],
                       realization.prv[k], wavelength)
        for k in range(realization.num_users)
    ])


def total_gain(apv, realization: ChannelRealization, wavelength: float) -> float:
    """Sum of all users' channel gains at the given APV."""
    h = channel_matrix(apv, realization, wavelength)
    return float(np.sum(np.abs(h) ** 2))


# ---------------------------------------------------------------------------
# Antenna position vector helpers
# ---------------------------------------------------------------------------

def in_region(apv, region_side: float, tol: float = 0.0) -> bool:
    """True if every position lies in the centered square [-A/2, A/2]^2."""
    apv = np.atleast_2d(apv)
    half = region_side / 2.0 + tol
    return bool(np.all(np.abs(apv) <= half))


def min_pair_distance(apv) -> float:
    """Smallest pairwise distance; +inf for a single antenna."""
    apv = np.atleast_2d(apv)
    m = apv.shape[0]
    if m < 2:
        return math.inf
    diff = apv[:, None, :] - apv[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    return float(np.min(dist[np.triu_indices(m, k=1)]))


def spacing_ok(apv, min_spacing: float, tol: float = 0.0) -> bool:
    return min_pair_distance(apv) >= min_spacing - tol


def apv_feasible(apv, config: SystemConfig, tol: float = 1e-9) -> bool:
    return in_region(apv, config.region_side, tol) and spacing_ok(apv, config.min_spacing, tol)


def sample_feasible_apv(config: SystemConfig, rng: np.random.Generator,
                        max_attempts: int = 10_000) -> np.ndarray:
    """Feasible random APV by rejection sampling; falls back to a spaced grid
    subset if the sampler cannot place all antennas."""
    M = config.num_antennas
    half = config.region_side / 2.0
    D = config.min_spacing
    placed = []
    attempts = 0
    while len(placed) < M and attempts < max_attempts:
        cand = rng.uniform(-half, half, size=2)
        attempts += 1
        if all(np.hypot(*(cand - p)) >= D for p in placed):
            placed.append(cand)
    if len(placed) == M:
        return np.array(placed)
    # Fallback: half-wavelength grid clipped to the region, first M nodes.
    pitch = max(D, config.wavelength / 2.0)
    n = int(math.floor(config.region_side / pitch)) + 1
    xs = (np.arange(n) - (n - 1) / 2.0) * pitch
    grid = np.array([(x, y) for y in xs for x in xs])
    if grid.shape[0] < M:
        raise ConfigError("num_antennas: region cannot hold a feasible layout")
    return grid[:M].copy()
