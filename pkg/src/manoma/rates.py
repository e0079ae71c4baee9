"""SINR and achievable-rate evaluation under adaptive SIC decoding.

Users are assumed to be indexed in decoding order (user k is the k-th
decoded).  The decoding indicator matrix ``pi`` is a K x K binary upper
triangular matrix with unit diagonal: pi[k, i] = 1 means the i-th decoded
user decodes (and cancels) the k-th decoded user's signal.

While user i decodes message k, only messages j <= k with pi[j, i] = 1 have
been cancelled; everything else is interference.  All SINRs are evaluated in
linear power units and rates in log2.
"""

from __future__ import annotations

import numpy as np


def identity_indicator(num_users: int) -> np.ndarray:
    """No cross decoding: every user decodes only its own signal."""
    return np.eye(num_users, dtype=np.int8)


def full_indicator(num_users: int) -> np.ndarray:
    """Conventional fixed SIC: all-ones upper triangle."""
    return np.triu(np.ones((num_users, num_users), dtype=np.int8))


def validate_indicator(pi: np.ndarray) -> None:
    pi = np.asarray(pi)
    K = pi.shape[0]
    if pi.shape != (K, K):
        raise ValueError("indicator matrix must be square")
    if not np.all(np.diag(pi) == 1):
        raise ValueError("indicator matrix must have a unit diagonal")
    if np.any(pi[np.tril_indices(K, k=-1)] != 0):
        raise ValueError("indicator matrix must be upper triangular")
    if not np.all((pi == 0) | (pi == 1)):
        raise ValueError("indicator entries must be binary")


def pair_powers(h_table, w_set) -> np.ndarray:
    """P[j, i] = |h_i^H w_j|^2 for all beam/user pairs."""
    H = np.asarray(h_table)
    W = np.asarray(w_set)
    return np.abs(W @ H.conj().T) ** 2  # (K beams, K users)


def _noise_vector(noise_power, num_users: int) -> np.ndarray:
    sigma2 = np.asarray(noise_power, dtype=float)
    if sigma2.ndim == 0:
        sigma2 = np.full(num_users, float(sigma2))
    return sigma2


def sinr_table(powers: np.ndarray, pi: np.ndarray, noise_power) -> np.ndarray:
    """gamma[k, i]: SINR of decoder i for message k, valid where k <= i.

    Denominator: total received power at user i, minus the messages j <= k
    already cancelled there, plus noise.
    """
    K = powers.shape[0]
    sigma2 = _noise_vector(noise_power, K)
    full = powers.sum(axis=0) + sigma2                      # (i,)
    cancelled = np.cumsum(np.asarray(pi) * powers, axis=0)  # [k, i] = sum_{j<=k}
    den = full[None, :] - cancelled
    return powers / den


def sinr_own(h_table, w_set, pi, noise_power, k: int) -> float:
    """SINR of the k-th decoded user decoding its own signal."""
    powers = pair_powers(h_table, w_set)
    return float(sinr_table(powers, pi, noise_power)[k, k])


def sinr_cross(h_table, w_set, pi, noise_power, k: int, i: int) -> float:
    """SINR of the i-th decoded user decoding the k-th user's signal.

    Only defined for k < i with pi[k, i] = 1.
    """
    if k >= i:
        raise ValueError("cross-decoding requires k < i")
    pi = np.asarray(pi)
    if pi[k, i] != 1:
        raise ValueError("pair (k, i) is not scheduled for decoding")
    powers = pair_powers(h_table, w_set)
    return float(sinr_table(powers, pi, noise_power)[k, i])


def rate_vector(powers: np.ndarray, pi: np.ndarray, noise_power) -> np.ndarray:
    """Achievable rate of every user: the worst log2(1 + SINR) over all
    decoders assigned to that user's message (always including itself)."""
    pi = np.asarray(pi)
    gamma = sinr_table(powers, pi, noise_power)
    rates = np.log2(1.0 + gamma)
    rates = np.where(pi == 1, rates, np.inf)
    return rates.min(axis=1)


def achievable_rate(h_table, w_set, pi, noise_power, k: int) -> float:
    powers = pair_powers(h_table, w_set)
    return float(rate_vector(powers, pi, noise_power)[k])


def sum_rate(h_table, w_set, pi, noise_power) -> float:
    powers = pair_powers(h_table, w_set)
    return float(rate_vector(powers, pi, noise_power).sum())
