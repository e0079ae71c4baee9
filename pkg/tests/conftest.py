import numpy as np
import pytest

from manoma.channel import SystemConfig


@pytest.fixture
def small_config():
    return SystemConfig(num_antennas=3, num_users=3, num_paths=4).validate()


def fd_gradient(fn, u, step):
    """Central finite-difference gradient of a scalar function of u in R^2."""
    g = np.zeros(2)
    for j in range(2):
        up = np.array(u, dtype=float)
        um = np.array(u, dtype=float)
        up[j] += step
        um[j] -= step
        g[j] = (fn(up) - fn(um)) / (2 * step)
    return g


def fd_hessian(fn, u, step):
    """Central finite-difference Hessian of a scalar function of u in R^2."""
    H = np.zeros((2, 2))
    f0 = fn(np.asarray(u, dtype=float))
    for j in range(2):
        up = np.array(u, dtype=float)
        um = np.array(u, dtype=float)
        up[j] += step
        um[j] -= step
        H[j, j] = (fn(up) - 2 * f0 + fn(um)) / step**2
    upp = np.array(u, dtype=float) + np.array([step, step])
    upm = np.array(u, dtype=float) + np.array([step, -step])
    ump = np.array(u, dtype=float) + np.array([-step, step])
    umm = np.array(u, dtype=float) - np.array([step, step])
    H[0, 1] = H[1, 0] = (fn(upp) - fn(upm) - fn(ump) + fn(umm)) / (4 * step**2)
    return H


def rel_err(a, b):
    return abs(a - b) / max(1.0, abs(b)) if np.isscalar(a) else \
        np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(1.0, np.linalg.norm(b))
