"""Decoding-order determination: alternate per-antenna surrogate steps on the
total channel gain until the sweep-to-sweep improvement stalls, then sort
users by their individual gains at the optimized positions.

The total gain separates across antennas, so each accepted single-antenna
move increases the objective; rejected or infeasible steps keep the previous
position, which makes the sweep trace non-decreasing by construction.
"""

from __future__ import annotations

import numpy as np

from .channel import (ChannelRealization, SystemConfig, channel_gain,
                      in_region, total_gain)
from .frcalc import build_phi_context, phi_value
from .solver.builders import solve_gain_qp

SNAP_TOL = 1e-6


def snap_spacing(u, others, min_spacing, half, tol=SNAP_TOL):
    """Feasibility repair for one candidate position.

    Violations of the spacing constraint within ``tol`` get projected onto
    the violated circle; anything worse (or a repair that leaves the region)
    returns None so the caller can revert.
    """
    u = np.asarray(u, dtype=float)
    if np.max(np.abs(u)) > half + tol:
        return None
    u = np.clip(u, -half, half)
    for un in np.atleast_2d(others) if len(others) else []:
        dist = float(np.hypot(*(u - un)))
        if dist >= min_spacing:
            continue
        if dist < min_spacing - tol:
            return None
        direction = (u - un) / dist if dist > 0 else np.array([1.0, 0.0])
        u = un + direction * min_spacing
        if np.max(np.abs(u)) > half:
            return None
    return u


def optimize_positions_for_gain(realization: ChannelRealization,
                                config: SystemConfig, init_apv: np.ndarray):
    """Alternating per-antenna maximization of the summed channel gains.

    Returns the optimized positions and the per-sweep objective trace
    (leading entry is the initial objective).
    """
    apv = np.array(init_apv, dtype=float, copy=True)
    M = apv.shape[0]
    half = config.region_side / 2.0
    ctx = build_phi_context(realization.theta, realization.phi,
                            realization.prv, config.wavelength)
    trace = [total_gain(apv, realization, config.wavelength)]
    for _ in range(config.max_sweeps_stage_one):
        for m in range(M):
            others = np.delete(apv, m, axis=0)
            candidate = solve_gain_qp(apv[m], ctx, others, config)
            repaired = snap_spacing(candidate, others, config.min_spacing, half)
            if repaired is None:
                continue
            if phi_value(ctx, repaired) >= phi_value(ctx, apv[m]):
                apv[m] = repaired
        obj = total_gain(apv, realization, config.wavelength)
        prev = trace[-1]
        trace.append(max(obj, prev))
        if (obj - prev) < config.tol_stage_one * max(prev, 1e-300):
            break
    assert in_region(apv, config.region_side, 1e-9)
    return apv, np.array(trace)


def determine_order(apv, realization: ChannelRealization,
                    wavelength: float) -> np.ndarray:
    """Users sorted by increasing channel gain at the given positions;
    ties broken by ascending user index."""
    K = realization.num_users
    gains = np.array([
        channel_gain(apv, realization.theta[k], realization.phi[k],
                     realization.prv[k], wavelength)
        for k in range(K)
    ])
    return np.lexsort((np.arange(K), gains))


def run_stage_one(realization: ChannelRealization, config: SystemConfig,
                  init_apv: np.ndarray):
    """Optimize positions, then derive the decoding order."""
    apv, trace = optimize_positions_for_gain(realization, config, init_apv)
    order = determine_order(apv, realization, config.wavelength)
    return apv, order, trace
