"""Overall two-stage optimization loop.

Stage one fixes the decoding order from a channel-gain maximization; stage
two alternates a lifted beamforming solve, per-antenna position steps and an
indicator-matrix search until the sum-rate improvement stalls.  Every step
is wrapped in an accept-or-revert safeguard, so the reported traces are
non-decreasing whenever the incumbent satisfies the active rate floor.

When the initial beamforming problem is infeasible under the full rate
floor, the floor follows the continuation schedule 0, half, full across the
first outer iterations; a trial that never restores the full floor (or fails
numerically even with the floor removed) is marked excluded.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import stage_one
from .channel import (ChannelRealization, SystemConfig, apv_feasible,
                      channel_matrix, sample_feasible_apv, trial_rng)
from .frcalc import build_gamma_context, rate_surrogate_theta
from .ga import GaConfig, exhaustive_indicator_search, run_ga
from .rates import (full_indicator, identity_indicator, pair_powers,
                    rate_vector, validate_indicator)
from .solver.builders import (SlackAnchors, active_pairs,
                              beams_from_solution, build_beamforming_sdp,
                              build_position_program)
from .solver.ipm import solve_conic

RANK_ONE_TOL = 1e-4
ACCEPT_SLACK = 1e-9


@dataclass
class RunOptions:
    scheme: str = "noma-ma"
    movable: bool = True                # optimize antenna positions
    use_sic: bool = True                # False: identity indicator, no GA
    indicator_mode: str = "ga"          # ga | exhaustive | fixed
    order_mode: str = "proposed"        # proposed | random
    order_override: np.ndarray = None   # explicit decoding order (orig indices)
    fixed_apv: np.ndarray = None        # frozen positions (FPA baselines)
    r_min_override: float = None
    dump_dir: str = None


@dataclass
class SolverStats:
    solves: int = 0
    iterations: int = 0
    statuses: dict = field(default_factory=dict)
    rank_one_ratios: list = field(default_factory=list)
    randomized_extractions: int = 0

    def record(self, solution):
        self.solves += 1
        self.iterations += solution.iterations
        self.statuses[solution.status] = self.statuses.get(solution.status, 0) + 1

    def to_dict(self):
        return {
            "solves": self.solves,
            "iterations": self.iterations,
            "statuses": dict(sorted(self.statuses.items())),
            "rank_one_ratios": [float(r) for r in self.rank_one_ratios],
            "randomized_extractions": self.randomized_extractions,
        }


@dataclass
class RunReport:
    scheme: str
    seed: int
    order: np.ndarray
    apv: np.ndarray
    w_set: np.ndarray
    pi: np.ndarray
    gain_trace: np.ndarray
    sum_rate_trace: np.ndarray
    final_rates: np.ndarray
    sum_rate: float
    iterations: int
    qos_level_final: float
    qos_met_full: bool
    excluded: bool
    excluded_reason: str
    invariant_violations: int
    solver_stats: SolverStats
    wall_clock_sec: float

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "seed": int(self.seed),
            "order": [int(z) for z in self.order],
            "apv": [[float(c) for c in u] for u in self.apv],
            "w_real": [[float(v.real) for v in w] for w in self.w_set],
            "w_imag": [[float(v.imag) for v in w] for w in self.w_set],
            "pi": [[int(v) for v in row] for row in self.pi],
            "gain_trace": [float(v) for v in self.gain_trace],
            "sum_rate_trace": [float(v) for v in self.sum_rate_trace],
            "final_rates": [float(v) for v in self.final_rates],
            "sum_rate": float(self.sum_rate),
            "iterations": int(self.iterations),
            "qos_level_final": float(self.qos_level_final),
            "qos_met_full": bool(self.qos_met_full),
            "excluded": bool(self.excluded),
            "excluded_reason": self.excluded_reason,
            "invariant_violations": int(self.invariant_violations),
            "solver_stats": self.solver_stats.to_dict(),
            "wall_clock_sec": float(self.wall_clock_sec),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def mrt_beams(h_table, max_power: float) -> np.ndarray:
    """Equal-power maximum-ratio beams: feasible for any power budget."""
    h = np.asarray(h_table)
    K = h.shape[0]
    norms = np.linalg.norm(h, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return math.sqrt(max_power / K) * h / norms[:, None]


def refresh_anchors(h_table, w_set, pi, noise) -> SlackAnchors:
    """Anchors that make both slack constraints tight at the incumbent:
    alpha = 1/Gamma and beta = Upsilon per active pair.  A vanishing Gamma
    is clamped so that the pair's noise-normalized alpha never exceeds 1e12
    (its surrogate rate term is then below 1e-9)."""
    pi = np.asarray(pi)
    noise = np.asarray(noise, dtype=float)
    powers = pair_powers(h_table, w_set)
    K = powers.shape[0]
    full = powers.sum(axis=0) + noise
    cancelled = np.cumsum(pi * powers, axis=0)
    pairs = active_pairs(pi)
    alpha = np.empty(len(pairs))
    beta = np.empty(len(pairs))
    for p, (k, i) in enumerate(pairs):
        gamma = powers[k, i]
        cap = 1e12 / noise[i]
        alpha[p] = min(1.0 / gamma, cap) if gamma > 0 else cap
        beta[p] = full[i] - cancelled[k, i]
    return SlackAnchors(pairs=pairs, alpha=alpha, beta=beta)


def anchor_rate_terms(anchors: SlackAnchors):
    """Surrogate rate of each active pair evaluated at its own anchor."""
    return np.array([
        rate_surrogate_theta(a, b, a, b)
        for a, b in zip(anchors.alpha, anchors.beta)
    ])


class TwoStageRunner:
    """Mutable state of one optimization run (single realization)."""

    def __init__(self, realization: ChannelRealization, config: SystemConfig,
                 ga_config: GaConfig, seed: int, options: RunOptions = None):
        self.config = config
        self.ga_config = ga_config
        self.options = options or RunOptions()
        self.seed = seed
        self.rng = trial_rng(seed)
        self.realization_raw = realization
        self.K = realization.num_users
        self.M = config.num_antennas
        self.noise = np.full(self.K, config.noise_power)
        self.r_min_full = (self.options.r_min_override
                           if self.options.r_min_override is not None
                           else config.min_rate)
        self.stats = SolverStats()
        self.invariant_violations = 0
        self.continuation = False
        self.qos_level = self.r_min_full
        self.excluded = False
        self.excluded_reason = ""
        self._dump_count = 0

    # -- shared helpers ----------------------------------------------------

    # SCA subproblems do not need the solver's tightest feasibility; 1e-6
    # keeps every safeguarded step well inside the accept tolerances while
    # avoiding end-game stalls on badly scaled instances.
    def _solve(self, problem, feas_tol=1e-6, gap_tol=1e-7):
        if self.options.dump_dir:
            import os
            path = os.path.join(self.options.dump_dir,
                                f"{problem.name}-{self._dump_count:05d}.txt")
            with open(path, "w") as fh:
                fh.write(problem.dump_text())
            self._dump_count += 1
        sol = solve_conic(problem, feas_tol=feas_tol, gap_tol=gap_tol)
        self.stats.record(sol)
        return sol

    def _rates(self, h=None, w=None, pi=None):
        h = self.h if h is None else h
        w = self.w if w is None else w
        pi = self.pi if pi is None else pi
        return rate_vector(pair_powers(h, w), pi, self.noise)

    def _accept_candidate(self, new_w=None, new_apv=None):
        """Feasibility-first accept/revert rule shared by all steps."""
        w = self.w if new_w is None else new_w
        if new_apv is None:
            h = self.h
            apv = self.apv
        else:
            apv = new_apv
            h = channel_matrix(apv, self.realization, self.config.wavelength)
        rates = self._rates(h=h, w=w)
        sr = float(rates.sum())
        level = self.qos_level
        old_feas = float(self.rates.min()) >= level - 1e-9
        new_feas = float(rates.min()) >= level - 1e-9
        if old_feas:
            # monotone regime: never let the recorded sum rate decrease
            accept = new_feas and sr >= self.sum_rate - ACCEPT_SLACK
            sr = max(sr, self.sum_rate)
        elif new_feas:
            accept = True
        else:
            accept = float(rates.min()) > float(self.rates.min()) + 1e-12
        if accept:
            self.w = w
            self.apv = apv
            self.h = h
            self.rates = rates
            self.sum_rate = sr
        return accept

    def _check_invariants(self):
        ok = True
        power = float(np.sum(np.abs(self.w) ** 2))
        if power > self.config.max_power * (1 + 1e-7):
            ok = False
        if not apv_feasible(self.apv, self.config, tol=1e-7):
            ok = False
        try:
            validate_indicator(self.pi)
        except ValueError:
            ok = False
        if not ok:
            self.invariant_violations += 1
        return ok

    # -- stage two steps ----------------------------------------------------

    def _rmin_levels(self, t: int):
        """Rate floors to attempt, strongest first.  The relaxed levels copy
        the continuation schedule: the floor is dropped entirely on the
        first iteration and restored through half to full afterwards."""
        full = self.r_min_full
        levels = [full]
        if full > 0.0:
            if t >= 1:
                levels.append(full / 2.0)
            levels.append(0.0)
        return levels

    def step_beamforming(self, t: int):
        anchors = refresh_anchors(self.h, self.w, self.pi, self.noise)
        for level in self._rmin_levels(t):
            sol = self._try_beamforming(anchors, level)
            if sol is not None:
                if level < self.r_min_full:
                    self.continuation = True
                self.qos_level = level
                return self._finish_beamforming(sol)
        self.excluded = True
        self.excluded_reason = "beamforming failed at every rate floor"
        return False

    def _try_beamforming(self, anchors, level):
        problem = build_beamforming_sdp(self.h, self.pi, anchors, self.config,
                                        level, noise=self.noise)
        sol = self._solve(problem)
        return sol if sol.optimal else None

    def _finish_beamforming(self, sol):
        W_list = beams_from_solution(sol.x, self.K, self.M,
                                     self.config.max_power)
        w_new, solve_ratio, path = self._extract_beams(W_list)
        if solve_ratio is not None:
            self.stats.rank_one_ratios.append(solve_ratio)
        if path == "randomized":
            self.stats.randomized_extractions += 1
        return self._accept_candidate(new_w=np.asarray(w_new))

    def _extract_beams(self, W_list):
        """Principal eigenpair per lifted beam with a joint randomization
        fallback when any meaningful block is not numerically rank-one."""
        vals_vecs = [np.linalg.eigh(0.5 * (W + W.conj().T)) for W in W_list]
        principal = []
        ratios = []
        floor = 1e-6 * self.config.max_power / self.K
        for vals, vecs in vals_vecs:
            lam1 = float(max(vals[-1], 0.0))
            lam2 = float(max(vals[-2], 0.0)) if len(vals) > 1 else 0.0
            principal.append(math.sqrt(lam1) * vecs[:, -1])
            if lam1 > floor:
                ratios.append(lam2 / lam1 if lam1 > 0 else 0.0)
        solve_ratio = max(ratios) if ratios else 0.0
        if solve_ratio <= RANK_ONE_TOL:
            return np.array(principal), solve_ratio, "principal"

        def score(w_cand):
            rates = self._rates(w=w_cand)
            feas = float(rates.min()) >= self.qos_level - 1e-9
            return (1 if feas else 0, float(rates.sum()))

        roots = []
        for (vals, vecs), W in zip(vals_vecs, W_list):
            roots.append(vecs @ (np.sqrt(np.clip(vals, 0, None))[:, None]
                                 * vecs.conj().T))
        best = np.array(principal)
        best_score = score(best)
        for _ in range(100):
            cand = []
            for k, (vals, vecs) in enumerate(vals_vecs):
                lam1 = float(max(vals[-1], 0.0))
                lam2 = float(max(vals[-2], 0.0)) if len(vals) > 1 else 0.0
                if lam1 <= floor or lam2 / max(lam1, 1e-300) <= RANK_ONE_TOL:
                    cand.append(principal[k])
                    continue
                g = (self.rng.standard_normal(self.M)
                     + 1j * self.rng.standard_normal(self.M)) / math.sqrt(2)
                v = roots[k] @ g
                nrm = np.linalg.norm(v)
                power = float(np.real(np.trace(W_list[k])))
                cand.append(v * math.sqrt(power) / nrm if nrm > 0 else principal[k])
            cand = np.array(cand)
            sc = score(cand)
            if sc > best_score:
                best, best_score = cand, sc
        return best, solve_ratio, "randomized"

    def step_positions(self):
        moved = 0
        for m in range(self.M):
            anchors = refresh_anchors(self.h, self.w, self.pi, self.noise)
            contexts = [[
                build_gamma_context(self.w, self.apv, m, j, i,
                                    self.realization.theta,
                                    self.realization.phi,
                                    self.realization.prv,
                                    self.config.wavelength)
                for i in range(self.K)] for j in range(self.K)]
            problem = build_position_program(m, self.apv, contexts, self.pi,
                                             anchors, self.config,
                                             self.qos_level, noise=self.noise)
            sol = self._solve(problem)
            if not sol.optimal:
                continue
            others = np.delete(self.apv, m, axis=0)
            repaired = stage_one.snap_spacing(sol.x[0:2], others,
                                              self.config.min_spacing,
                                              self.config.region_side / 2.0)
            if repaired is None:
                continue
            candidate = self.apv.copy()
            candidate[m] = repaired
            if self._accept_candidate(new_apv=candidate):
                moved += 1
        return moved

    def step_indicator(self):
        if not self.options.use_sic or self.K == 1 \
                or self.options.indicator_mode == "fixed":
            return False
        if self.options.indicator_mode == "exhaustive":
            pi_cand, _, _ = exhaustive_indicator_search(
                self.w, self.apv, self.realization, self.config,
                penalty=self.ga_config.penalty, min_rate=self.r_min_full)
        else:
            pi_cand, _ = run_ga(self.w, self.apv, self.realization,
                                self.config, self.ga_config, self.rng,
                                min_rate=self.r_min_full)
        cand_rates = self._rates(pi=pi_cand)
        if float(cand_rates.sum()) > self.sum_rate:
            self.pi = pi_cand
            self.rates = cand_rates
            self.sum_rate = float(cand_rates.sum())
            return True
        return False

    # -- full run ------------------------------------------------------------

    def run(self) -> RunReport:
        t_start = time.perf_counter()
        cfg = self.config
        opts = self.options
        raw = self.realization_raw

        if opts.fixed_apv is not None:
            apv0 = np.array(opts.fixed_apv, dtype=float)
            gain_trace = np.array([
                float(np.sum(np.abs(channel_matrix(apv0, raw, cfg.wavelength))**2))])
            apv = apv0
        else:
            apv0 = sample_feasible_apv(cfg, self.rng)
            if opts.movable:
                apv, gain_trace = stage_one.optimize_positions_for_gain(
                    raw, cfg, apv0)
            else:
                apv = apv0
                gain_trace = np.array([
                    float(np.sum(np.abs(channel_matrix(apv0, raw, cfg.wavelength))**2))])

        if opts.order_override is not None:
            order = np.asarray(opts.order_override, dtype=int)
        elif opts.order_mode == "random":
            order = self.rng.permutation(self.K)
        else:
            order = stage_one.determine_order(apv, raw, cfg.wavelength)

        self.realization = raw.reorder(order)
        self.apv = np.array(apv, dtype=float)
        self.h = channel_matrix(self.apv, self.realization, cfg.wavelength)
        self.pi = full_indicator(self.K) if opts.use_sic \
            else identity_indicator(self.K)
        self.w = mrt_beams(self.h, cfg.max_power)
        self.rates = self._rates()
        self.sum_rate = float(self.rates.sum())
        trace = [self.sum_rate]
        self._check_invariants()

        iterations = 0
        for t in range(cfg.max_iters_stage_two):
            self.step_beamforming(t)
            if self.excluded:
                break
            if opts.movable:
                self.step_positions()
            self.step_indicator()
            self._check_invariants()
            iterations = t + 1
            prev = trace[-1]
            trace.append(self.sum_rate)
            if (self.sum_rate - prev) < cfg.tol_stage_two * max(prev, 1e-12):
                if self.qos_level >= self.r_min_full:
                    break
                # still on a relaxed floor: keep iterating toward the full one

        qos_met = bool(float(self.rates.min()) >= self.r_min_full - 1e-6)
        if not self.excluded and self.r_min_full > 0.0 and not qos_met:
            self.excluded = True
            self.excluded_reason = "full rate floor never restored"

        return RunReport(
            scheme=opts.scheme,
            seed=self.seed,
            order=order,
            apv=self.apv,
            w_set=self.w,
            pi=self.pi,
            gain_trace=np.asarray(gain_trace, dtype=float),
            sum_rate_trace=np.array(trace),
            final_rates=self.rates,
            sum_rate=self.sum_rate,
            iterations=iterations,
            qos_level_final=self.qos_level,
            qos_met_full=qos_met,
            excluded=self.excluded,
            excluded_reason=self.excluded_reason,
            invariant_violations=self.invariant_violations,
            solver_stats=self.stats,
            wall_clock_sec=time.perf_counter() - t_start,
        )


def run_two_stage(realization: ChannelRealization, config: SystemConfig,
                  ga_config: GaConfig, seed: int,
                  options: RunOptions = None) -> RunReport:
    """Stage one then stage two on a single channel realization."""
    runner = TwoStageRunner(realization, config, ga_config, seed, options)
    return runner.run()
