"""Access-policy searches: the exact LP sweep and two restricted searches.

The exact search fixes a target primary departure rate, at which the
relay balance equations become linear in the pair (occupancy, shared
occupancy), solves the resulting LP for each target on a grid, and
keeps the best.  The restricted searches use a single constant sharing
probability (scalar line search) or a threshold rule (enumeration).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import lp_core
from .link_model import LinkBudget, SystemConfig, link_budget
from .queue_analytics import (AccessPolicy, evaluate_policy,
                              min_departure_rate, pu_busy_probability,
                              pu_departure_from_relay, relay_departure_probs,
                              relay_steady_state)

__all__ = [
    "OptimizationResult",
    "SweepPoint",
    "feasible_mu_p_range",
    "attainable_mu_p_range",
    "build_lp",
    "optimal_policy",
    "cpt_policy",
    "st_policy",
]

_PAD = 1e-9  # widens the attainable window past fixed-point tolerance noise


class SweepPoint(NamedTuple):
    mu_p: float
    objective: float
    status: str


@dataclass(frozen=True)
class OptimizationResult:
    """Outcome of one policy search.

    ``status`` is "ok" when a feasible policy was found and
    "pu_infeasible" when no target departure rate can protect the
    primary (the regime where secondary throughput is zero by
    necessity).  ``objective`` is the search's own score at the
    selected point; ``evaluation`` is the independent fixed-point
    evaluation of the returned policy.  ``diagnostics`` records every
    candidate the search looked at.
    """

    method: str
    status: str
    policy: Optional[AccessPolicy]
    evaluation: Optional[PolicyEvaluation]
    swept_mu_p: float
    objective: float
    diagnostics: Tuple[SweepPoint, ...]

    @property
    def mu_s(self) -> float:
        return self.evaluation.mu_s if self.evaluation is not None else 0.0


def _infeasible(method, diagnostics=()):
    return OptimizationResult(method=method, status="pu_infeasible",
                              policy=None, evaluation=None,
                              swept_mu_p=math.nan, objective=0.0,
                              diagnostics=tuple(diagnostics))


def feasible_mu_p_range(config: SystemConfig,
                        budget: Optional[LinkBudget] = None):
    """Closed-form interval of admissible target departure rates.

    The upper end is the departure rate with the relay always able to
    accept; the lower end is the larger of the protection floor and the
    rate when a saturated relay only ever transmits in shared slots.
    Returns (lo, hi), or None when the interval is empty (including
    the case where no departure rate meets the loss threshold).
    """
    b = budget if budget is not None else link_budget(config)
    floor = min_departure_rate(config.pu_arrival_rate,
                               config.pu_queue_capacity,
                               config.loss_threshold)
    if floor is None:
        return None
    capture = b.theta_ps * (1.0 - b.theta_pd)
    lo = max(floor, b.theta_pd + capture * b.theta_sd_shared)
    hi = b.theta_pd + capture
    if lo > hi:
        return None
    return (lo, hi)


def attainable_mu_p_range(config: SystemConfig,
                          budget: Optional[LinkBudget] = None):
    """Sub-interval of the closed-form range a stationary policy can hit.

    The closed-form interval treats the relay occupancy as free, but
    under any fixed policy the occupancy is itself determined by the
    departure rate, so only rates between the always-share and
    never-share fixed points are realizable.  At light primary load
    that window is extremely narrow (both extremes leave the relay
    nearly empty), and a grid over the full closed-form interval would
    step straight over it.  The sweep therefore runs over the
    intersection of the two intervals; by continuity in the policy,
    every interior point of the window is realizable, hence feasible
    for the target-rate LP.  Returns (lo, hi) or None when empty.
    """
    b = budget if budget is not None else link_budget(config)
    rng = feasible_mu_p_range(config, b)
    if rng is None:
        return None
    n_s = config.relay_queue_capacity
    always = evaluate_policy(config, AccessPolicy((1.0,) * (n_s + 1)), budget=b)
    never = evaluate_policy(config, AccessPolicy((1.0,) + (0.0,) * n_s), budget=b)
    lo = max(rng[0], always.mu_p - _PAD)
    hi = min(rng[1], never.mu_p + _PAD)
    if lo > hi:
        return None
    return (lo, hi)


def build_lp(config: SystemConfig, budget: LinkBudget,
             mu_p: float) -> lp_core.LpProblem:
    """Relay-occupancy LP at one pinned primary departure rate.

    Variables are [occupancy pi_0..pi_N, shared mass a_0..a_N] where
    a_n = pi_n * p_n.  The balance equations between adjacent buffer
    levels, the normalization, the pinned-rate consistency row and the
    sharing-budget rows are all affine in (pi, a), and the objective
    (secondary throughput) is linear, so the best policy at this rate
    is an LP vertex.
    """
    n_s = config.relay_queue_capacity
    m = n_s + 1
    b = budget
    capture = b.theta_ps * (1.0 - b.theta_pd)
    if capture <= 0.0:
        raise ValueError("mu_p: no relay path exists (capture probability is 0)")
    busy = pu_busy_probability(config.pu_arrival_rate, mu_p,
                               config.pu_queue_capacity)
    q = busy * capture
    sd, shared_gap = b.theta_sd, b.theta_sd - b.theta_sd_shared

    objective = np.zeros(2 * m)
    objective[m] = b.theta_sr
    objective[m + 1:] = b.theta_sr_shared

    a_eq = []
    b_eq = []
    row = np.zeros(2 * m)
    row[:m] = 1.0
    a_eq.append(row)
    b_eq.append(1.0)  # occupancy sums to one
    row = np.zeros(2 * m)
    row[m] = 1.0
    row[0] = -1.0
    a_eq.append(row)
    b_eq.append(0.0)  # empty buffer always leaves the phase unshared
    # balance across the 0/1 cut
    row = np.zeros(2 * m)
    row[1] = sd * (1.0 - q)
    row[0] = -q
    row[m + 1] = -shared_gap * (1.0 - q)
    a_eq.append(row)
    b_eq.append(0.0)
    # balance across the n/n+1 cuts for interior levels
    for n in range(1, n_s):
        row = np.zeros(2 * m)
        row[n + 1] = sd * (1.0 - q)
        row[n] = -q * (1.0 - sd)
        row[m + n + 1] = -shared_gap * (1.0 - q)
        row[m + n] = -q * shared_gap
        a_eq.append(row)
        b_eq.append(0.0)
    # consistency with the pinned rate: the refused fraction at a full
    # buffer must equal what the rate implies
    row = np.zeros(2 * m)
    row[n_s] = 1.0 - sd
    row[m + n_s] = shared_gap
    a_eq.append(row)
    b_eq.append(1.0 - (mu_p - b.theta_pd) / capture)

    a_ub = []
    b_ub = []
    row = np.zeros(2 * m)
    row[m:] = 1.0
    a_ub.append(row)
    b_ub.append(1.0)  # shared mass is a probability
    for n in range(1, m):
        row = np.zeros(2 * m)
        row[m + n] = 1.0
        row[n] = -1.0
        a_ub.append(row)
        b_ub.append(0.0)  # cannot share more often than the level occurs

    return lp_core.LpProblem(
        objective=objective,
        eq_constraints=(np.array(a_eq), np.array(b_eq)),
        ineq_constraints=(np.array(a_ub), np.array(b_ub)),
        bounds=((0.0, 1.0),) * (2 * m),
    )


def optimal_policy(config: SystemConfig, grid_points: int = 200,
                   budget: Optional[LinkBudget] = None) -> OptimizationResult:
    """Grid sweep of the pinned-rate LP; best objective wins.

    The grid is uniform over the attainable target-rate window,
    endpoints included.  Ties break toward the smaller rate so serial
    and parallel sweeps select the same point.  The winning LP vertex
    is converted back to sharing probabilities (p_n = a_n / pi_n, with
    p_n = 0 where the level is unreachable) and re-evaluated through
    the fixed point as an independent check; both scores are reported.
    """
    b = budget if budget is not None else link_budget(config)
    window = attainable_mu_p_range(config, b)
    if window is None:
        return _infeasible("lp")
    diagnostics = []
    best = None
    for mu_p in np.linspace(window[0], window[1], max(grid_points, 2)):
        problem = build_lp(config, b, float(mu_p))
        try:
            sol = lp_core.solve(problem)
        except RuntimeError:
            # numerically degenerate grid point (window edges can sit a
            # hair outside exact feasibility); drop it, keep sweeping
            diagnostics.append(SweepPoint(float(mu_p), -math.inf, "unstable"))
            continue
        obj = sol.objective_value if sol.status == "optimal" else -math.inf
        diagnostics.append(SweepPoint(float(mu_p), obj, sol.status))
        if sol.status == "optimal" and (best is None or obj > best[1]):
            best = (float(mu_p), obj, sol.values)
    if best is None:
        return _infeasible("lp", diagnostics)
    mu_p, objective, values = best
    m = config.relay_queue_capacity + 1
    pi, a = values[:m], values[m:]
    probs = [1.0]
    for n in range(1, m):
        if pi[n] > 1e-14:
            probs.append(min(1.0, max(0.0, a[n] / pi[n])))
        else:
            probs.append(0.0)
    policy = AccessPolicy(probs)
    evaluation = evaluate_policy(config, policy, budget=b)
    return OptimizationResult(method="lp", status="ok", policy=policy,
                              evaluation=evaluation, swept_mu_p=mu_p,
                              objective=objective,
                              diagnostics=tuple(diagnostics))


def _uniform_policy(p: float, n_s: int) -> AccessPolicy:
    return AccessPolicy((1.0,) + (float(p),) * n_s)


def _step_policy(n_th: int, n_s: int) -> AccessPolicy:
    return AccessPolicy((1.0,) + tuple(1.0 if n <= n_th else 0.0
                                       for n in range(1, n_s + 1)))


def cpt_policy(config: SystemConfig, mode: str = "fixed_point",
               grid_points: int = 200,
               budget: Optional[LinkBudget] = None) -> OptimizationResult:
    """Best constant sharing probability.

    Default mode scores each candidate p through the self-consistent
    fixed point.  The score is expected to be unimodal in p, so a
    golden-section search does the heavy lifting; a 0.001-step grid
    scan runs alongside as a safety net and wins whenever it finds a
    better point.  Mode "mu_p_sweep" instead pins each target rate on
    the grid, root-finds the p consistent with it, and keeps the best
    rate (the alternative reading of searching over feasible rates).
    """
    b = budget if budget is not None else link_budget(config)
    n_s = config.relay_queue_capacity
    if mode == "mu_p_sweep":
        return _cpt_mu_p_sweep(config, b, grid_points)
    if mode != "fixed_point":
        raise ValueError(f"mode: unknown search mode {mode!r}")

    cache = {}

    def score(p):
        key = round(p, 12)
        if key not in cache:
            ev = evaluate_policy(config, _uniform_policy(p, n_s), budget=b)
            cache[key] = (ev.mu_s if ev.feasible else -math.inf, ev)
        return cache[key][0]

    # golden-section bracket shrink on [0, 1]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = score(x1), score(x2)
    for _ in range(60):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = score(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = score(x2)
    golden_p = x1 if f1 >= f2 else x2

    best_p, best_val = golden_p, score(golden_p)
    for k in range(1001):
        p = k / 1000.0
        v = score(p)
        if v > best_val:
            best_p, best_val = p, v
    if not math.isfinite(best_val):
        return _infeasible("cpt")
    _, evaluation = cache[round(best_p, 12)]
    diagnostics = tuple(SweepPoint(cache[round(k / 1000.0, 12)][1].mu_p,
                                   cache[round(k / 1000.0, 12)][0],
                                   "scored")
                        for k in range(0, 1001, 50))
    return OptimizationResult(method="cpt", status="ok",
                              policy=_uniform_policy(best_p, n_s),
                              evaluation=evaluation,
                              swept_mu_p=evaluation.mu_p,
                              objective=best_val,
                              diagnostics=diagnostics)


def _cpt_mu_p_sweep(config, b, grid_points):
    """Pin each target rate, solve for the consistent constant p."""
    n_s = config.relay_queue_capacity
    window = attainable_mu_p_range(config, b)
    if window is None:
        return _infeasible("cpt")
    capture = b.theta_ps * (1.0 - b.theta_pd)
    lam, n_p = config.pu_arrival_rate, config.pu_queue_capacity
    diagnostics = []
    best = None
    for mu_p in np.linspace(window[0], window[1], max(grid_points, 2)):
        q = pu_busy_probability(lam, float(mu_p), n_p) * capture

        def implied_rate(p):
            r = relay_departure_probs(_uniform_policy(p, n_s), b)
            return pu_departure_from_relay(b, relay_steady_state(q, r))

        g_lo = implied_rate(0.0) - mu_p   # largest implied rate
        g_hi = implied_rate(1.0) - mu_p   # smallest implied rate
        if g_lo < -1e-12 or g_hi > 1e-12:
            diagnostics.append(SweepPoint(float(mu_p), -math.inf, "no_root"))
            continue
        p_lo, p_hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (p_lo + p_hi)
            if implied_rate(mid) - mu_p >= 0.0:
                p_lo = mid
            else:
                p_hi = mid
        p = 0.5 * (p_lo + p_hi)
        r = relay_departure_probs(_uniform_policy(p, n_s), b)
        occ = relay_steady_state(q, r).occupancy
        mu_s = (b.theta_sr * occ[0]
                + b.theta_sr_shared * p * sum(occ[1:]))
        diagnostics.append(SweepPoint(float(mu_p), mu_s, "ok"))
        if best is None or mu_s > best[1]:
            best = (float(mu_p), mu_s, p)
    if best is None:
        return _infeasible("cpt", diagnostics)
    mu_p, mu_s, p = best
    policy = _uniform_policy(p, n_s)
    evaluation = evaluate_policy(config, policy, budget=b)
    return OptimizationResult(method="cpt", status="ok", policy=policy,
                              evaluation=evaluation, swept_mu_p=mu_p,
                              objective=mu_s, diagnostics=tuple(diagnostics))


def st_policy(config: SystemConfig, mode: str = "fixed_point",
              budget: Optional[LinkBudget] = None) -> OptimizationResult:
    """Best threshold rule: share at buffer levels up to the threshold.

    Enumerates thresholds 0..capacity; threshold 0 never shares at any
    occupied level, threshold = capacity is the all-ones policy.  For a
    fixed policy the rate consistent with the balance equations is
    exactly its fixed point, so the pinned-rate reading coincides with
    the fixed-point reading here; ``mode`` is accepted for symmetry
    but does not change the result.
    """
    if mode not in ("fixed_point", "mu_p_sweep"):
        raise ValueError(f"mode: unknown search mode {mode!r}")
    b = budget if budget is not None else link_budget(config)
    n_s = config.relay_queue_capacity
    diagnostics = []
    best = None
    for n_th in range(0, n_s + 1):
        policy = _step_policy(n_th, n_s)
        ev = evaluate_policy(config, policy, budget=b)
        val = ev.mu_s if ev.feasible else -math.inf
        diagnostics.append(SweepPoint(ev.mu_p, val, f"threshold_{n_th}"))
        if math.isfinite(val) and (best is None or val > best[1]):
            best = (n_th, val, policy, ev)
    if best is None:
        return _infeasible("st", diagnostics)
    n_th, val, policy, ev = best
    return OptimizationResult(method="st", status="ok", policy=policy,
                              evaluation=ev, swept_mu_p=ev.mu_p,
                              objective=val, diagnostics=tuple(diagnostics))
