"""Slot-level Monte Carlo simulation of the two-phase relay protocol.

Independent of the analytic layer: the only shared inputs are the
link budget and the policy.  Used as the empirical oracle for the
stationary distributions and throughputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .link_model import LinkBudget, SystemConfig, link_budget
from .queue_analytics import AccessPolicy, evaluate_policy

__all__ = ["SimStats", "simulate", "compare"]

_BLOCK = 1 << 16


@dataclass(frozen=True)
class SimStats:
    """Counts from one simulation run, post warm-up.

    ``slots`` is the number of counted slots; both histograms sum to
    it.  ``measured_mu_p`` is departures per busy slot,
    ``measured_mu_s`` deliveries per slot, ``measured_block_fraction``
    drops per arrival.  Final queue levels make conservation checks
    exact when run without warm-up.
    """

    slots: int
    pu_arrivals: int
    pu_drops: int
    su_packets_delivered: int
    pu_queue_histogram: Tuple[int, ...]
    relay_queue_histogram: Tuple[int, ...]
    measured_mu_p: float
    measured_mu_s: float
    measured_block_fraction: float
    rng_seed: int
    final_pu_queue: int
    final_relay_queue: int


def simulate(config: SystemConfig, policy: AccessPolicy, n_slots: int,
             seed: int, warmup_slots: int = 10_000,
             budget: Optional[LinkBudget] = None) -> SimStats:
    """Run the per-slot protocol for warmup_slots + n_slots slots.

    Slot layout, with exactly six uniform draws per slot in fixed
    order (pd, ps, share, relay, own, arrival) so the stream position
    never depends on which branches fire:

      1. receiving phase: head primary packet (if any) reaches the
         destination w.p. theta_pd; otherwise the secondary captures
         it w.p. theta_ps, admitted only if its buffer had room at the
         start of the phase.  Either way the packet leaves the primary
         queue on success.
      2. the relay buffer level is recorded (end of receiving phase).
      3. relaying phase: empty buffer means the secondary sends its
         own packet with the full phase; otherwise the phase is
         time-shared w.p. probs[level] (relay and own packet both get
         their shared-duration success probabilities) or devoted to
         the relayed packet alone.
      4. a primary arrival lands w.p. the arrival rate, service first,
         dropped only if the queue is still full.

    The RNG is counter-based (Philox) keyed by ``seed`` alone, drawn
    in blocks; identical inputs give identical stats bit for bit.
    """
    if n_slots < 1:
        raise ValueError(f"n_slots: must be >= 1, got {n_slots}")
    if warmup_slots < 0:
        raise ValueError(f"warmup_slots: must be >= 0, got {warmup_slots}")
    if policy.capacity != config.relay_queue_capacity:
        raise ValueError(
            f"probs: policy covers levels 0..{policy.capacity} but "
            f"relay_queue_capacity is {config.relay_queue_capacity}")
    b = budget if budget is not None else link_budget(config)
    th_pd, th_ps = b.theta_pd, b.theta_ps
    th_sd, th_sdb = b.theta_sd, b.theta_sd_shared
    th_sr, th_srb = b.theta_sr, b.theta_sr_shared
    lam = config.pu_arrival_rate
    n_p, n_s = config.pu_queue_capacity, config.relay_queue_capacity
    probs = policy.probs

    rng = np.random.Generator(np.random.Philox(seed))
    m = 0  # primary queue level
    k = 0  # relay buffer level
    w_hist = [0] * (n_p + 1)
    pi_hist = [0] * (n_s + 1)
    arrivals = drops = delivered = departures = busy = 0

    total = warmup_slots + n_slots
    done = 0
    while done < total:
        block = rng.random((min(_BLOCK, total - done), 6)).tolist()
        for u_pd, u_ps, u_share, u_relay, u_own, u_arr in block:
            counting = done >= warmup_slots
            if counting:
                w_hist[m] += 1
            departed = False
            if m > 0:
                if counting:
                    busy += 1
                if u_pd < th_pd:
                    m -= 1
                    departed = True
                elif u_ps < th_ps and k < n_s:
                    m -= 1
                    k += 1
                    departed = True
            if counting:
                pi_hist[k] += 1
                if departed:
                    departures += 1
            if k > 0:
                if u_share < probs[k]:
                    if u_relay < th_sdb:
                        k -= 1
                    if u_own < th_srb and counting:
                        delivered += 1
                elif u_relay < th_sd:
                    k -= 1
            elif u_own < th_sr and counting:
                delivered += 1
            if u_arr < lam:
                if counting:
                    arrivals += 1
                if m < n_p:
                    m += 1
                elif counting:
                    drops += 1
            done += 1

    return SimStats(
        slots=n_slots,
        pu_arrivals=arrivals,
        pu_drops=drops,
        su_packets_delivered=delivered,
        pu_queue_histogram=tuple(w_hist),
        relay_queue_histogram=tuple(pi_hist),
        measured_mu_p=departures / busy if busy else 0.0,
        measured_mu_s=delivered / n_slots,
        measured_block_fraction=drops / arrivals if arrivals else 0.0,
        rng_seed=seed,
        final_pu_queue=m,
        final_relay_queue=k,
    )


def compare(config: SystemConfig, policy: AccessPolicy, n_slots: int,
            seeds, warmup_slots: int = 10_000,
            budget: Optional[LinkBudget] = None) -> dict:
    """Analytic-versus-empirical gap report over one or more seeds.

    For each seed: total variation between the empirical and analytic
    relay occupancy, plus gaps on the full-queue probability and both
    throughputs.  Half-widths are three-sigma binomial errors at the
    analytic rates (and the generic 3/sqrt(n) scale for the TV
    distance); ``within`` flags whether every gap sits inside its
    half-width.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seeds: need at least one")
    b = budget if budget is not None else link_budget(config)
    ev = evaluate_policy(config, policy, budget=b)
    pi = ev.relay_state.occupancy
    n_p = config.pu_queue_capacity

    def halfwidth(p, n):
        return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else math.inf

    per_seed = []
    for seed in seeds:
        stats = simulate(config, policy, n_slots, seed,
                         warmup_slots=warmup_slots, budget=b)
        emp_pi = [c / stats.slots for c in stats.relay_queue_histogram]
        tv = 0.5 * sum(abs(e - a) for e, a in zip(emp_pi, pi))
        emp_full = stats.pu_queue_histogram[n_p] / stats.slots
        busy = stats.slots - stats.pu_queue_histogram[0]
        gaps = {
            "seed": seed,
            "tv_relay": tv,
            "hw_tv": 3.0 / math.sqrt(stats.slots),
            "gap_full": abs(emp_full - ev.pu_state.full),
            "hw_full": halfwidth(ev.pu_state.full, stats.slots),
            "gap_mu_p": abs(stats.measured_mu_p - ev.mu_p),
            "hw_mu_p": halfwidth(ev.mu_p, busy),
            "gap_mu_s": abs(stats.measured_mu_s - ev.mu_s),
            "hw_mu_s": halfwidth(ev.mu_s, stats.slots),
            "measured_mu_p": stats.measured_mu_p,
            "measured_mu_s": stats.measured_mu_s,
        }
        gaps["within"] = (gaps["tv_relay"] <= gaps["hw_tv"]
                          and gaps["gap_full"] <= gaps["hw_full"]
                          and gaps["gap_mu_p"] <= gaps["hw_mu_p"]
                          and gaps["gap_mu_s"] <= gaps["hw_mu_s"])
        per_seed.append(gaps)

    return {
        "analytic": {"mu_p": ev.mu_p, "mu_s": ev.mu_s,
                     "full": ev.pu_state.full,
                     "relay_occupancy": list(pi)},
        "per_seed": per_seed,
        "max_tv_relay": max(g["tv_relay"] for g in per_seed),
        "max_gap_mu_p": max(g["gap_mu_p"] for g in per_seed),
        "max_gap_mu_s": max(g["gap_mu_s"] for g in per_seed),
        "all_within": all(g["within"] for g in per_seed),
    }
