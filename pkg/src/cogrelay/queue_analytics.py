"""Steady-state queue analytics for the primary user and the relay buffer.

Both queues are finite birth-death chains embedded at slot boundaries.
The primary queue sees Bernoulli arrivals and departs with the success
probability the relay layer provides; the relay buffer fills from
overheard primary packets and drains according to the access policy.
The two chains are coupled through the primary departure rate, which
``evaluate_policy`` resolves with a damped fixed-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

from .link_model import LinkBudget, SystemConfig, link_budget

__all__ = [
    "AccessPolicy",
    "PuSteadyState",
    "RelaySteadyState",
    "PolicyEvaluation",
    "FixedPointDiverged",
    "pu_steady_state",
    "pu_busy_probability",
    "pu_blocking_probability",
    "min_departure_rate",
    "relay_departure_probs",
    "relay_steady_state",
    "pu_departure_from_relay",
    "evaluate_policy",
]

_GAMMA_UNIT_TOL = 1e-9  # treat the birth-death ratio as exactly 1 below this


class FixedPointDiverged(RuntimeError):
    """Raised when the coupled-rate iteration fails to settle."""

    def __init__(self, last_mu_p, residual, iterations):
        super().__init__(
            f"fixed point did not converge after {iterations} iterations "
            f"(last mu_p={last_mu_p!r}, residual={residual!r})")
        self.last_mu_p = last_mu_p
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class AccessPolicy:
    """Relay transmission-sharing probabilities, indexed by buffer level.

    ``probs[n]`` is the probability the secondary shares its second
    phase (relay plus own packet) when the buffer holds ``n`` packets.
    The empty state has nothing to relay, so ``probs[0]`` must be 1 by
    convention: the full second phase goes to the secondary's own
    packet.
    """

    probs: Tuple[float, ...]

    def __init__(self, probs: Sequence[float]):
        probs = tuple(float(p) for p in probs)
        if len(probs) < 2:
            raise ValueError("probs: need at least levels 0 and 1")
        if probs[0] != 1.0:
            raise ValueError(f"probs: level-0 entry must be exactly 1.0, got {probs[0]}")
        for n, p in enumerate(probs):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probs: entry {n} out of [0, 1], got {p}")
        object.__setattr__(self, "probs", probs)

    @property
    def capacity(self) -> int:
        return len(self.probs) - 1


def _pu_scalars(lam: float, mu: float, n_p: int):
    """(w0, busy, full) for the primary chain, O(1) and overflow safe.

    Slot order is service then arrival, which makes the one-step
    probabilities P(0 -> 1) = lam, P(n -> n-1) = mu * (1 - lam) and
    P(n -> n+1) = (1 - mu) * lam for interior n.  Edge conventions:
    lam = 0 pins the queue empty; mu = 0 with lam > 0 absorbs at full;
    lam = 1 with mu < 1 also absorbs at full, while lam = mu = 1
    alternates through level 1 every slot.
    """
    if lam == 0.0:
        return 1.0, 0.0, 0.0
    if mu == 0.0:
        return 0.0, 1.0, 1.0
    if lam == 1.0:
        if mu < 1.0:
            return 0.0, 1.0, 1.0
        return 0.0, 1.0, (1.0 if n_p == 1 else 0.0)
    gamma = lam * (1.0 - mu) / ((1.0 - lam) * mu)
    rho1 = lam / ((1.0 - lam) * mu)
    if abs(gamma - 1.0) < _GAMMA_UNIT_TOL:
        total = 1.0 + rho1 * n_p
        return 1.0 / total, 1.0 - 1.0 / total, rho1 / total
    if gamma < 1.0:
        total = 1.0 + rho1 * (1.0 - gamma ** n_p) / (1.0 - gamma)
        return 1.0 / total, 1.0 - 1.0 / total, rho1 * gamma ** (n_p - 1) / total
    # gamma > 1: divide the whole sum by gamma**(n_p - 1) so that the
    # dominant term is O(1) even for huge capacities.
    inv = 1.0 / gamma
    log_top = (n_p - 1) * math.log(gamma)
    lead = math.exp(-log_top) if log_top < 700.0 else 0.0
    denom = lead + rho1 * (1.0 - inv ** n_p) / (1.0 - inv)
    return lead / denom, 1.0 - lead / denom, rho1 / denom


class PuSteadyState:
    """Stationary description of the primary queue.

    Scalars (``busy``, ``full``, ``gamma``) are computed on
    construction in O(1).  The full ``occupancy`` vector is O(capacity)
    to build, so it is materialized lazily on first access; sweeps over
    million-slot buffers never pay for it.
    """

    __slots__ = ("arrival_rate", "departure_rate", "capacity",
                 "gamma", "busy", "full", "_occupancy")

    def __init__(self, arrival_rate: float, departure_rate: float, capacity: int):
        if not 0.0 <= arrival_rate <= 1.0:
            raise ValueError(f"arrival_rate: must lie in [0, 1], got {arrival_rate}")
        if not 0.0 <= departure_rate <= 1.0:
            raise ValueError(f"departure_rate: must lie in [0, 1], got {departure_rate}")
        if capacity < 1:
            raise ValueError(f"capacity: must be >= 1, got {capacity}")
        self.arrival_rate = arrival_rate
        self.departure_rate = departure_rate
        self.capacity = capacity
        lam, mu = arrival_rate, departure_rate
        if lam == 0.0:
            self.gamma = 0.0
        elif mu == 0.0 or lam == 1.0:
            # level ratio blows up; the chain absorbs at the top
            # (except the doubly degenerate lam = mu = 1 cycle, which
            # never climbs past level 1)
            self.gamma = 0.0 if (lam == 1.0 and mu == 1.0) else math.inf
        else:
            self.gamma = lam * (1.0 - mu) / ((1.0 - lam) * mu)
        _, self.busy, self.full = _pu_scalars(lam, mu, capacity)
        self._occupancy = None

    @property
    def occupancy(self) -> Tuple[float, ...]:
        if self._occupancy is None:
            self._occupancy = self._build_occupancy()
        return self._occupancy

    def _build_occupancy(self):
        lam, mu, n_p = self.arrival_rate, self.departure_rate, self.capacity
        if lam == 0.0:
            return (1.0,) + (0.0,) * n_p
        if mu == 0.0 or (lam == 1.0 and mu < 1.0):
            return (0.0,) * n_p + (1.0,)
        if lam == 1.0:  # mu == 1 here
            return (0.0, 1.0) + (0.0,) * (n_p - 1)
        gamma = lam * (1.0 - mu) / ((1.0 - lam) * mu)
        rho1 = lam / ((1.0 - lam) * mu)
        # unnormalized levels u_0 = 1, u_n = rho1 * gamma**(n-1); build
        # iteratively with periodic rescaling so gamma > 1 cannot
        # overflow even for million-entry vectors
        vals = [1.0, rho1]
        shift = 0.0  # log of the common factor already divided out
        cur = rho1
        for _ in range(n_p - 1):
            cur *= gamma
            if cur > 1e280:
                scale = cur
                vals = [v / scale for v in vals]
                shift += math.log(scale)
                cur = 1.0
            vals.append(cur)
        total = math.fsum(vals)
        return tuple(v / total for v in vals)


def pu_steady_state(arrival_rate: float, departure_rate: float,
                    capacity: int) -> PuSteadyState:
    """Stationary law of the primary queue for one departure rate."""
    return PuSteadyState(arrival_rate, departure_rate, capacity)


def pu_busy_probability(arrival_rate: float, departure_rate: float,
                        capacity: int) -> float:
    """P(queue nonempty at a slot start), without building the vector."""
    return _pu_scalars(arrival_rate, departure_rate, capacity)[1]


def pu_blocking_probability(arrival_rate: float, departure_rate: float,
                            capacity: int) -> float:
    """P(queue full at a slot start), the arrival-loss probability."""
    return _pu_scalars(arrival_rate, departure_rate, capacity)[2]


@lru_cache(maxsize=16384)
def min_departure_rate(arrival_rate: float, capacity: int,
                       loss_threshold: float) -> Optional[float]:
    """Smallest departure rate keeping the blocking below the threshold.

    Blocking decreases continuously in the departure rate, so a plain
    bisection on (0, 1] suffices.  Returns 0.0 when there is nothing
    to clear (no arrivals), and None when even a unit departure rate
    cannot push the blocking under ``loss_threshold``.
    """
    lam = arrival_rate
    if lam == 0.0:
        return 0.0
    if _pu_scalars(lam, 1.0, capacity)[2] > loss_threshold:
        return None
    lo, hi = 1e-9, 1.0
    if _pu_scalars(lam, lo, capacity)[2] <= loss_threshold:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # floats collapsed, done
            break
        if _pu_scalars(lam, mid, capacity)[2] > loss_threshold:
            lo = mid
        else:
            hi = mid
    return hi


def relay_departure_probs(policy: AccessPolicy, budget: LinkBudget) -> Tuple[float, ...]:
    """Per-level relay departure probabilities for occupied levels.

    Entry ``n - 1`` applies to buffer level ``n``: with probability
    ``probs[n]`` the phase is shared (success ``theta_sd_shared``),
    otherwise the relay gets the whole phase (success ``theta_sd``).
    """
    full, shared = budget.theta_sd, budget.theta_sd_shared
    return tuple(full - p * (full - shared) for p in policy.probs[1:])


@dataclass(frozen=True)
class RelaySteadyState:
    """Stationary law of the relay buffer at the end of the receiving phase."""

    occupancy: Tuple[float, ...]
    departure_probs: Tuple[float, ...]
    arrival_prob: float


def relay_steady_state(arrival_prob: float,
                       departure_probs: Sequence[float]) -> RelaySteadyState:
    """Birth-death solve of the relay buffer.

    The buffer gains at most one packet per slot (an overheard primary
    packet, probability ``arrival_prob``) and loses at most one (a
    successful relay transmission).  The detailed-balance ratio between
    adjacent levels gives a product form.  If some occupied level has a
    zero departure probability while arrivals continue, everything
    below that level drains away: the product form is restarted at the
    highest such level and only the segment above it keeps mass.
    """
    q = arrival_prob
    r = tuple(float(x) for x in departure_probs)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"arrival_prob: must lie in [0, 1], got {q}")
    for n, x in enumerate(r):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"departure_probs: entry {n} out of [0, 1], got {x}")
    vals = [1.0]
    for n in range(1, len(r) + 1):
        up = q if n == 1 else q * (1.0 - r[n - 2])
        down = (1.0 - q) * r[n - 1]
        if down == 0.0:
            if up == 0.0:
                # level n is unreachable and nothing above it can fill:
                # chain is truncated here
                vals.extend([0.0] * (len(r) + 1 - n))
                break
            # absorbing boundary: all mass ends at or above level n
            vals = [0.0] * len(vals) + [1.0]
            continue
        nxt = vals[-1] * up / down
        if nxt > 1e280:  # rescale before the product form overflows
            vals = [v / nxt for v in vals]
            nxt = 1.0
        vals.append(nxt)
    total = math.fsum(vals)
    occ = tuple(v / total for v in vals)
    return RelaySteadyState(occupancy=occ, departure_probs=r, arrival_prob=q)


def pu_departure_from_relay(budget: LinkBudget, relay: RelaySteadyState) -> float:
    """Primary departure probability given the relay's stationary state.

    A primary packet leaves either directly (receiving-phase success to
    the destination) or by capture at the secondary, which only counts
    as a departure if the relay buffer can eventually forward it: a
    full buffer that also fails to transmit this slot refuses the
    packet.
    """
    direct = budget.theta_pd
    capture = budget.theta_ps * (1.0 - budget.theta_pd)
    pi_full = relay.occupancy[-1]
    r_full = relay.departure_probs[-1]
    return direct + capture * (1.0 - pi_full * (1.0 - r_full))


@dataclass(frozen=True)
class PolicyEvaluation:
    mu_p: float
    mu_s: float
    relay_state: RelaySteadyState
    pu_state: PuSteadyState
    feasible: bool


def evaluate_policy(config: SystemConfig, policy: AccessPolicy,
                    budget: Optional[LinkBudget] = None) -> PolicyEvaluation:
    """Resolve the coupled primary/relay rates for a fixed policy.

    The primary departure rate and the relay buffer law determine each
    other, so we iterate: given mu_p, the primary busy probability
    fixes the relay arrival rate, the relay solve yields the buffer
    law, and the refusal correction yields a new mu_p.  The update is
    damped by one half and stops once the pre-damping residual drops
    below 1e-10.  The map is monotone with unit-bounded slope on a
    closed interval, so in practice this converges in tens of
    iterations; a 10000-iteration cap guards the pathological cases
    and raises FixedPointDiverged with the last iterate.
    """
    if policy.capacity != config.relay_queue_capacity:
        raise ValueError(
            f"probs: policy covers levels 0..{policy.capacity} but "
            f"relay_queue_capacity is {config.relay_queue_capacity}")
    b = budget if budget is not None else link_budget(config)
    lam = config.pu_arrival_rate
    n_p = config.pu_queue_capacity
    r = relay_departure_probs(policy, b)
    capture = b.theta_ps * (1.0 - b.theta_pd)

    mu = b.theta_pd + 0.5 * capture
    relay = None
    residual = math.inf
    for iteration in range(10000):
        q = pu_busy_probability(lam, mu, n_p) * capture
        relay = relay_steady_state(q, r)
        mu_next = pu_departure_from_relay(b, relay)
        residual = abs(mu_next - mu)
        if residual <= 1e-10:
            mu = mu_next
            break
        mu = mu + 0.5 * (mu_next - mu)
    else:
        raise FixedPointDiverged(mu, residual, 10000)

    shared = sum(pi_n * p_n for pi_n, p_n
                 in zip(relay.occupancy[1:], policy.probs[1:]))
    mu_s = b.theta_sr * relay.occupancy[0] + b.theta_sr_shared * shared

    pu = pu_steady_state(lam, mu, n_p)
    floor = min_departure_rate(lam, n_p, config.loss_threshold)
    feasible = floor is not None and mu >= floor - 1e-9
    return PolicyEvaluation(mu_p=mu, mu_s=mu_s, relay_state=relay,
                            pu_state=pu, feasible=feasible)
