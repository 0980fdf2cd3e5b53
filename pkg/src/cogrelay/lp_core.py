"""Small dense linear-program solver.

Bounded-variable primal simplex, two phases, Bland's rule throughout so
every solve is deterministic and cycle free.  Built for the policy
problems in this package: a few dozen variables, equality rows from
balance equations, inequality rows from probability budgets, and box
bounds on everything.  Dense numpy factorizations are plenty at that
size; no sparse machinery, no external solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = ["LpProblem", "LpSolution", "solve", "verify"]

_AT_LO, _AT_UP, _BASIC = 0, 1, 2

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class LpProblem:
    """maximize objective @ x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, bounds.

    ``eq_constraints`` and ``ineq_constraints`` are (matrix, rhs) pairs;
    either may be empty.  ``bounds`` is one (lo, hi) pair per variable,
    with ``inf`` allowed on the upper side.  Every variable needs a
    finite lower or upper bound (no free variables).
    """

    objective: np.ndarray
    eq_constraints: Tuple[np.ndarray, np.ndarray]
    ineq_constraints: Tuple[np.ndarray, np.ndarray]
    bounds: Tuple[Tuple[float, float], ...]

    def __init__(self, objective, eq_constraints=None, ineq_constraints=None,
                 bounds=None):
        c = np.asarray(objective, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("objective: need a nonempty 1-d coefficient vector")
        n = c.size

        def norm(pair, name):
            if pair is None:
                return np.zeros((0, n)), np.zeros(0)
            a, b = pair
            a = np.asarray(a, dtype=float).reshape(-1, n)
            b = np.asarray(b, dtype=float).reshape(-1)
            if a.shape[0] != b.shape[0]:
                raise ValueError(f"{name}: matrix rows and rhs length differ")
            return a, b

        eq = norm(eq_constraints, "eq_constraints")
        ub = norm(ineq_constraints, "ineq_constraints")
        if bounds is None:
            bounds = ((0.0, np.inf),) * n
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != n:
            raise ValueError("bounds: need one (lo, hi) pair per variable")
        for j, (lo, hi) in enumerate(bounds):
            if lo > hi:
                raise ValueError(f"bounds: entry {j} has lo > hi")
            if not (np.isfinite(lo) or np.isfinite(hi)):
                raise ValueError(f"bounds: entry {j} is free; unsupported")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_constraints", eq)
        object.__setattr__(self, "ineq_constraints", ub)
        object.__setattr__(self, "bounds", bounds)

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    values: Optional[np.ndarray]
    objective_value: Optional[float]


def _simplex(a, b, cost, lo, up, basis, status, allowed):
    """Run primal simplex to optimality on the current phase.

    ``basis`` holds one column index per row; ``status`` marks every
    column lower-bound, upper-bound or basic; ``allowed`` masks columns
    permitted to enter (artificials are barred in phase two).  Mutates
    basis/status in place and returns the final basic values, or None
    when the phase is unbounded.
    """
    m, n = a.shape
    for _ in range(50000):
        bmat = a[:, basis]
        xv = np.where(status == _AT_UP, up, lo)
        xv[basis] = 0.0
        x_basic = np.linalg.solve(bmat, b - a @ xv)
        y = np.linalg.solve(bmat.T, cost[basis])
        reduced = cost - y @ a

        entering = -1
        direction = 0
        # Bland: smallest eligible index, so ties can never cycle
        for j in range(n):
            if status[j] == _BASIC or not allowed[j]:
                continue
            if status[j] == _AT_LO and reduced[j] < -_COST_TOL:
                entering, direction = j, +1
                break
            if status[j] == _AT_UP and reduced[j] > _COST_TOL:
                entering, direction = j, -1
                break
        if entering < 0:
            return x_basic

        w = np.linalg.solve(bmat, a[:, entering])
        # candidate steps: (step, variable index, row, new status of leaver)
        cands = []
        span = up[entering] - lo[entering]
        if np.isfinite(span):
            cands.append((span, entering, -1, -1))
        for i in range(m):
            wi = w[i] * direction
            if wi > _PIVOT_TOL:
                room = x_basic[i] - lo[basis[i]]
                if np.isfinite(room):
                    cands.append((max(room, 0.0) / wi, basis[i], i, _AT_LO))
            elif wi < -_PIVOT_TOL:
                room = up[basis[i]] - x_basic[i]
                if np.isfinite(room):
                    cands.append((max(room, 0.0) / -wi, basis[i], i, _AT_UP))
        if not cands:
            return None  # nothing blocks the step: unbounded ray
        t = min(c[0] for c in cands)
        # among (near-)blocking candidates pick the smallest variable
        # index, again Bland
        blockers = [c for c in cands if c[0] <= t + 1e-12]
        _, var, row, leave_status = min(blockers, key=lambda c: c[1])
        if row < 0:
            # entering variable runs to its other bound, basis unchanged
            status[entering] = _AT_UP if direction > 0 else _AT_LO
            continue
        basis[row] = entering
        status[entering] = _BASIC
        status[var] = leave_status
    raise RuntimeError("simplex iteration limit hit; problem is ill posed")


def solve(problem: LpProblem) -> LpSolution:
    """Two-phase solve.  Deterministic for identical inputs."""
    a_eq, b_eq = problem.eq_constraints
    a_ub, b_ub = problem.ineq_constraints
    n = problem.n_vars
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub

    if m == 0:
        # pure box problem: optimize each coordinate independently
        x = np.empty(n)
        for j, (l, h) in enumerate(problem.bounds):
            cj = problem.objective[j]
            x[j] = h if cj > 0.0 else l if cj < 0.0 else (l if np.isfinite(l) else h)
            if not np.isfinite(x[j]):
                return LpSolution(status="unbounded", values=None,
                                  objective_value=None)
        return LpSolution(status="optimal", values=x,
                          objective_value=float(problem.objective @ x))

    # standard form: real variables, then one slack per inequality row
    a = np.zeros((m, n + m_ub + m))
    a[:m_eq, :n] = a_eq
    a[m_eq:, :n] = a_ub
    a[m_eq:, n:n + m_ub] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    n_real = n + m_ub

    lo = np.zeros(n_real + m)
    up = np.full(n_real + m, np.inf)
    for j, (l, h) in enumerate(problem.bounds):
        lo[j], up[j] = l, h

    status = np.full(n_real + m, _AT_LO, dtype=np.int8)
    for j in range(n_real):
        if not np.isfinite(lo[j]):
            status[j] = _AT_UP

    # artificial columns carry the sign of the start residual so their
    # values begin nonnegative
    xv = np.where(status[:n_real] == _AT_UP, up[:n_real], lo[:n_real])
    resid = b - a[:, :n_real] @ xv
    for i in range(m):
        a[i, n_real + i] = 1.0 if resid[i] >= 0.0 else -1.0

    basis = np.arange(n_real, n_real + m)
    status[basis] = _BASIC
    allowed = np.ones(n_real + m, dtype=bool)

    phase1_cost = np.zeros(n_real + m)
    phase1_cost[n_real:] = 1.0
    x_basic = _simplex(a, b, phase1_cost, lo, up, basis, status, allowed)
    if x_basic is None:
        raise RuntimeError("phase one cannot be unbounded")
    art_total = sum(x_basic[i] for i in range(m) if basis[i] >= n_real)
    if art_total > _FEAS_TOL:
        return LpSolution(status="infeasible", values=None, objective_value=None)

    # pivot leftover artificials out where a solid column exists; pick
    # the largest pivot, and refuse near-singular ones outright (a
    # 1e-9-scale pivot would poison every later factorization), in
    # which case the artificial stays basic, pinned to zero
    for i in range(m):
        if basis[i] < n_real:
            continue
        bmat = a[:, basis]
        row = np.linalg.solve(bmat.T, np.eye(m)[i]) @ a[:, :n_real]
        pick = -1
        best = 1e-7
        for j in range(n_real):
            if status[j] != _BASIC and abs(row[j]) > best:
                pick, best = j, abs(row[j])
        if pick >= 0:
            status[basis[i]] = _AT_LO
            basis[i] = pick
            status[pick] = _BASIC
    lo[n_real:] = 0.0
    up[n_real:] = 0.0
    allowed[n_real:] = False

    phase2_cost = np.zeros(n_real + m)
    phase2_cost[:n] = -problem.objective  # maximize via negated minimize
    x_basic = _simplex(a, b, phase2_cost, lo, up, basis, status, allowed)
    if x_basic is None:
        return LpSolution(status="unbounded", values=None, objective_value=None)

    x = np.where(status == _AT_UP, up, lo)
    x[~np.isfinite(x)] = 0.0
    x[basis] = x_basic
    values = x[:n].copy()
    # a degenerate basis must fail loudly rather than masquerade as an
    # optimal vertex
    if _worst_violation(problem, values) > 1e-6:
        raise RuntimeError("solve produced an infeasible basis; "
                           "problem is numerically degenerate")
    return LpSolution(status="optimal", values=values,
                      objective_value=float(problem.objective @ values))


def _worst_violation(problem, x) -> float:
    a_eq, b_eq = problem.eq_constraints
    a_ub, b_ub = problem.ineq_constraints
    worst = 0.0
    if a_eq.size:
        worst = float(np.max(np.abs(a_eq @ x - b_eq)))
    if a_ub.size:
        worst = max(worst, float(np.max(a_ub @ x - b_ub)))
    for j, (l, h) in enumerate(problem.bounds):
        worst = max(worst, l - x[j], x[j] - h)
    return worst


def verify(problem: LpProblem, solution: LpSolution) -> dict:
    """Residual report for a claimed optimal solution.

    Returns the largest equality violation, inequality violation and
    bound violation, plus the gap between the stored objective value
    and the objective recomputed from the values.  ``ok`` summarizes
    whether everything sits within the solver's feasibility tolerance.
    """
    if solution.status != "optimal" or solution.values is None:
        return {"ok": False, "status": solution.status}
    x = solution.values
    a_eq, b_eq = problem.eq_constraints
    a_ub, b_ub = problem.ineq_constraints
    eq_violation = float(np.max(np.abs(a_eq @ x - b_eq))) if a_eq.size else 0.0
    ineq_violation = float(np.max(a_ub @ x - b_ub)) if a_ub.size else 0.0
    ineq_violation = max(ineq_violation, 0.0)
    bound_violation = 0.0
    for j, (l, h) in enumerate(problem.bounds):
        bound_violation = max(bound_violation, l - x[j], x[j] - h)
    objective_gap = abs(float(problem.objective @ x) - solution.objective_value)
    ok = (eq_violation <= _FEAS_TOL and ineq_violation <= _FEAS_TOL
          and bound_violation <= _FEAS_TOL and objective_gap <= _FEAS_TOL)
    return {
        "ok": bool(ok),
        "status": solution.status,
        "max_eq_violation": eq_violation,
        "max_ineq_violation": ineq_violation,
        "max_bound_violation": bound_violation,
        "objective_gap": objective_gap,
    }
