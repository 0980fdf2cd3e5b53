"""Release gate: ten numbered criteria over the whole toolkit.

Each criterion gets one or more tests named ``test_c<k><letter>_``;
the terminal summary hook in conftest folds these into a single
PASS/FAIL line per criterion.  Tests print what they measured, so a
failing claim carries its own evidence.  Claims are asserted as
stated even where the measured behaviour is known to diverge; those
tests are expected to fail and say so in their printout.
"""

import dataclasses
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from _oracles import (GridEvaluator, brute_force_lp, relay_transition_matrix,
                      stationary)
from cogrelay import (AccessPolicy, SystemConfig, cpt_policy, evaluate_policy,
                      link_budget, min_departure_rate, optimal_policy,
                      simulate, st_policy)
from cogrelay import lp_core
from cogrelay.experiments_cli import load_spec, run_sweep
from cogrelay.policy_opt import feasible_mu_p_range
from cogrelay.queue_analytics import pu_blocking_probability, relay_steady_state


def _curve_text(label, pairs):
    body = "  ".join(f"{x:g}:{'-' if v is None else f'{v:.7f}'}"
                     for x, v in pairs)
    return f"{label}: {body}"


# -- C1: slot simulation against the analytic model -------------------------

@pytest.fixture(scope="module")
def sim_agreement_batch():
    """30 runs: 10 random configs x {all-ones, all-zeros, searched}.

    When the search reports the primary cannot be protected there is no
    searched policy to compare, so a fixed half-open policy stands in;
    agreement between model and simulation is just as meaningful there.
    """
    rng = np.random.default_rng(20260822)
    rows = []
    t0 = time.perf_counter()
    run = 0
    for i in range(10):
        lam = float(rng.uniform(0.0, 0.8))
        n_p = int(rng.choice([5, 50, 100]))
        n_s = int(rng.choice([1, 5, 10]))
        cfg = replace(SystemConfig(), pu_arrival_rate=lam,
                      pu_queue_capacity=n_p, relay_queue_capacity=n_s)
        policies = [("ones", AccessPolicy((1.0,) * (n_s + 1))),
                    ("zeros", AccessPolicy((1.0,) + (0.0,) * n_s))]
        lp = optimal_policy(cfg)
        if lp.status == "ok":
            policies.append(("lp", lp.policy))
        else:
            policies.append(("half", AccessPolicy((1.0,) + (0.5,) * n_s)))
        for name, policy in policies:
            ev = evaluate_policy(cfg, policy)
            s = simulate(cfg, policy, n_slots=1_000_000, seed=1000 + run)
            occ = np.array(s.relay_queue_histogram, dtype=float) / s.slots
            tv = 0.5 * float(np.abs(occ - np.array(
                ev.relay_state.occupancy)).sum())
            rows.append({
                "cfg": i, "lam": lam, "n_p": n_p, "n_s": n_s, "policy": name,
                "gap_mu_s": abs(s.measured_mu_s - ev.mu_s), "tv": tv,
            })
            run += 1
    return {"rows": rows, "elapsed": time.perf_counter() - t0}


def _print_c1(rows):
    for r in rows:
        print(f"cfg{r['cfg']} lam={r['lam']:.3f} n_p={r['n_p']:>3} "
              f"n_s={r['n_s']:>2} {r['policy']:>5}: "
              f"gap_mu_s={r['gap_mu_s']:.5f} tv={r['tv']:.5f}")


def test_c1a_simulated_throughput_tracks_model(sim_agreement_batch):
    rows = sim_agreement_batch["rows"]
    _print_c1(rows)
    print(f"elapsed: {sim_agreement_batch['elapsed']:.1f}s")
    assert sim_agreement_batch["elapsed"] <= 60.0
    assert len(rows) == 30
    worst = max(r["gap_mu_s"] for r in rows)
    print(f"worst gap_mu_s: {worst:.5f} (target 0.01)")
    assert worst <= 0.01


def test_c1b_simulated_occupancy_tracks_model(sim_agreement_batch):
    # The model evaluates each queue against the other's stationary
    # law; the simulation runs the joint chain, whose correlation the
    # decoupled occupancy cannot fully reproduce at every config.
    rows = sim_agreement_batch["rows"]
    _print_c1(rows)
    bad = [r for r in rows if r["tv"] > 0.01]
    for r in bad:
        print(f"exceeds 0.01: cfg{r['cfg']} {r['policy']} tv={r['tv']:.5f}")
    worst = max(r["tv"] for r in rows)
    print(f"worst tv: {worst:.5f} (target 0.01)")
    assert worst <= 0.01


# -- C2: product form against a direct linear solve -------------------------

def test_c2_product_form_matches_linear_solve():
    rng = np.random.default_rng(422)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n_s = int(rng.integers(1, 21))
        q = float(rng.uniform(0.01, 0.99))
        r = tuple(float(x) for x in rng.uniform(0.01, 1.0, n_s))
        occ = np.array(relay_steady_state(q, r).occupancy)
        ref = stationary(relay_transition_matrix(q, r))
        worst = max(worst, float(np.abs(occ - ref).max()))
    elapsed = time.perf_counter() - t0
    print(f"worst deviation {worst:.3e} over 100 chains, {elapsed:.2f}s")
    assert worst <= 1e-10
    assert elapsed <= 1.0


# -- C3: protection floor bisection ------------------------------------------

def test_c3a_floor_sits_exactly_on_the_loss_threshold():
    rng = np.random.default_rng(33)
    accepted = 0
    worst = 0.0
    while accepted < 50:
        lam = float(rng.uniform(0.05, 0.95))
        n_p = int(rng.integers(2, 121))
        eps = float(rng.uniform(0.005, 0.15))
        floor = min_departure_rate(lam, n_p, eps)
        if floor is None:
            continue
        accepted += 1
        worst = max(worst, abs(pu_blocking_probability(lam, floor, n_p) - eps))
    print(f"worst |blocking(floor) - eps| = {worst:.3e} over 50 triples")
    assert worst <= 1e-9


def test_c3b_blocking_shrinks_with_service_rate():
    for lam, n_p in ((0.3, 10), (0.6, 50), (0.9, 5)):
        mus = np.linspace(1e-3, 1.0, 1000)
        vals = [pu_blocking_probability(lam, float(mu), n_p) for mu in mus]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:])), (lam, n_p)


# -- C4: exhaustive policy grid against the LP sweep ------------------------

def _grid_oracle(cfg):
    b = link_budget(cfg)
    floor = min_departure_rate(cfg.pu_arrival_rate, cfg.pu_queue_capacity,
                               cfg.loss_threshold)
    return GridEvaluator(b, cfg.pu_arrival_rate, cfg.pu_queue_capacity, floor)


def test_c4a_vectorized_oracle_matches_the_evaluator():
    rng = np.random.default_rng(44)
    for n_s in (1, 2):
        cfg = replace(SystemConfig(), relay_queue_capacity=n_s)
        oracle = _grid_oracle(cfg)
        P = rng.uniform(0.0, 1.0, (100, n_s))
        mu_s, mu_p, _ = oracle.evaluate(P)
        for j in range(100):
            ref = evaluate_policy(cfg, AccessPolicy((1.0,) + tuple(P[j])))
            assert abs(mu_s[j] - ref.mu_s) <= 1e-9
            assert abs(mu_p[j] - ref.mu_p) <= 1e-9


def test_c4b_no_grid_policy_beats_the_lp():
    t0 = time.perf_counter()
    for n_s in (1, 2):
        cfg = replace(SystemConfig(), relay_queue_capacity=n_s)
        oracle = _grid_oracle(cfg)
        axis = np.linspace(0.0, 1.0, 1001)
        if n_s == 1:
            P = axis[:, None]
        else:
            P = np.array(np.meshgrid(axis, axis)).reshape(2, -1).T
        mu_s, _, feas = oracle.evaluate(P)
        grid_best = float(mu_s[feas].max())
        lp = optimal_policy(cfg)
        print(f"n_s={n_s}: grid best {grid_best:.9f} over {len(P)} policies, "
              f"lp {lp.mu_s:.9f}, diff {lp.mu_s - grid_best:+.2e}")
        assert abs(lp.mu_s - grid_best) <= 2e-3
    elapsed = time.perf_counter() - t0
    print(f"elapsed: {elapsed:.1f}s")
    assert elapsed <= 300.0


# -- C5: restricted searches against the LP ---------------------------------

@pytest.fixture(scope="module")
def arrival_sweep_three_methods():
    rows = []
    for lam in np.linspace(0.0, 0.98, 50):
        cfg = replace(SystemConfig(), pu_arrival_rate=float(lam))
        rows.append((float(lam), optimal_policy(cfg), cpt_policy(cfg),
                     st_policy(cfg)))
    return rows


def test_c5_restricted_searches_never_win_and_stay_close(
        arrival_sweep_three_methods):
    flags = []
    for lam, lp, cpt, st in arrival_sweep_three_methods:
        if lp.status != "ok":
            assert cpt.status != "ok" and st.status != "ok"
            continue
        assert lp.mu_s >= max(cpt.mu_s, st.mu_s) - 1e-6, lam
        if lp.mu_s <= 0.0:
            continue
        for name, r in (("cpt", cpt), ("st", st)):
            gap = (lp.mu_s - r.mu_s) / lp.mu_s
            if gap > 0.10:
                flags.append(f"FLAG lam={lam:.2f}: {name} sits {gap:.2%} "
                             f"below the exact search")
    for line in flags:
        print(line)
    print(f"{len(flags)} grid points beyond the 10% closeness target "
          f"(flagged, not failed)")


# -- C6: arrival-rate sweep shape and feasibility boundary ------------------

def test_c6_throughput_falls_and_cuts_off_where_predicted(tmp_path):
    values = " ".join(f"{0.02 * k:.2f}" for k in range(50))
    path = tmp_path / "arrival.spec"
    path.write_text("sweep_variable = lambda_p\n"
                    f"sweep_values = {values}\n"
                    "methods = lp\n"
                    f"output_path = {tmp_path / 'arrival.csv'}\n")
    spec, errors = load_spec(str(path))
    assert errors == []
    t0 = time.perf_counter()
    out = Path(run_sweep(spec))
    elapsed = time.perf_counter() - t0
    rows = [line.split(",") for line in out.read_text().splitlines()[2:]]
    assert len(rows) == 50
    mu_s = [float(r[2]) for r in rows]
    feas = [r[5] == "true" for r in rows]
    print(f"elapsed {elapsed:.1f}s; first infeasible index "
          f"{feas.index(False) if False in feas else None}")
    assert elapsed <= 30.0
    assert all(b <= a + 1e-9 for a, b in zip(mu_s, mu_s[1:]))
    assert True in feas and False in feas
    for r, ok in zip(rows, feas):
        cfg = replace(SystemConfig(), pu_arrival_rate=float(r[0]))
        assert ok == (feasible_mu_p_range(cfg) is not None), r[0]
        if not ok:
            assert float(r[2]) == 0.0


# -- C7: relay buffer size under weak and strong direct links ---------------

@pytest.fixture(scope="module")
def buffer_size_curves():
    curves = {}
    for label, gain in (("weak", 0.01), ("strong", 0.1)):
        vals = []
        for n_s in range(1, 21):
            cfg = replace(SystemConfig(), gain_pd=gain, pu_arrival_rate=0.5,
                          pu_queue_capacity=100, relay_queue_capacity=n_s)
            r = optimal_policy(cfg, grid_points=60)
            vals.append(r.mu_s if r.status == "ok" else None)
        curves[label] = vals
    return curves


def test_c7a_weak_direct_link_gains_from_buffer(buffer_size_curves):
    vals = buffer_size_curves["weak"]
    print(_curve_text("weak direct link", list(enumerate(vals, start=1))))
    feas = [v for v in vals if v is not None]
    assert feas
    first = vals.index(feas[0])
    assert all(v is not None for v in vals[first:])
    assert all(b >= a - 1e-9 for a, b in zip(feas, feas[1:]))
    assert feas[-1] - feas[0] >= 0.01  # a real climb, not jitter


def test_c7b_weak_direct_link_eventually_declines(buffer_size_curves):
    # measured: the curve saturates instead; the climb flattens toward
    # a ceiling and never turns downward on this range
    vals = buffer_size_curves["weak"]
    print(_curve_text("weak direct link", list(enumerate(vals, start=1))))
    feas = [v for v in vals if v is not None]
    k = int(np.argmax(feas))
    print(f"peak at position {k} of {len(feas) - 1} (last)")
    assert k < len(feas) - 1, "throughput never declines on this range"
    assert feas[-1] < feas[k] - 1e-6


def test_c7c_strong_direct_link_prefers_the_smallest_buffer(
        buffer_size_curves):
    vals = buffer_size_curves["strong"]
    print(_curve_text("strong direct link", list(enumerate(vals, start=1))))
    assert all(v is not None for v in vals)
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


# -- C8: phase-split and time-share sweeps ----------------------------------

_FIG_BASE = dict(pu_arrival_rate=0.5, pu_queue_capacity=50, gain_pd=0.01)


@pytest.fixture(scope="module")
def receive_fraction_curve():
    out = []
    for beta in np.linspace(0.0, 1.0, 21):
        cfg = replace(SystemConfig(), beta=float(beta), **_FIG_BASE)
        r = optimal_policy(cfg)
        out.append((float(beta), r.mu_s if r.status == "ok" else None))
    return out


@pytest.fixture(scope="module")
def time_share_curve():
    out = []
    for alpha in np.linspace(0.0, 1.0, 21):
        cfg = replace(SystemConfig(), alpha=float(alpha), **_FIG_BASE)
        r = optimal_policy(cfg)
        out.append((float(alpha), r.mu_s if r.status == "ok" else None))
    return out


def test_c8a_receive_fraction_zero_rise_fall(receive_fraction_curve):
    print(_curve_text("beta", receive_fraction_curve))
    vals = [v for _, v in receive_fraction_curve]
    feasible_idx = [i for i, v in enumerate(vals) if v is not None]
    assert feasible_idx
    lo, hi = feasible_idx[0], feasible_idx[-1]
    assert lo > 0, "no infeasible region at low beta"
    assert hi < len(vals) - 1, "no infeasible region at high beta"
    assert feasible_idx == list(range(lo, hi + 1))
    window = vals[lo:hi + 1]
    peak = int(np.argmax(window))
    assert window[peak] > 0.3
    assert all(b >= a - 5e-3 for a, b in zip(window[:peak + 1],
                                             window[1:peak + 1]))
    assert all(b <= a + 5e-3 for a, b in zip(window[peak:],
                                             window[peak + 1:]))


def test_c8b_time_share_peaks_between_the_extremes(time_share_curve):
    print(_curve_text("alpha", time_share_curve))
    vals = [v for _, v in time_share_curve]
    assert all(v is not None for v in vals)
    peak = int(np.argmax(vals))
    assert 0 < peak < len(vals) - 1
    assert vals[peak] >= vals[0] + 0.05
    assert vals[peak] >= vals[-1] + 0.05
    assert all(b <= a + 5e-3 for a, b in zip(vals[peak:], vals[peak + 1:]))


def test_c8c_time_share_rises_cleanly_to_its_peak(time_share_curve):
    # measured: the exact search's envelope wiggles below alpha ~ 0.25
    # (stable under grid refinement, so a real feature of the envelope:
    # at small alpha the search exploits near-free sharing to suppress
    # the relay instead of using it).  The restricted searches do rise
    # cleanly; the claim is asserted for the envelope as stated.
    print(_curve_text("alpha (exact)", time_share_curve))
    st_curve = []
    for alpha, _ in time_share_curve:
        cfg = replace(SystemConfig(), alpha=alpha, **_FIG_BASE)
        r = st_policy(cfg)
        st_curve.append((alpha, r.mu_s if r.status == "ok" else None))
    print(_curve_text("alpha (threshold search)", st_curve))
    vals = [v for _, v in time_share_curve]
    peak = int(np.argmax(vals))
    drops = [(a, b) for a, b in zip(vals[:peak + 1], vals[1:peak + 1])
             if b < a - 5e-3]
    for a, b in drops:
        print(f"pre-peak drop {a:.7f} -> {b:.7f} ({b - a:+.4f})")
    assert not drops, "envelope is not monotone below its peak"


# -- C9: simplex against vertex enumeration ---------------------------------

def test_c9_simplex_agrees_with_vertex_enumeration():
    rng = np.random.default_rng(1234)
    t0 = time.perf_counter()
    counts = {"optimal": 0, "infeasible": 0}
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        k_eq = int(rng.integers(0, min(3, n)))
        k_in = int(rng.integers(0, 4))
        x0 = rng.uniform(0.1, 0.9, n)
        a_eq = rng.normal(size=(k_eq, n))
        a_in = rng.normal(size=(k_in, n))
        b_eq = a_eq @ x0
        b_in = a_in @ x0 + rng.uniform(-0.6, 0.5, k_in)
        c = rng.normal(size=n)
        problem = lp_core.LpProblem(
            objective=tuple(c),
            eq_constraints=(tuple(map(tuple, a_eq)), tuple(b_eq)),
            ineq_constraints=(tuple(map(tuple, a_in)), tuple(b_in)),
            bounds=((0.0, 1.0),) * n)
        sol = lp_core.solve(problem)
        ref, feasible = brute_force_lp(c, a_eq, b_eq, a_in, b_in,
                                       np.zeros(n), np.ones(n))
        if sol.status == "optimal":
            assert feasible
            worst = max(worst, abs(sol.objective_value - ref))
        else:
            assert sol.status == "infeasible"
            assert not feasible
        counts[sol.status] += 1
    elapsed = time.perf_counter() - t0
    print(f"{counts['optimal']} optimal / {counts['infeasible']} infeasible, "
          f"worst objective gap {worst:.2e}, {elapsed:.1f}s")
    assert counts["optimal"] > 0 and counts["infeasible"] > 0
    assert worst <= 1e-8


# -- C10: byte-level reproducibility ----------------------------------------

def test_c10_repeated_sweeps_are_byte_identical(tmp_path):
    body = ("relay_queue_capacity = 5\n"
            "sweep_variable = lambda_p\n"
            "sweep_values = 0.1 0.3 0.5 0.7\n"
            "methods = lp st\n"
            "simulate = true\n"
            "n_slots = 50000\n"
            "warmup_slots = 2000\n"
            "seeds = 11 12\n"
            "grid_points = 60\n")
    path = tmp_path / "repro.spec"
    path.write_text(body + f"output_path = {tmp_path / 'first.csv'}\n")
    spec, errors = load_spec(str(path))
    assert errors == []
    first = Path(run_sweep(spec)).read_bytes()
    second = Path(run_sweep(dataclasses.replace(
        spec, output_path=str(tmp_path / "second.csv")))).read_bytes()
    assert first == second
    header = first.decode().splitlines()[1]
    assert header.endswith("sim_mu_s,sim_mu_p,gap_mu_s,gap_mu_p")
