"""Acceptance criteria, one recorded PASS/FAIL line each (see the summary)."""
import time

import numpy as np
import pytest

from sfcrel import (
    DivisorRule,
    brute_force_solve,
    build_model,
    build_penalty,
    chain_reliability_replicated,
    chain_reliability_simple,
    compute_reservations,
    compute_utilization,
    count_operations,
    evaluate_reliability,
    load_topology,
    penalty_eval,
    simulate_server_failure,
    verify_solution,
)
from sfcrel.cli import ExperimentConfig, _run
from sfcrel.evaluator import violated_families
from sfcrel.model import Mode
from sfcrel.network import compute_path_set
from sfcrel.reliability import exp_penalty

from helpers import (
    hand_scenario,
    line,
    paths_for,
    reroute_demand,
    retightened,
    reverse_function_order,
    skip_middle_function,
    small_random_instance,
    stage_one,
    topology_doc,
    triangle,
)
from sfcrel.solver import OPTIMAL, Solution, solve

# fixed 10-node scenario shared by criteria 3, 4, 5, 8 and 9
TEN_NODE = {
    "topology": "ring10",
    "generator": {"demand_count": [1, 3], "max_chains": 8},
    "f_max": 1,
    "seed": 2,
    "time_limit": 60.0,
}


def ten_node_run(tmp, **over):
    cfg = ExperimentConfig.from_dict({**TEN_NODE, "output": str(tmp), **over})
    code, files, state = _run(cfg)
    scenario, initial, results = state
    paths = compute_path_set(scenario.topology, [(c.src, c.dst) for c in scenario.chains], cfg.paths_per_chain)
    return code, files, scenario, paths, initial, results


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    return ten_node_run(tmp_path_factory.mktemp("ten"))


@pytest.fixture(scope="module")
def sweep_ntn(tmp_path_factory):
    return ten_node_run(tmp_path_factory.mktemp("ten_ntn"), ntn=True, alphas=[0.5], modes=["rep"])


def test_c1_worked_reliability_values(criterion):
    got = [
        chain_reliability_simple([0.96, 0.92, 0.89, 0.95]),
        chain_reliability_simple([0.96, 0.97, 0.96, 0.95]),
        chain_reliability_replicated([[0.96], [0.92, 0.97], [0.89, 0.96], [0.95]]),
        chain_reliability_replicated([[0.96], [0.92, 0.97], [0.98], [0.95]]),
    ]
    want = [0.747, 0.849, 0.906, 0.892]
    err = max(abs(g - w) for g, w in zip(got, want))
    ok = err <= 5e-4
    criterion(1, "worked reliability values", ok, f"got {[round(g, 4) for g in got]}, max err {err:.2e} (tol 5e-4)")
    assert ok


def test_c2_oracle_equivalence(criterion):
    start = time.perf_counter()
    worst, checked, bad, infeasible, seed = 0.0, 0, [], 0, -1
    while checked < 2 * 24:
        seed += 1
        sc = small_random_instance(seed)
        assert len(sc.topology.nodes) <= 4 and len(sc.chains) <= 2 and sc.params.f_max <= 1
        assert all(len(c.vnfs) <= 2 and len(c.demands) <= 2 for c in sc.chains)
        paths = paths_for(sc)
        first = solve(build_model(sc, paths, "initial", alpha=0.0))
        if first.status != OPTIMAL:
            # no reference placement; both sides must still agree it is infeasible
            infeasible += 1
            if brute_force_solve(sc, paths, "initial", alpha=0.0).status != first.status:
                bad.append((seed, "initial"))
            continue
        initial, _ = stage_one(sc, paths)
        for mode in ("rep", "rep-migr"):
            model = build_model(sc, paths, mode, initial)
            sol = solve(model)
            ref = brute_force_solve(sc, paths, mode, initial)
            diff = abs(sol.objective - ref.objective)
            worst = max(worst, diff)
            checked += 1
            if diff > 1e-6 or verify_solution(sol, model) or verify_solution(ref, model):
                bad.append((seed, mode))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 120.0
    criterion(2, "oracle equivalence", ok,
              f"{checked} solves on 24 feasible seeds (+{infeasible} infeasible, status agreed), "
              f"max |diff| {worst:.1e} (tol 1e-6), {len(bad)} mismatches, {elapsed:.1f}s (< 120s)")
    assert ok


def _corruption_families():
    out = {}
    sc = hand_scenario(line(3, capacity=1000, link_capacity=100), [("a", "c", 3, [10])], f_max=0)
    paths = paths_for(sc)
    model = build_model(sc, paths, "initial")
    base = Solution(OPTIMAL, mode="initial")
    base.placements = {(0, 0, 0), (1, 1, 0), (2, 2, 0)}
    base.usages = {(0, 0, 0, 0), (1, 0, 1, 0), (2, 0, 2, 0)}
    base.demand_paths, base.path_use = {(0, 0, 0)}, {(0, 0)}
    base = retightened(model, base)
    assert verify_solution(base, model) == []
    out["skipped function"] = violated_families(verify_solution(skip_middle_function(model, base), model))
    out["reversed order"] = violated_families(verify_solution(reverse_function_order(model, base, sc, paths), model))

    sc = hand_scenario(triangle(capacity=1000, link_capacity=100), [("a", "b", 1, [60]), ("a", "b", 1, [60])], f_max=1)
    paths = paths_for(sc)
    model = build_model(sc, paths, "initial")
    sol = solve(model)
    assert verify_solution(sol, model) == []
    bad = reroute_demand(model, sol, sc, paths, 1, 0, sol.demand_path(0, 0))
    out["overloaded link"] = violated_families(verify_solution(bad, model))
    return out


def test_c3_feasibility_self_check(criterion, sweep, sweep_ntn):
    dirty = []
    for label, run in (("plain", sweep), ("ntn", sweep_ntn)):
        _, _, scenario, paths, initial, results = run
        for (alpha, mode), sol in results.items():
            m = Mode.INITIAL if mode == "no-protection" else Mode(mode)
            sc = scenario.with_params(alpha=alpha, ntn_enabled=label == "ntn")
            if m is Mode.INITIAL:
                model = build_model(sc, paths, m, alpha=0.0)
            else:
                model = build_model(sc, paths, m, initial)
            if verify_solution(sol, model):
                dirty.append((label, alpha, mode))
    expected = {
        # dropping a usage also breaks the rows that read it
        "skipped function": {"demand_function_once", "function_on_path", "function_order"},
        "reversed order": {"function_order"},
        "overloaded link": {"link_capacity"},
    }
    got = _corruption_families()
    mism = {k: sorted(v) for k, v in got.items() if v != expected[k]}
    ok = not dirty and not mism
    criterion(3, "feasibility self-check", ok,
              f"{sum(len(r[5]) for r in (sweep, sweep_ntn))} scenario solves clean={not dirty}; "
              + "; ".join(f"{k} -> {sorted(v)}" for k, v in got.items()))
    assert ok


def test_c4_alpha_trend(criterion, sweep):
    _, _, scenario, paths, initial, results = sweep
    counts = {a: count_operations(results[(a, "rep")], initial).replicas for a in (1.0, 0.9, 0.5, 0.1)}
    status = {a: results[(a, "rep")].status for a in counts}
    ok = counts[0.9] >= counts[0.5] >= counts[0.1] and counts[1.0] > counts[0.1]
    criterion(4, "alpha trend of replica count", ok, f"rep replicas by alpha {counts}, statuses {sorted(set(status.values()))}")
    assert ok


def test_c5_reliability_dominance(criterion, sweep):
    _, _, scenario, paths, initial, results = sweep
    sc = scenario.with_params(alpha=0.9)
    rel = {m: np.array(evaluate_reliability(results[(0.9, m)], sc).per_chain) for m in ("no-protection", "rep", "rep-migr")}
    means = {m: float(v.mean()) for m, v in rel.items()}
    gap_rep = rel["rep"] - rel["no-protection"]
    gap_rm = rel["rep-migr"] - rel["no-protection"]
    ok = (
        means["rep-migr"] >= means["rep"] >= means["no-protection"]
        and bool((gap_rep > 0).any())
        and bool((gap_rm > 0).any())
    )
    criterion(5, "reliability dominance at alpha 0.9", ok,
              f"mean R rep-migr {means['rep-migr']:.6f} >= rep {means['rep']:.6f} >= none {means['no-protection']:.6f}; "
              f"chains improved: rep {(gap_rep > 0).sum()}, rep-migr {(gap_rm > 0).sum()} of {len(gap_rep)}")
    assert ok


def test_c6_ntn_reservation_reproduction(criterion):
    fan = topology_doc("abcde", [("a", "b"), ("a", "c"), ("a", "e"), ("b", "d"), ("c", "d"), ("e", "d")], 100.0, 1000.0)
    sc = hand_scenario(load_topology(fan), [("a", "d", 1, [25, 25, 50])], f_max=2)
    sol = Solution(OPTIMAL, mode="rep")
    sol.placements = {(1, 0, 0), (2, 0, 0), (4, 0, 0)}
    sol.usages = {(1, 0, 0, 0), (2, 1, 0, 0), (4, 2, 0, 0)}
    sol.demand_paths = {(0, 0, 0), (0, 1, 1), (0, 2, 2)}
    sol.path_use = {(0, 0), (0, 1), (0, 2)}
    res = compute_reservations(sol, sc, DivisorRule.SURVIVOR)
    exact = res == {(1, 0, 0): 0.25, (2, 0, 0): 0.25, (4, 0, 0): 0.125}
    failures = [simulate_server_failure(sol, sc, x, DivisorRule.SURVIVOR).reservation_ok for x in range(5)]
    ok = exact and all(failures)
    criterion(6, "N-to-N reservation reproduction", ok,
              f"reservations (share of C) {[res[k] for k in sorted(res)]} (want [0.25, 0.25, 0.125] exactly); "
              f"reservation_ok per single failure {failures}")
    assert ok


def test_c7_penalty_construction(criterion):
    pwl = build_penalty()
    grid = np.linspace(0.0, 1.0, 1000)
    end0, end1 = abs(penalty_eval(pwl, 0.0)), abs(penalty_eval(pwl, 1.0) - 1.0)
    convex = all(a < b for a, b in zip(pwl.slopes, pwl.slopes[1:]))
    dominance = float((penalty_eval(pwl, grid) - exp_penalty(grid)).min())
    ok = len(pwl) == 5 and end0 <= 1e-12 and end1 <= 1e-12 and convex and dominance >= -1e-12
    criterion(7, "penalty construction", ok,
              f"{len(pwl)} pieces, |p(0)| {end0:.1e}, |p(1)-1| {end1:.1e} (tol 1e-12), slopes increasing {convex}, "
              f"min(p-g) on 1000 points {dominance:.2e}")
    assert ok


def _mean_server_util(sol, scenario, paths):
    return float(np.mean([u.total for u in compute_utilization(sol, scenario, paths).servers.values()]))


def test_c8_ntn_overhead(criterion, sweep, sweep_ntn):
    _, _, scenario, paths, initial, results = sweep
    _, _, sc_ntn, _, initial_ntn, results_ntn = sweep_ntn
    plain = _mean_server_util(results[(0.5, "rep")], scenario.with_params(alpha=0.5), paths)
    ntn = _mean_server_util(results_ntn[(0.5, "rep")], sc_ntn.with_params(alpha=0.5, ntn_enabled=True), paths)
    reps = (count_operations(results[(0.5, "rep")], initial).replicas,
            count_operations(results_ntn[(0.5, "rep")], initial_ntn).replicas)
    ok = ntn >= plain
    criterion(8, "N-to-N raises mean server utilization", ok,
              f"alpha 0.5 rep: mean u_x with N-to-N {ntn:.6f} >= without {plain:.6f}; replicas {reps[1]} vs {reps[0]}")
    assert ok


def test_c9_determinism(criterion, sweep, tmp_path):
    code, files, *_ = sweep
    again, files2, *_ = ten_node_run(tmp_path)
    csvs = [(a, b) for a, b in zip(files, files2) if a.suffix == ".csv"]
    same = [a.read_bytes() == b.read_bytes() for a, b in csvs]
    ok = code == again == 0 and len(csvs) == 5 and all(same)
    criterion(9, "deterministic reruns", ok, f"{sum(same)}/{len(csvs)} CSV files byte-identical across two full runs")
    assert ok
