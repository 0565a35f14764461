"""Shared builders for the test suite."""
from __future__ import annotations

import copy

from sfcrel import (
    CostParams,
    GeneratorConfig,
    ServiceChain,
    VNFSpec,
    build_model,
    compute_path_set,
    generate_scenario,
    load_topology,
    solve,
    verify_solution,
)
from sfcrel.model import InitialPlacement
from sfcrel.service import Scenario


def topology_doc(nodes, links, capacity=100.0, link_capacity=100.0, reliabilities=None, directed=False):
    reliabilities = reliabilities or [0.95] * len(nodes)
    return {
        "name": "test",
        "nodes": [
            {"id": n, "servers": [{"id": f"pm-{n}", "capacity": capacity, "reliability": r}]}
            for n, r in zip(nodes, reliabilities)
        ],
        "links": [
            {"id": f"{a}{b}", "src": a, "dst": b, "capacity": link_capacity, **({"directed": True} if directed else {})}
            for a, b in links
        ],
    }


def triangle(capacity=100.0, link_capacity=100.0, reliabilities=(0.9, 0.95, 0.99)):
    return load_topology(topology_doc("abc", [("a", "b"), ("b", "c"), ("a", "c")], capacity, link_capacity, list(reliabilities)))


def line(n=4, capacity=100.0, link_capacity=100.0, reliabilities=None):
    names = "abcdefghij"[:n]
    return load_topology(topology_doc(names, list(zip(names, names[1:])), capacity, link_capacity, reliabilities))


def square(capacity=100.0, link_capacity=100.0, reliabilities=(0.9, 0.93, 0.96, 0.99)):
    return load_topology(
        topology_doc("abcd", [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a"), ("a", "c")], capacity, link_capacity, list(reliabilities))
    )


def hand_scenario(topo, chains, **params):
    """Scenario from (src, dst, n_vnfs, demands) tuples."""
    built = [
        ServiceChain(f"s{i}", a, b, tuple(VNFSpec(f"f{j}") for j in range(n)), tuple(float(d) for d in demands))
        for i, (a, b, n, demands) in enumerate(chains)
    ]
    return Scenario(topo, built, CostParams(**params))


def paths_for(scenario, k=None):
    k = k if k is not None else scenario.params.f_max + 1
    return compute_path_set(scenario.topology, [(c.src, c.dst) for c in scenario.chains], k)


def small_random_instance(seed):
    """Seeded oracle-sized instance: <= 4 nodes, <= 2 chains, <= 2 VNFs, <= 2 demands, F_MAX = 1."""
    topo = triangle() if seed % 2 == 0 else square()
    params = CostParams(alpha=[0.9, 0.5, 1.0, 0.1][seed % 4], f_max=1)
    gen = GeneratorConfig(demand_count=(1, 2), bandwidth=(5, 30), chain_length=2, max_chains=2)
    return generate_scenario(topo, params, gen, seed)


def checked_solve(model, **kw):
    """Solve and insist the result passes the independent feasibility check."""
    sol = solve(model, **kw)
    if sol.has_values:
        bad = verify_solution(sol, model)
        assert bad == [], f"solver returned an infeasible point: {bad[:5]}"
    return sol


def stage_one(scenario, paths):
    sol = checked_solve(build_model(scenario, paths, "initial", alpha=0.0))
    assert sol.status == "Optimal", f"stage 1 ended {sol.status}"
    return InitialPlacement.from_placements(sol.placements), sol


def retightened(model, solution):
    """Recompute the continuous cost variables for a hand-edited solution."""
    x = model.tighten(model.encode(solution))
    return model.decode(x, solution.status)


def _usage_of(solution, s, lam):
    return {v: x for (x, l2, v, s2) in solution.usages if s2 == s and l2 == lam}


def _rebuild_placements(sol):
    sol.placements = {(x, v, s) for (x, lam, v, s) in sol.usages}
    return sol


def skip_middle_function(model, solution, s=0, lam=0):
    """Drop demand ``lam``'s use of function 1 (the second of three)."""
    sol = copy.deepcopy(solution)
    sol.usages = {u for u in sol.usages if not (u[1] == lam and u[2] == 1 and u[3] == s)}
    return retightened(model, _rebuild_placements(sol))


def reverse_function_order(model, solution, scenario, paths, s=0, lam=0):
    """Place demand ``lam``'s functions in reverse order along its path.

    Needs the forward assignment to use at least two distinct servers.
    """
    sol = copy.deepcopy(solution)
    used = _usage_of(sol, s, lam)
    n = len(scenario.chains[s].vnfs)
    servers = [used[v] for v in range(n)]
    assert len(set(servers)) > 1, "forward assignment is colocated; nothing to reverse"
    sol.usages = {u for u in sol.usages if not (u[1] == lam and u[3] == s)}
    for v in range(n):
        sol.usages.add((servers[n - 1 - v], lam, v, s))
    return retightened(model, _rebuild_placements(sol))


def reroute_demand(model, solution, scenario, paths, s, lam, p):
    """Move demand ``lam`` of chain ``s`` onto path ``p`` keeping a valid function chain.

    The demand copies the servers of another demand already on ``p`` when
    there is one, so no placement is added.
    """
    from sfcrel.model import path_positions

    sol = copy.deepcopy(solution)
    peers = [l2 for (s2, l2, p2) in sol.demand_paths if s2 == s and p2 == p and l2 != lam]
    n = len(scenario.chains[s].vnfs)
    if peers:
        template = _usage_of(sol, s, peers[0])
        servers = [template[v] for v in range(n)]
    else:
        servers = [path_positions(scenario, paths[s][p])[0][0]] * n
    sol.demand_paths = {d for d in sol.demand_paths if not (d[0] == s and d[1] == lam)}
    sol.demand_paths.add((s, lam, p))
    sol.path_use = {(s2, p2) for (s2, _, p2) in sol.demand_paths}
    sol.usages = {u for u in sol.usages if not (u[1] == lam and u[3] == s)}
    for v in range(n):
        sol.usages.add((servers[v], lam, v, s))
    return retightened(model, _rebuild_placements(sol))
