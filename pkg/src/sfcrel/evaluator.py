"""Exact post-solve evaluation of solutions.

Everything here works from the binary decisions of a :class:`Solution`
(placements, usages, routings); nothing depends on the linearized costs
except the ``k_chain`` column echoed for comparison.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import InitialPlacement, ModelInstance
from .network import PathSet
from .reliability import chain_reliability_replicated
from .service import Scenario
from .solver import Solution

FEAS_TOL = 1e-6


class DivisorRule(str, enum.Enum):
    """How a replica's reservation is scaled from its largest peer load."""

    FMAX = "fmax"  # divide by F_MAX, as in the ILP
    SURVIVOR = "survivor"  # divide by the number of replicas left after one failure


@dataclass
class ServerUtilization:
    load: float
    overhead: float
    reservation: float

    @property
    def total(self) -> float:
        return self.load + self.overhead + self.reservation


@dataclass
class UtilizationReport:
    servers: dict[int, ServerUtilization]
    links: dict[int, float]  # busiest direction
    link_directions: dict[tuple[int, int], float]
    instances: dict[tuple[int, int, int], float]  # (x, v, s) -> share of C_x

    def mean_server(self) -> float:
        return float(np.mean([u.total for u in self.servers.values()])) if self.servers else 0.0

    def mean_link(self) -> float:
        return float(np.mean(list(self.links.values()))) if self.links else 0.0


@dataclass
class ReliabilityReport:
    per_chain: list[float]
    k_chain: dict[int, float] = field(default_factory=dict)

    def mean(self) -> float:
        return float(np.mean(self.per_chain)) if self.per_chain else 1.0


@dataclass(frozen=True)
class CountsReport:
    replicas: int
    migrations: int


@dataclass
class FailureImpactReport:
    server: int
    rule: DivisorRule
    failed_chains: list[int]
    surviving: list[bool]
    post_utilization: dict[int, float]
    absorbed: dict[tuple[int, int, int], float]  # (y, v, s) -> share of C_y moved onto y
    reserved: dict[tuple[int, int, int], float]
    reservation_ok: bool

    @property
    def chains_failed(self) -> int:
        return len(self.failed_chains)

    @property
    def max_post_utilization(self) -> float:
        return max(self.post_utilization.values()) if self.post_utilization else 0.0


@dataclass(frozen=True)
class ConstraintViolation:
    label: str
    family: str
    slack: float


def instance_loads(solution: Solution, scenario: Scenario) -> dict[tuple[int, int, int], float]:
    """Processed traffic (capacity units) of every (server, function, chain)."""
    out: dict[tuple[int, int, int], float] = {}
    for x, lam, v, s in solution.usages:
        chain = scenario.chains[s]
        key = (x, v, s)
        out[key] = out.get(key, 0.0) + chain.demands[lam] * chain.vnfs[v].load_ratio
    return out


def compute_utilization(solution: Solution, scenario: Scenario, paths: PathSet | None = None) -> UtilizationReport:
    """Server and link utilization of a solution.

    Server utilization = traffic load + overhead (``E_r`` times the load
    plus ``1/(C_x E_r)`` per hosted instance) + N-to-N reservations taken
    from the solution. Link utilization needs ``paths``; without it links
    are reported idle.
    """
    topo = scenario.topology
    e_r = scenario.params.e_replication
    instances = {
        key: load / topo.servers[key[0]].capacity for key, load in instance_loads(solution, scenario).items()
    }
    servers = {x: ServerUtilization(0.0, 0.0, 0.0) for x in range(len(topo.servers))}
    for (x, v, s), u in sorted(instances.items()):
        servers[x].load += u
        servers[x].overhead += e_r * u
    if e_r > 0:
        for x, v, s in sorted(solution.placements):
            servers[x].overhead += 1.0 / (topo.servers[x].capacity * e_r)
    for (x, v, s), d in sorted(solution.reservations.items()):
        servers[x].reservation += d
    directions: dict[tuple[int, int], float] = {}
    if paths is not None:
        for s, lam, p in sorted(solution.demand_paths):
            bw = scenario.chains[s].demands[lam]
            for li, direction in paths[s][p].arcs:
                directions[(li, direction)] = directions.get((li, direction), 0.0) + bw / topo.links[li].capacity
    links = {li: 0.0 for li in range(len(topo.links))}
    for (li, _), u in directions.items():
        links[li] = max(links[li], u)
    return UtilizationReport(servers, links, directions, instances)


def replica_groups(solution: Solution, scenario: Scenario, s: int) -> list[list[int]]:
    groups = [[] for _ in scenario.chains[s].vnfs]
    for x, v, s2 in solution.placements:
        if s2 == s:
            groups[v].append(x)
    return [sorted(g) for g in groups]


def evaluate_reliability(solution: Solution, scenario: Scenario) -> ReliabilityReport:
    topo = scenario.topology
    per_chain = []
    for s, chain in enumerate(scenario.chains):
        groups = replica_groups(solution, scenario, s)
        for v, g in enumerate(groups):
            if not g:
                raise ValueError(f"chain {chain.id!r} function {v} has no placement")
        per_chain.append(chain_reliability_replicated([[topo.servers[x].reliability for x in g] for g in groups]))
    return ReliabilityReport(per_chain, dict(solution.k_chain))


def count_operations(solution: Solution, initial: InitialPlacement) -> CountsReport:
    per_function: dict[tuple[int, int], int] = {}
    for x, v, s in solution.placements:
        per_function[(s, v)] = per_function.get((s, v), 0) + 1
    replicas = sum(max(0, n - 1) for n in per_function.values())
    migrations = sum(1 for (s, v), x in initial.assignment.items() if (x, v, s) not in solution.placements)
    return CountsReport(replicas, migrations)


def compute_reservations(
    solution: Solution, scenario: Scenario, rule: DivisorRule | str = DivisorRule.SURVIVOR
) -> dict[tuple[int, int, int], float]:
    """N-to-N reservation of every replica as a share of its own server.

    A replica reserves its largest peer's load divided by ``F_MAX`` or by
    the number of replicas surviving one failure.
    """
    rule = DivisorRule(rule)
    topo = scenario.topology
    loads = instance_loads(solution, scenario)
    out = {}
    for s, chain in enumerate(scenario.chains):
        for v, group in enumerate(replica_groups(solution, scenario, s)):
            if len(group) < 2:
                continue
            div = scenario.params.f_max if rule is DivisorRule.FMAX else len(group) - 1
            if div <= 0:
                raise ValueError("F_MAX rule needs f_max >= 1")
            for x in group:
                peak = max(loads.get((z, v, s), 0.0) for z in group if z != x)
                out[(x, v, s)] = peak / div / topo.servers[x].capacity
    return out


def simulate_server_failure(
    solution: Solution,
    scenario: Scenario,
    server: int | str,
    divisor_rule: DivisorRule | str = DivisorRule.SURVIVOR,
    redirect: str = "split",
) -> FailureImpactReport:
    """Fail one server and redirect its traffic to the surviving replicas.

    ``redirect="split"`` shares the failed replica's load equally; ``"single"``
    sends it all to the survivor with the largest reservation. Absorbed load
    first fills the reservation; only the excess raises utilization.
    """
    topo = scenario.topology
    if isinstance(server, str):
        try:
            server = topo.server_index(server)
        except KeyError:
            raise ValueError(f"unknown server {server!r}") from None
    if not 0 <= server < len(topo.servers):
        raise ValueError(f"unknown server index {server}")
    if redirect not in ("split", "single"):
        raise ValueError(f"unknown redirect policy {redirect!r}")
    rule = DivisorRule(divisor_rule)
    reserved = compute_reservations(solution, scenario, rule)
    loads = instance_loads(solution, scenario)
    base = compute_utilization(solution, scenario)

    surviving = []
    failed = []
    absorbed: dict[tuple[int, int, int], float] = {}
    for s, chain in enumerate(scenario.chains):
        alive = True
        for v, group in enumerate(replica_groups(solution, scenario, s)):
            if server not in group:
                continue
            rest = [x for x in group if x != server]
            if not rest:
                alive = False
                continue
            moved = loads.get((server, v, s), 0.0)
            if redirect == "split":
                shares = {y: moved / len(rest) for y in rest}
            else:
                y = max(rest, key=lambda z: (reserved.get((z, v, s), 0.0), -z))
                shares = {y: moved}
            for y, amount in shares.items():
                absorbed[(y, v, s)] = absorbed.get((y, v, s), 0.0) + amount / topo.servers[y].capacity
        surviving.append(alive)
        if not alive:
            failed.append(s)

    post = {}
    for x, u in base.servers.items():
        if x == server:
            continue
        res_x = sum(d for (y, v, s), d in reserved.items() if y == x)
        total = u.load + u.overhead + res_x
        for (y, v, s), a in absorbed.items():
            if y == x:
                total += max(0.0, a - reserved.get((y, v, s), 0.0))
        post[x] = total
    ok = all(a <= reserved.get(key, 0.0) + 1e-9 for key, a in absorbed.items())
    return FailureImpactReport(server, rule, failed, surviving, post, absorbed, reserved, ok)


def verify_solution(solution: Solution, model: ModelInstance, tol: float = FEAS_TOL) -> list[ConstraintViolation]:
    """Every row (and bound) the solution breaks by more than ``tol``."""
    out: list[ConstraintViolation] = []
    vs = model.vars
    for idx, chosen, fam in (
        (vs.f_place, solution.placements, "f_place"),
        (vs.f_use, solution.usages, "f_use"),
        (vs.t_path, solution.path_use, "t_path"),
        (vs.t_demand, solution.demand_paths, "t_demand"),
    ):
        for key in sorted(chosen):
            if key not in idx:
                out.append(ConstraintViolation(f"undeclared:{fam}{key}", "undeclared", -1.0))
    x = model.encode(solution)
    lower = np.asarray(model.lower)
    upper = np.asarray(model.upper)
    for i in np.flatnonzero((x < lower - tol) | (x > upper + tol)):
        out.append(ConstraintViolation(f"bound:{model.var_names[i]}", "bounds", float(min(x[i] - lower[i], upper[i] - x[i]))))
    if model.rows:
        A, lo, hi = model.matrix()
        act = A @ x
        for i, r in enumerate(model.rows):
            slack = min(act[i] - lo[i], hi[i] - act[i])
            if slack < -tol:
                out.append(ConstraintViolation(r.name, r.family, float(slack)))
    return out


def violated_families(violations) -> set[str]:
    return {v.family for v in violations}
