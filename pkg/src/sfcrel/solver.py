"""MILP backends, solution records and the exhaustive oracle."""
from __future__ import annotations

import itertools
import json
import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from . import _kernels
from .model import InitialPlacement, Mode, ModelInstance, export_lp, parse_var_name, path_positions, reliability_normalizer
from .network import PathSet
from .reliability import PiecewiseLinear, default_penalties, penalty_eval
from .service import Scenario

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
TIMED_OUT = "TimedOut"
STATUSES = (OPTIMAL, FEASIBLE, INFEASIBLE, TIMED_OUT)

DEFAULT_TIME_LIMIT = 600.0
DEFAULT_GAP = 1e-6
ROUND_TOL = 1e-6
BACKEND_ENV = "SFCREL_BACKEND"


class SolverError(RuntimeError):
    pass


class BackendUnavailable(SolverError):
    pass


class SearchSpaceTooLarge(SolverError):
    pass


@dataclass
class Solution:
    status: str
    objective: float | None = None
    placements: set = field(default_factory=set)  # (x, v, s)
    usages: set = field(default_factory=set)  # (x, demand, v, s)
    path_use: set = field(default_factory=set)  # (s, p)
    demand_paths: set = field(default_factory=set)  # (s, demand, p)
    k_chain: dict = field(default_factory=dict)
    k_server: dict = field(default_factory=dict)
    k_link: dict = field(default_factory=dict)
    k_migration: dict = field(default_factory=dict)
    reservations: dict = field(default_factory=dict)  # (x, v, s) -> fraction
    solve_time: float = 0.0
    mode: str = Mode.INITIAL.value

    @property
    def has_values(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE) or (self.status == TIMED_OUT and bool(self.placements))

    def replicas_of(self, s: int, v: int) -> list[int]:
        return sorted(x for x, v2, s2 in self.placements if v2 == v and s2 == s)

    def demand_path(self, s: int, lam: int) -> int | None:
        for s2, l2, p in self.demand_paths:
            if s2 == s and l2 == lam:
                return p
        return None

    def variables(self) -> dict[str, float]:
        """Exchange-format variable map (binaries at 1 and all continuous values)."""
        out: dict[str, float] = {}
        for s, p in sorted(self.path_use):
            out[f"t_s{s}_p{p}"] = 1.0
        for s, lam, p in sorted(self.demand_paths):
            out[f"td_s{s}_l{lam}_p{p}"] = 1.0
        for x, v, s in sorted(self.placements):
            out[f"f_x{x}_v{v}_s{s}"] = 1.0
        for x, lam, v, s in sorted(self.usages):
            out[f"fu_x{x}_l{lam}_v{v}_s{s}"] = 1.0
        for li, val in sorted(self.k_link.items()):
            out[f"kl_{li}"] = val
        for x, val in sorted(self.k_server.items()):
            out[f"kx_{x}"] = val
        for s, val in sorted(self.k_chain.items()):
            out[f"ks_{s}"] = val
        for (s, v), val in sorted(self.k_migration.items()):
            out[f"km_s{s}_v{v}"] = val
        for (x, v, s), val in sorted(self.reservations.items()):
            out[f"d_x{x}_v{v}_s{s}"] = val
        return out

    def to_document(self) -> dict:
        return {"status": self.status, "objective": self.objective, "vars": self.variables()}

    @classmethod
    def from_document(cls, doc: dict, mode: str | None = None) -> "Solution":
        sol = cls(status=doc["status"], objective=doc.get("objective"), mode=mode or doc.get("mode", "initial"))
        sets = {"t_path": sol.path_use, "t_demand": sol.demand_paths, "f_place": sol.placements, "f_use": sol.usages}
        dicts = {
            "k_link": sol.k_link,
            "k_server": sol.k_server,
            "k_chain": sol.k_chain,
            "k_migration": sol.k_migration,
            "d_reserve": sol.reservations,
        }
        for name, value in doc.get("vars", {}).items():
            family, key = parse_var_name(name)
            if family in sets:
                if float(value) > 0.5:
                    sets[family].add(key)
            else:
                dicts[family][key] = float(value)
        return sol


# -- backends --------------------------------------------------------------


class SolverBackend:
    """Contract: solve a model within a time budget and relative gap.

    ``solve_values`` returns ``(status, x, objective)`` where ``x`` is a
    value vector aligned with ``model.var_names`` (or ``None``). ``Optimal``
    is only reported when optimality is proven within ``gap``.
    """

    name = "abstract"

    def solve_values(self, model: ModelInstance, time_limit: float, gap: float):
        raise NotImplementedError


class HighsBackend(SolverBackend):
    """In-process HiGHS through :func:`scipy.optimize.milp`."""

    name = "highs"

    def solve_values(self, model, time_limit, gap):
        c = model.objective_vector()
        integrality = np.asarray(model.binary, dtype=np.uint8)
        bounds = Bounds(np.asarray(model.lower, dtype=float), np.asarray(model.upper, dtype=float))
        constraints = []
        if model.rows:
            A, lo, hi = model.matrix()
            constraints.append(LinearConstraint(A, lo, hi))
        res = milp(
            c,
            integrality=integrality,
            bounds=bounds,
            constraints=constraints,
            options={"time_limit": float(time_limit), "mip_rel_gap": float(gap), "disp": False},
        )
        if res.status == 0:
            return OPTIMAL, res.x, res.fun
        if res.status == 1:
            return TIMED_OUT, res.x, (res.fun if res.x is not None else None)
        if res.status == 2:
            return INFEASIBLE, None, None
        raise SolverError(f"HiGHS failed: {res.message}")


class CommandBackend(SolverBackend):
    """External solver reached through files.

    The command is called as ``<command> MODEL.lp SOLUTION.json`` with the
    budget in ``SFCREL_TIME_LIMIT`` / ``SFCREL_MIP_GAP``. It must write
    ``{"status": str, "objective": number, "vars": {name: value}}``.
    """

    name = "command"

    def __init__(self, command: str | None = None):
        command = command or os.environ.get(BACKEND_ENV)
        if not command:
            raise BackendUnavailable(f"no backend command given and {BACKEND_ENV} is unset")
        self.command = shlex.split(command)

    def solve_values(self, model, time_limit, gap):
        with tempfile.TemporaryDirectory(prefix="sfcrel-") as tmp:
            lp = FsPath(tmp) / "model.lp"
            out = FsPath(tmp) / "solution.json"
            lp.write_text(export_lp(model), encoding="utf-8")
            env = dict(os.environ, SFCREL_TIME_LIMIT=str(time_limit), SFCREL_MIP_GAP=str(gap))
            try:
                proc = subprocess.run(
                    [*self.command, str(lp), str(out)], env=env, capture_output=True, text=True, timeout=time_limit + 60
                )
            except FileNotFoundError as exc:
                raise BackendUnavailable(str(exc)) from None
            except subprocess.TimeoutExpired:
                return TIMED_OUT, None, None
            if proc.returncode != 0 or not out.exists():
                raise SolverError(f"backend command failed ({proc.returncode}): {proc.stderr.strip()}")
            doc = json.loads(out.read_text(encoding="utf-8"))
        status = doc.get("status")
        if status not in STATUSES:
            raise SolverError(f"backend returned unknown status {status!r}")
        if status == INFEASIBLE or not doc.get("vars"):
            return status, None, None
        x = np.zeros(model.n_vars)
        for name, value in doc["vars"].items():
            x[model.index_of(name)] = float(value)
        return status, x, doc.get("objective")


def get_backend(name: str = "highs") -> SolverBackend:
    if name == "highs":
        return HighsBackend()
    if name == "command":
        return CommandBackend()
    raise BackendUnavailable(f"unknown backend {name!r}")


def solve(
    model: ModelInstance,
    backend: SolverBackend | None = None,
    time_limit: float = DEFAULT_TIME_LIMIT,
    gap: float = DEFAULT_GAP,
) -> Solution:
    """Solve ``model``; binaries are rounded and costs re-tightened afterwards."""
    backend = backend or HighsBackend()
    t0 = time.perf_counter()
    status, x, _ = backend.solve_values(model, time_limit, gap)
    elapsed = time.perf_counter() - t0
    if x is None:
        return Solution(status=status, solve_time=elapsed, mode=model.mode.value)
    x = np.asarray(x, dtype=float).copy()
    binary = np.asarray(model.binary)
    frac = np.abs(x[binary] - np.round(x[binary]))
    if frac.size and frac.max() > ROUND_TOL:
        log.warning("binary values off by up to %.2e before rounding", frac.max())
    x[binary] = np.round(x[binary])
    x = model.tighten(x)
    return model.decode(x, status=status, solve_time=elapsed)


# -- exhaustive oracle -------------------------------------------------------


@dataclass
class _ChainOption:
    demands: tuple  # per demand: (path, servers per function)
    placements: tuple  # per function: sorted servers
    reservations: dict
    k_chain: float | None
    k_migration: dict


def _demand_options(scenario: Scenario, paths: PathSet, s: int) -> list[tuple[int, tuple[int, ...]]]:
    n_funcs = len(scenario.chains[s].vnfs)
    out = []
    for p, path in enumerate(paths[s]):
        flat = [(pos, x) for pos, servers in enumerate(path_positions(scenario, path)) for x in servers]

        def rec(acc, min_pos, p=p, flat=flat):
            if len(acc) == n_funcs:
                out.append((p, tuple(acc)))
                return
            for pos, x in flat:
                if pos >= min_pos:
                    acc.append(x)
                    rec(acc, pos)
                    acc.pop()

        rec([], 0)
    return out


def brute_force_solve(
    scenario: Scenario,
    paths: PathSet,
    mode: Mode | str = Mode.INITIAL,
    initial: InitialPlacement | None = None,
    penalties: tuple[PiecewiseLinear, PiecewiseLinear] | None = None,
    alpha: float | None = None,
    max_assignments: int = 10**7,
) -> Solution:
    """Exact optimum by enumerating every routing/usage assignment.

    Each demand picks a path and, for every function, a server on that path
    whose position never precedes the previous function's. Placements and
    active paths follow from the usages; costs and reservations take their
    tight values. Ties go to the first assignment in enumeration order
    (chain 0 first, then demands in order, then (path, servers)
    lexicographically).
    """
    mode = Mode(mode)
    params = scenario.params
    alpha = params.alpha if alpha is None else alpha
    if mode is not Mode.INITIAL and initial is None:
        raise ValueError(f"mode {mode.value!r} needs an initial placement")
    if initial is not None:
        missing = [(s, v) for s, c in enumerate(scenario.chains) for v in range(len(c.vnfs)) if (s, v) not in initial.assignment]
        if missing:
            raise ValueError(f"initial placement misses (chain, function) {missing[0]}")
    ntn = params.ntn_enabled and mode is not Mode.INITIAL
    if ntn and params.f_max == 0:
        raise ValueError("N-to-N reservation needs f_max >= 1")
    y_pen, z_pen = penalties or default_penalties()
    topo = scenario.topology
    n_chains, n_srv, n_lnk = len(scenario.chains), len(topo.servers), len(topo.links)
    t0 = time.perf_counter()

    per_demand = [_demand_options(scenario, paths, s) for s in range(n_chains)]
    space = 1
    for s, chain in enumerate(scenario.chains):
        space *= len(per_demand[s]) ** len(chain.demands)
    if space > max_assignments:
        raise SearchSpaceTooLarge(f"{space} assignments exceed the guard of {max_assignments}")

    e_r, e_m = params.e_replication, params.e_migration
    server_rows, link_rows, consts, options = [], [], [], []
    offsets = [0]
    for s, chain in enumerate(scenario.chains):
        norm = reliability_normalizer(scenario, s)
        n_funcs = len(chain.vnfs)
        for combo in itertools.product(per_demand[s], repeat=len(chain.demands)):
            active = {p for p, _ in combo}
            if mode is Mode.INITIAL:
                if len(active) != 1:
                    continue
            elif len(active) > params.f_max + 1:
                continue
            placed = [sorted({servers[v] for _, servers in combo}) for v in range(n_funcs)]
            if any(len(placed[v]) > (len(active) if chain.vnfs[v].replicable else 1) for v in range(n_funcs)):
                continue
            if mode is Mode.REPLICATION_ONLY and any(
                initial.assignment[(s, v)] not in placed[v] for v in range(n_funcs)
            ):
                continue
            srv = np.zeros(n_srv)
            lnk = np.zeros((n_lnk, 2))
            used_load = [dict() for _ in range(n_funcs)]  # v -> {x: raw load fraction}
            for lam, (p, servers) in enumerate(combo):
                bw = chain.demands[lam]
                for v, x in enumerate(servers):
                    load = bw * chain.vnfs[v].load_ratio
                    srv[x] += load * (1.0 + e_r) / topo.servers[x].capacity
                    used_load[v][x] = used_load[v].get(x, 0.0) + load / topo.servers[x].capacity
                for li, direction in paths[s][p].arcs:
                    lnk[li, direction] += bw / topo.links[li].capacity
            if e_r > 0:
                for v in range(n_funcs):
                    for x in placed[v]:
                        srv[x] += 1.0 / (topo.servers[x].capacity * e_r)
            reservations = {}
            if ntn:
                for v in range(n_funcs):
                    for x in placed[v]:
                        peers = [used_load[v][z] for z in placed[v] if z != x]
                        d = max(peers) / params.f_max if peers else 0.0
                        if d > 0:
                            reservations[(x, v, s)] = d
                            srv[x] += d
            const = 0.0
            k_chain = None
            k_mig = {}
            if mode is not Mode.INITIAL:
                w = sum(topo.servers[x].reliability for v in range(n_funcs) for x in placed[v]) / norm
                k_chain = max(0.0, penalty_eval(z_pen, min(w, 1.0)))
                const += alpha / n_chains * k_chain
            if mode is Mode.REPLICATION_MIGRATION:
                for v in range(n_funcs):
                    k_mig[(s, v)] = 0.0 if initial.assignment[(s, v)] in placed[v] else e_m
                const += (1.0 - alpha) / scenario.n_functions * sum(k_mig.values())
            server_rows.append(srv)
            link_rows.append(lnk)
            consts.append(const)
            options.append(_ChainOption(combo, tuple(tuple(p) for p in placed), reservations, k_chain, k_mig))
        offsets.append(len(options))

    counts = np.diff(offsets)
    if n_chains == 0 or np.any(counts == 0):
        return Solution(status=INFEASIBLE, solve_time=time.perf_counter() - t0, mode=mode.value)
    server_arr = np.array(server_rows)
    link_arr = np.array(link_rows).reshape(len(options), n_lnk, 2)
    slopes = np.asarray(y_pen.slopes)
    intercepts = np.asarray(y_pen.intercepts)
    w_server = (1.0 - alpha) / n_srv
    w_link = params.beta / n_lnk if n_lnk else 0.0
    costs = _kernels.joint_costs(
        server_arr, link_arr, np.asarray(consts), np.asarray(offsets, dtype=np.int64), slopes, intercepts, w_server, w_link
    )
    best = _kernels.first_minimum(costs)
    if best < 0:
        return Solution(status=INFEASIBLE, solve_time=time.perf_counter() - t0, mode=mode.value)

    digits = np.unravel_index(best, tuple(int(c) for c in counts))
    chosen = [options[offsets[c] + int(d)] for c, d in enumerate(digits)]
    su = sum(server_arr[offsets[c] + int(d)] for c, d in enumerate(digits))
    lu = sum(link_arr[offsets[c] + int(d)] for c, d in enumerate(digits))
    sol = Solution(status=OPTIMAL, mode=mode.value)
    for s, opt in enumerate(chosen):
        for lam, (p, servers) in enumerate(opt.demands):
            sol.demand_paths.add((s, lam, p))
            sol.path_use.add((s, p))
            for v, x in enumerate(servers):
                sol.usages.add((x, lam, v, s))
        for v, servers in enumerate(opt.placements):
            for x in servers:
                sol.placements.add((x, v, s))
        sol.reservations.update(opt.reservations)
        if opt.k_chain is not None:
            sol.k_chain[s] = opt.k_chain
        sol.k_migration.update(opt.k_migration)
    for x in range(n_srv):
        sol.k_server[x] = max(0.0, penalty_eval(y_pen, min(su[x], 1.0)))
    for li in range(n_lnk):
        sol.k_link[li] = max(0.0, penalty_eval(y_pen, min(lu[li].max(), 1.0)))
    sol.objective = (
        alpha / n_chains * sum(sol.k_chain.values())
        + w_server * sum(sol.k_server.values())
        + (1.0 - alpha) / scenario.n_functions * sum(sol.k_migration.values())
        + w_link * sum(sol.k_link.values())
    )
    if not math.isclose(sol.objective, float(costs[best]), rel_tol=1e-9, abs_tol=1e-12):
        raise SolverError("oracle objective reconstruction mismatch")
    sol.solve_time = time.perf_counter() - t0
    return sol
