"""Integer linear program for VNF placement, replication and migration.

Constraint rows carry a family label:

=====================  ==========================================================
family                 meaning
=====================  ==========================================================
reliability_cost       k_s above every piece of the reliability penalty
server_cost            k_x above every piece of the utilization penalty
link_cost              k_l above every piece, for each used direction
server_capacity        load + overhead + reservation of a server <= 1
ntn_reservation        N-to-N reserve on x covers a share of every peer's load
link_capacity          traffic on each link direction <= capacity
migration_cost         k_v = E_m when the original server lost the function
pinning                original placement kept (replication-only mode)
path_count             1 <= active paths <= F_MAX + 1 (== 1 for initial mode)
replica_bound          placements of a function <= active paths
demand_routing         each demand uses exactly one path
path_activation        a path is active iff some demand uses it
function_on_path       a routed demand meets every function on its path
demand_function_once   each demand uses each function on exactly one server
placement_usage        a function is placed iff some demand uses it there
function_order         functions are visited in chain order along the path
=====================  ==========================================================
"""
from __future__ import annotations

import enum
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .network import PathSet
from .reliability import PiecewiseLinear, default_penalties
from .service import Scenario


class Mode(str, enum.Enum):
    INITIAL = "initial"
    REPLICATION_ONLY = "rep"
    REPLICATION_MIGRATION = "rep-migr"


FAMILIES = (
    "reliability_cost",
    "server_cost",
    "link_cost",
    "server_capacity",
    "ntn_reservation",
    "link_capacity",
    "migration_cost",
    "pinning",
    "path_count",
    "replica_bound",
    "demand_routing",
    "path_activation",
    "function_on_path",
    "demand_function_once",
    "placement_usage",
    "function_order",
)

# continuous variables made tight by these families, in dependency order
TIGHTENING_ORDER = ("ntn_reservation", "migration_cost", "server_cost", "link_cost", "reliability_cost")


class ModelError(ValueError):
    pass


@dataclass
class InitialPlacement:
    """The server of every (chain, function) after the first stage."""

    assignment: dict[tuple[int, int], int]

    def indicator(self, x: int, v: int, s: int) -> int:
        return int(self.assignment.get((s, v)) == x)

    @classmethod
    def from_placements(cls, placements) -> "InitialPlacement":
        assignment: dict[tuple[int, int], int] = {}
        for x, v, s in sorted(placements):
            if (s, v) in assignment:
                raise ModelError(f"chain {s} function {v} placed twice; initial placement has no replicas")
            assignment[(s, v)] = x
        return cls(assignment)

    def to_list(self) -> list[list[int]]:
        return [[x, v, s] for (s, v), x in sorted(self.assignment.items())]

    @classmethod
    def from_list(cls, rows) -> "InitialPlacement":
        return cls({(int(s), int(v)): int(x) for x, v, s in rows})


@dataclass
class VariableSpace:
    t_path: dict[tuple[int, int], int] = field(default_factory=dict)
    t_demand: dict[tuple[int, int, int], int] = field(default_factory=dict)
    f_place: dict[tuple[int, int, int], int] = field(default_factory=dict)
    f_use: dict[tuple[int, int, int, int], int] = field(default_factory=dict)
    k_link: dict[int, int] = field(default_factory=dict)
    k_server: dict[int, int] = field(default_factory=dict)
    k_chain: dict[int, int] = field(default_factory=dict)
    k_migration: dict[tuple[int, int], int] = field(default_factory=dict)
    d_reserve: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in self.__dataclass_fields__}


@dataclass
class Row:
    name: str
    family: str
    cols: np.ndarray
    vals: np.ndarray
    sense: str
    rhs: float
    target: int = -1


class ModelInstance:
    """A MILP: named variables, labelled linear rows, linear objective."""

    def __init__(self, mode: Mode = Mode.INITIAL, name: str = "sfc"):
        self.mode = Mode(mode)
        self.name = name
        self.var_names: list[str] = []
        self.binary: list[bool] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.objective: dict[int, float] = {}
        self.rows: list[Row] = []
        self.vars = VariableSpace()
        self.meta: dict = {}
        self._family_counter: Counter = Counter()
        self._name_index: dict[str, int] | None = None

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def add_var(self, name: str, binary: bool = True, lb: float = 0.0, ub: float | None = None) -> int:
        self.var_names.append(name)
        self.binary.append(binary)
        self.lower.append(lb)
        self.upper.append(1.0 if binary and ub is None else (math.inf if ub is None else ub))
        self._name_index = None
        return len(self.var_names) - 1

    def add_row(self, family: str, terms, sense: str, rhs: float, target: int = -1) -> Row | None:
        """Append ``sum(coef * var) <sense> rhs``; zero-coefficient terms dropped."""
        if family not in FAMILIES:
            raise ModelError(f"unknown constraint family {family!r}")
        if sense not in ("<=", ">=", "="):
            raise ModelError(f"unknown sense {sense!r}")
        acc: dict[int, float] = {}
        for col, coef in terms:
            acc[col] = acc.get(col, 0.0) + coef
        acc = {c: v for c, v in acc.items() if v != 0.0}
        if not acc:
            return None
        k = self._family_counter[family]
        self._family_counter[family] += 1
        cols = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
        vals = np.fromiter(acc.values(), dtype=float, count=len(acc))
        row = Row(f"{family}_{k}", family, cols, vals, sense, float(rhs), target)
        self.rows.append(row)
        return row

    def set_objective(self, col: int, coef: float) -> None:
        if coef != 0.0:
            self.objective[col] = self.objective.get(col, 0.0) + coef

    def rows_of(self, family: str) -> list[Row]:
        return [r for r in self.rows if r.family == family]

    def audit(self) -> dict[str, int]:
        """Row count per constraint family."""
        counts = Counter(r.family for r in self.rows)
        return {f: counts[f] for f in FAMILIES if counts[f]}

    def index_of(self, name: str) -> int:
        if self._name_index is None:
            self._name_index = {n: i for i, n in enumerate(self.var_names)}
        return self._name_index[name]

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for col, coef in self.objective.items():
            c[col] = coef
        return c

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Constraint matrix with row bounds ``lo <= A x <= hi``."""
        indptr = [0]
        cols, vals = [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for i, r in enumerate(self.rows):
            cols.append(r.cols)
            vals.append(r.vals)
            indptr.append(indptr[-1] + r.cols.size)
            lo[i] = r.rhs if r.sense in (">=", "=") else -np.inf
            hi[i] = r.rhs if r.sense in ("<=", "=") else np.inf
        if self.rows:
            data = np.concatenate(vals)
            indices = np.concatenate(cols)
        else:
            data = np.zeros(0)
            indices = np.zeros(0, dtype=np.int64)
        A = sp.csr_matrix((data, indices, np.asarray(indptr)), shape=(len(self.rows), self.n_vars))
        return A, lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(coef * x[col] for col, coef in sorted(self.objective.items())))

    def tighten(self, x: np.ndarray) -> np.ndarray:
        """Set every cost/reservation variable to its smallest feasible value.

        Binaries are kept; costs only ever appear with nonnegative objective
        weight, so the result is optimal for the given binaries.
        """
        x = np.array(x, dtype=float)
        for family in TIGHTENING_ORDER:
            rows = [r for r in self.rows if r.family == family and r.target >= 0]
            if not rows:
                continue
            targets = np.array([r.target for r in rows])
            x[targets] = np.asarray(self.lower)[targets]
        for family in TIGHTENING_ORDER:
            best: dict[int, float] = {}
            for r in self.rows:
                if r.family != family or r.target < 0:
                    continue
                mask = r.cols == r.target
                coef = float(r.vals[mask][0])
                rest = float(np.dot(r.vals[~mask], x[r.cols[~mask]]))
                need = (r.rhs - rest) / coef
                best[r.target] = max(best.get(r.target, self.lower[r.target]), need)
            for col, val in best.items():
                x[col] = val
        return x

    # -- solutions ---------------------------------------------------------

    def decode(self, x: np.ndarray, status: str = "Optimal", objective: float | None = None, solve_time: float = 0.0):
        from .solver import Solution

        vs = self.vars
        on = lambda idx: {k for k, c in idx.items() if x[c] > 0.5}  # noqa: E731
        val = lambda idx: {k: float(x[c]) for k, c in idx.items()}  # noqa: E731
        return Solution(
            status=status,
            objective=self.objective_value(x) if objective is None else objective,
            placements=on(vs.f_place),
            usages=on(vs.f_use),
            path_use=on(vs.t_path),
            demand_paths=on(vs.t_demand),
            k_chain=val(vs.k_chain),
            k_server=val(vs.k_server),
            k_link=val(vs.k_link),
            k_migration=val(vs.k_migration),
            reservations=val(vs.d_reserve),
            solve_time=solve_time,
            mode=self.mode.value,
        )

    def encode(self, solution) -> np.ndarray:
        """Value vector for a :class:`~sfcrel.solver.Solution`.

        Binaries the model does not declare (servers off every candidate
        path) are ignored.
        """
        vs = self.vars
        x = np.zeros(self.n_vars)
        for idx, chosen in (
            (vs.f_place, solution.placements),
            (vs.f_use, solution.usages),
            (vs.t_path, solution.path_use),
            (vs.t_demand, solution.demand_paths),
        ):
            for key in chosen:
                if key in idx:
                    x[idx[key]] = 1.0
        for idx, values in (
            (vs.k_chain, solution.k_chain),
            (vs.k_server, solution.k_server),
            (vs.k_link, solution.k_link),
            (vs.k_migration, solution.k_migration),
            (vs.d_reserve, solution.reservations),
        ):
            for key, v in values.items():
                if key in idx:
                    x[idx[key]] = v
        return x


def candidate_servers(scenario: Scenario, paths: PathSet, s: int) -> list[int]:
    topo = scenario.topology
    found = set()
    for p in paths[s]:
        for n in p.nodes:
            found.update(topo.node_servers[n])
    return sorted(found)


def path_positions(scenario: Scenario, path) -> list[list[int]]:
    """Servers at each position of ``path``."""
    return [scenario.topology.node_servers[n] for n in path.nodes]


def build_model(
    scenario: Scenario,
    paths: PathSet,
    mode: Mode | str = Mode.INITIAL,
    initial: InitialPlacement | None = None,
    penalties: tuple[PiecewiseLinear, PiecewiseLinear] | None = None,
    alpha: float | None = None,
) -> ModelInstance:
    """Translate a scenario and its candidate paths into a :class:`ModelInstance`.

    ``penalties`` is (utilization penalty, reliability penalty). ``alpha``
    overrides ``scenario.params.alpha`` (the first stage uses its own value).
    f variables exist only for servers on some candidate path of the chain;
    the routing rows force every other server to zero anyway.
    """
    mode = Mode(mode)
    params = scenario.params
    alpha = params.alpha if alpha is None else alpha
    if not 0.0 <= alpha <= 1.0:
        raise ModelError(f"alpha must lie in [0, 1], got {alpha}")
    if mode is not Mode.INITIAL and initial is None:
        raise ModelError(f"mode {mode.value!r} needs an initial placement")
    if len(paths) != len(scenario.chains):
        raise ModelError("path set does not cover every chain")
    for s, chain in enumerate(scenario.chains):
        if not paths[s]:
            raise ModelError(f"chain {chain.id!r} has no candidate path")
    if params.ntn_enabled and mode is not Mode.INITIAL and params.f_max == 0:
        raise ModelError("N-to-N reservation needs f_max >= 1")
    y_pen, z_pen = penalties or default_penalties()

    topo = scenario.topology
    model = ModelInstance(mode)
    model.meta.update(alpha=alpha, beta=params.beta, f_max=params.f_max, ntn=params.ntn_enabled)
    vs = model.vars
    n_chains = len(scenario.chains)
    cands = [candidate_servers(scenario, paths, s) for s in range(n_chains)]

    for s, chain in enumerate(scenario.chains):
        for p in range(len(paths[s])):
            vs.t_path[(s, p)] = model.add_var(f"t_s{s}_p{p}")
    for s, chain in enumerate(scenario.chains):
        for lam in range(len(chain.demands)):
            for p in range(len(paths[s])):
                vs.t_demand[(s, lam, p)] = model.add_var(f"td_s{s}_l{lam}_p{p}")
    for s, chain in enumerate(scenario.chains):
        for v in range(len(chain.vnfs)):
            for x in cands[s]:
                vs.f_place[(x, v, s)] = model.add_var(f"f_x{x}_v{v}_s{s}")
    for s, chain in enumerate(scenario.chains):
        for lam in range(len(chain.demands)):
            for v in range(len(chain.vnfs)):
                for x in cands[s]:
                    vs.f_use[(x, lam, v, s)] = model.add_var(f"fu_x{x}_l{lam}_v{v}_s{s}")
    for li in range(len(topo.links)):
        vs.k_link[li] = model.add_var(f"kl_{li}", binary=False)
    for x in range(len(topo.servers)):
        vs.k_server[x] = model.add_var(f"kx_{x}", binary=False)
    if mode is not Mode.INITIAL:
        for s in range(n_chains):
            vs.k_chain[s] = model.add_var(f"ks_{s}", binary=False)
    if mode is Mode.REPLICATION_MIGRATION:
        for s, chain in enumerate(scenario.chains):
            for v in range(len(chain.vnfs)):
                vs.k_migration[(s, v)] = model.add_var(f"km_s{s}_v{v}", binary=False)

    # objective
    n_servers, n_links = len(topo.servers), len(topo.links)
    if mode is not Mode.INITIAL and n_chains:
        for s in range(n_chains):
            model.set_objective(vs.k_chain[s], alpha / n_chains)
    for x in range(n_servers):
        model.set_objective(vs.k_server[x], (1.0 - alpha) / n_servers)
    if mode is Mode.REPLICATION_MIGRATION:
        n_funcs = scenario.n_functions
        for key in vs.k_migration:
            model.set_objective(vs.k_migration[key], (1.0 - alpha) / n_funcs)
    if n_links:
        for li in range(n_links):
            model.set_objective(vs.k_link[li], params.beta / n_links)

    _add_routing(model, scenario, paths, cands, mode)
    if mode is not Mode.INITIAL:
        _add_reliability_cost(model, scenario, cands, z_pen)
        if mode is Mode.REPLICATION_ONLY:
            for (s, v), x in sorted(initial.assignment.items()):
                if (x, v, s) not in vs.f_place:
                    raise ModelError(f"initial server {x} of chain {s} is off its candidate paths")
                model.add_row("pinning", [(vs.f_place[(x, v, s)], 1.0)], ">=", 1.0)
        else:
            for (s, v), x in sorted(initial.assignment.items()):
                if (x, v, s) not in vs.f_place:
                    raise ModelError(f"initial server {x} of chain {s} is off its candidate paths")
                km = vs.k_migration[(s, v)]
                e_m = params.e_migration
                model.add_row("migration_cost", [(km, 1.0), (vs.f_place[(x, v, s)], e_m)], "=", e_m, target=km)
    model.meta["y_pen"] = y_pen
    _add_server_rows(model, scenario, y_pen)
    _add_link_rows(model, scenario, paths, y_pen)
    if params.ntn_enabled and mode is not Mode.INITIAL:
        add_ntn_reservation(model, scenario)
    return model


def _add_routing(model: ModelInstance, scenario: Scenario, paths: PathSet, cands, mode: Mode) -> None:
    vs = model.vars
    f_max = scenario.params.f_max
    for s, chain in enumerate(scenario.chains):
        n_paths = len(paths[s])
        n_dem = len(chain.demands)
        t_all = [(vs.t_path[(s, p)], 1.0) for p in range(n_paths)]
        if mode is Mode.INITIAL:
            model.add_row("path_count", t_all, "=", 1.0)
        else:
            model.add_row("path_count", t_all, ">=", 1.0)
            model.add_row("path_count", t_all, "<=", f_max + 1.0)
        for v, vnf in enumerate(chain.vnfs):
            rep = 1.0 if vnf.replicable else 0.0
            terms = [(vs.f_place[(x, v, s)], 1.0) for x in cands[s]]
            terms += [(c, -rep) for c, _ in t_all]
            model.add_row("replica_bound", terms, "<=", 1.0 - rep)
        for lam in range(n_dem):
            model.add_row("demand_routing", [(vs.t_demand[(s, lam, p)], 1.0) for p in range(n_paths)], "=", 1.0)
        for p in range(n_paths):
            tp = vs.t_path[(s, p)]
            for lam in range(n_dem):
                model.add_row("path_activation", [(vs.t_demand[(s, lam, p)], 1.0), (tp, -1.0)], "<=", 0.0)
            model.add_row(
                "path_activation",
                [(tp, 1.0)] + [(vs.t_demand[(s, lam, p)], -1.0) for lam in range(n_dem)],
                "<=",
                0.0,
            )
        for p, path in enumerate(paths[s]):
            positions = path_positions(scenario, path)
            on_path = [x for servers in positions for x in servers]
            for lam in range(n_dem):
                td = vs.t_demand[(s, lam, p)]
                for v in range(len(chain.vnfs)):
                    model.add_row(
                        "function_on_path",
                        [(td, 1.0)] + [(vs.f_use[(x, lam, v, s)], -1.0) for x in on_path],
                        "<=",
                        0.0,
                    )
                for v in range(1, len(chain.vnfs)):
                    prefix: list[int] = []
                    for servers in positions:
                        prefix.extend(servers)
                        for x in servers:
                            terms = [(vs.f_use[(y, lam, v - 1, s)], 1.0) for y in prefix]
                            terms += [(vs.f_use[(x, lam, v, s)], -1.0), (td, -1.0)]
                            model.add_row("function_order", terms, ">=", -1.0)
        for v in range(len(chain.vnfs)):
            for lam in range(n_dem):
                model.add_row(
                    "demand_function_once", [(vs.f_use[(x, lam, v, s)], 1.0) for x in cands[s]], "=", 1.0
                )
            for x in cands[s]:
                f = vs.f_place[(x, v, s)]
                for lam in range(n_dem):
                    model.add_row("placement_usage", [(vs.f_use[(x, lam, v, s)], 1.0), (f, -1.0)], "<=", 0.0)
                model.add_row(
                    "placement_usage",
                    [(f, 1.0)] + [(vs.f_use[(x, lam, v, s)], -1.0) for lam in range(n_dem)],
                    "<=",
                    0.0,
                )


def reliability_normalizer(scenario: Scenario, s: int) -> float:
    """Largest attainable placed-reliability sum of chain ``s``."""
    return len(scenario.chains[s].vnfs) * (1.0 + scenario.params.f_max)


def _add_reliability_cost(model: ModelInstance, scenario: Scenario, cands, z_pen: PiecewiseLinear) -> None:
    vs = model.vars
    topo = scenario.topology
    for s, chain in enumerate(scenario.chains):
        ks = vs.k_chain[s]
        norm = reliability_normalizer(scenario, s)
        for a, b in z_pen.pieces:
            terms = [(ks, 1.0)]
            for v in range(len(chain.vnfs)):
                for x in cands[s]:
                    terms.append((vs.f_place[(x, v, s)], -a * topo.servers[x].reliability / norm))
            model.add_row("reliability_cost", terms, ">=", -b, target=ks)


def add_ntn_reservation(model: ModelInstance, scenario: Scenario, cands=None) -> ModelInstance:
    """Add N-to-N reservation variables and their lower-bound rows.

    Each hosting replica ``x`` reserves ``1/F_MAX`` of the load of every
    peer replica ``z``. The bound is switched off by a big-M term when ``x``
    does not host the function, so non-hosting servers reserve nothing.
    Server capacity and cost rows are rebuilt to include the reservations.
    """
    params = scenario.params
    if params.f_max == 0:
        raise ModelError("N-to-N reservation needs f_max >= 1")
    vs = model.vars
    if vs.d_reserve:
        raise ModelError("model already carries N-to-N reservations")
    if cands is None:
        cands = [sorted(x for x, v, s2 in vs.f_place if v == 0 and s2 == s) for s in range(len(scenario.chains))]
    topo = scenario.topology
    for s, chain in enumerate(scenario.chains):
        for v in range(len(chain.vnfs)):
            for x in cands[s]:
                vs.d_reserve[(x, v, s)] = model.add_var(f"d_x{x}_v{v}_s{s}", binary=False)
    for s, chain in enumerate(scenario.chains):
        for v, vnf in enumerate(chain.vnfs):
            for x in cands[s]:
                d = vs.d_reserve[(x, v, s)]
                f = vs.f_place[(x, v, s)]
                for z in cands[s]:
                    if z == x:
                        continue
                    cap = topo.servers[z].capacity
                    coefs = [lam * vnf.load_ratio / (params.f_max * cap) for lam in chain.demands]
                    big_m = sum(coefs)
                    terms = [(d, 1.0), (f, -big_m)]
                    terms += [(vs.f_use[(z, lam, v, s)], -c) for lam, c in enumerate(coefs)]
                    model.add_row("ntn_reservation", terms, ">=", -big_m, target=d)
    model.meta["ntn"] = True
    if any(r.family == "server_capacity" for r in model.rows):
        # server rows predate the reservations: rebuild them with d included
        model.rows = [r for r in model.rows if r.family not in ("server_capacity", "server_cost")]
        model._family_counter["server_capacity"] = 0
        model._family_counter["server_cost"] = 0
        _add_server_rows(model, scenario, model.meta.get("y_pen") or default_penalties()[0])
    return model


def server_terms(model: ModelInstance, scenario: Scenario) -> dict[int, list[tuple[int, float]]]:
    """Linear utilization expression of every server."""
    vs = model.vars
    topo = scenario.topology
    e_r = scenario.params.e_replication
    terms: dict[int, list[tuple[int, float]]] = {x: [] for x in range(len(topo.servers))}
    for (x, lam, v, s), col in vs.f_use.items():
        chain = scenario.chains[s]
        load = chain.demands[lam] * chain.vnfs[v].load_ratio
        terms[x].append((col, load * (1.0 + e_r) / topo.servers[x].capacity))
    if e_r > 0:
        for (x, v, s), col in vs.f_place.items():
            terms[x].append((col, 1.0 / (topo.servers[x].capacity * e_r)))
    for (x, v, s), col in vs.d_reserve.items():
        terms[x].append((col, 1.0))
    return terms


def _add_server_rows(model: ModelInstance, scenario: Scenario, y_pen: PiecewiseLinear) -> None:
    vs = model.vars
    for x, terms in server_terms(model, scenario).items():
        if not terms:
            continue
        model.add_row("server_capacity", terms, "<=", 1.0)
        kx = vs.k_server[x]
        for a, b in y_pen.pieces:
            model.add_row("server_cost", [(kx, 1.0)] + [(c, -a * w) for c, w in terms], ">=", -b, target=kx)


def link_terms(model: ModelInstance, scenario: Scenario, paths: PathSet):
    """Linear utilization expression of every (link, direction)."""
    vs = model.vars
    topo = scenario.topology
    terms: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for (s, lam, p), col in vs.t_demand.items():
        lam_bw = scenario.chains[s].demands[lam]
        for li, direction in paths[s][p].arcs:
            terms.setdefault((li, direction), []).append((col, lam_bw / topo.links[li].capacity))
    return dict(sorted(terms.items()))


def _add_link_rows(model: ModelInstance, scenario: Scenario, paths: PathSet, y_pen: PiecewiseLinear) -> None:
    vs = model.vars
    for (li, _direction), terms in link_terms(model, scenario, paths).items():
        model.add_row("link_capacity", terms, "<=", 1.0)
        kl = vs.k_link[li]
        for a, b in y_pen.pieces:
            model.add_row("link_cost", [(kl, 1.0)] + [(c, -a * w) for c, w in terms], ">=", -b, target=kl)


# -- LP format -----------------------------------------------------------

_LINE = 200


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(names, cols, vals) -> list[str]:
    parts = []
    for i, (c, v) in enumerate(zip(cols, vals)):
        sign = "-" if v < 0 else "+"
        mag = abs(float(v))
        coef = "" if mag == 1.0 else _num(mag) + " "
        if i == 0 and sign == "+":
            parts.append(f"{coef}{names[c]}")
        else:
            parts.append(f"{sign} {coef}{names[c]}")
    return parts


def _wrap(head: str, parts: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for part in parts + ([tail] if tail else []):
        if len(cur) + len(part) + 1 > _LINE and cur.strip():
            lines.append(cur)
            cur = "   " + part
        else:
            cur = f"{cur} {part}" if cur else part
    lines.append(cur)
    return lines


def export_lp(model: ModelInstance) -> str:
    """CPLEX-LP text of the model; identical models give identical bytes."""
    names = model.var_names
    out = [f"\\ {model.name} mode={model.mode.value}", "Minimize"]
    obj = sorted(model.objective.items())
    if obj:
        cols, vals = zip(*obj)
        out += _wrap(" obj:", _expr(names, cols, vals))
    else:
        out.append(" obj:")
    if model.rows:
        out.append("Subject To")
        for r in model.rows:
            sense = {"<=": "<=", ">=": ">=", "=": "="}[r.sense]
            out += _wrap(f" {r.name}:", _expr(names, r.cols, r.vals), f"{sense} {_num(r.rhs)}")
    cont = [i for i, b in enumerate(model.binary) if not b]
    if cont:
        out.append("Bounds")
        for i in cont:
            ub = model.upper[i]
            if math.isinf(ub):
                out.append(f" {names[i]} >= {_num(model.lower[i])}")
            else:
                out.append(f" {_num(model.lower[i])} <= {names[i]} <= {_num(ub)}")
    bins = [names[i] for i, b in enumerate(model.binary) if b]
    if bins:
        out.append("Binaries")
        out += _wrap("", bins)
    out.append("End")
    return "\n".join(out) + "\n"


_NAME_PATTERNS = {
    "t_path": re.compile(r"^t_s(\d+)_p(\d+)$"),
    "t_demand": re.compile(r"^td_s(\d+)_l(\d+)_p(\d+)$"),
    "f_place": re.compile(r"^f_x(\d+)_v(\d+)_s(\d+)$"),
    "f_use": re.compile(r"^fu_x(\d+)_l(\d+)_v(\d+)_s(\d+)$"),
    "k_link": re.compile(r"^kl_(\d+)$"),
    "k_server": re.compile(r"^kx_(\d+)$"),
    "k_chain": re.compile(r"^ks_(\d+)$"),
    "k_migration": re.compile(r"^km_s(\d+)_v(\d+)$"),
    "d_reserve": re.compile(r"^d_x(\d+)_v(\d+)_s(\d+)$"),
}


def parse_var_name(name: str) -> tuple[str, tuple[int, ...] | int]:
    """Map an exported variable name back to (family, index key)."""
    for family, pat in _NAME_PATTERNS.items():
        m = pat.match(name)
        if m:
            key = tuple(int(g) for g in m.groups())
            return family, key[0] if len(key) == 1 else key
    raise ModelError(f"unrecognized variable name {name!r}")
