"""Service chains, cost parameters and randomized scenario generation.

Randomness: ``numpy.random.SeedSequence(seed)`` is spawned into
``1 + n_chains`` children. Child 0 drives server reliabilities, child
``1 + i`` drives chain ``i`` (demand count, then bandwidths). Each child
feeds a ``PCG64`` bit generator, so a scenario depends only on the seed, the
topology and the generator config.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .network import NetworkTopology, load_topology


@dataclass(frozen=True)
class VNFSpec:
    type: str
    load_ratio: float = 1.0
    replicable: bool = True


@dataclass(frozen=True)
class ServiceChain:
    id: str
    src: str
    dst: str
    vnfs: tuple[VNFSpec, ...]
    demands: tuple[float, ...]


@dataclass(frozen=True)
class CostParams:
    alpha: float = 0.5
    beta: float = 0.1
    e_migration: float = 1.0
    e_replication: float = 0.1
    f_max: int = 5
    ntn_enabled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.f_max < 0:
            raise ValueError(f"f_max must be >= 0, got {self.f_max}")
        if self.e_replication < 0 or self.e_migration < 0:
            raise ValueError("penalty ratios must be >= 0")


@dataclass(frozen=True)
class GeneratorConfig:
    demand_count: tuple[int, int] = (1, 6)
    bandwidth: tuple[int, int] = (1, 10)
    chain_length: int = 3
    reliability: tuple[float, float] = (0.9, 0.99)
    ordered_pairs: bool = True
    load_ratio: float = 1.0
    replicable: bool = True
    max_chains: int | None = None  # keep a seeded random subset of the pairs

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        kw = dict(data)
        for key in ("demand_count", "bandwidth", "reliability"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class Scenario:
    topology: NetworkTopology
    chains: list[ServiceChain]
    params: CostParams = field(default_factory=CostParams)
    seed: int = 0

    @property
    def n_functions(self) -> int:
        return sum(len(c.vnfs) for c in self.chains)

    def with_params(self, **changes) -> "Scenario":
        kw = asdict(self.params)
        kw.update(changes)
        return Scenario(self.topology, self.chains, CostParams(**kw), self.seed)

    def to_document(self) -> dict:
        doc = self.topology.to_document()
        doc["chains"] = [
            {
                "id": c.id,
                "src": c.src,
                "dst": c.dst,
                "vnfs": [
                    {"type": v.type, "load_ratio": v.load_ratio, "replicable": v.replicable}
                    for v in c.vnfs
                ],
                "demands": list(c.demands),
            }
            for c in self.chains
        ]
        p = self.params
        doc["params"] = {
            "alpha": p.alpha,
            "beta": p.beta,
            "e_migration": p.e_migration,
            "e_replication": p.e_replication,
            "f_max": p.f_max,
            "ntn": p.ntn_enabled,
            "seed": self.seed,
        }
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=1, sort_keys=False) + "\n"


def scenario_from_document(doc: dict) -> Scenario:
    topo = load_topology({k: doc[k] for k in ("nodes", "links", "name") if k in doc})
    chains = [
        ServiceChain(
            c["id"],
            c["src"],
            c["dst"],
            tuple(VNFSpec(v["type"], float(v.get("load_ratio", 1.0)), bool(v.get("replicable", True))) for v in c["vnfs"]),
            tuple(c["demands"]),
        )
        for c in doc.get("chains", [])
    ]
    raw = doc.get("params", {})
    params = CostParams(
        alpha=float(raw.get("alpha", 0.5)),
        beta=float(raw.get("beta", 0.1)),
        e_migration=float(raw.get("e_migration", 1.0)),
        e_replication=float(raw.get("e_replication", 0.1)),
        f_max=int(raw.get("f_max", 5)),
        ntn_enabled=bool(raw.get("ntn", False)),
    )
    return Scenario(topo, chains, params, int(raw.get("seed", 0)))


def load_scenario(path: str | FsPath) -> Scenario:
    return scenario_from_document(json.loads(FsPath(path).read_text(encoding="utf-8")))


def generate_scenario(
    topology: NetworkTopology,
    params: CostParams,
    gen: GeneratorConfig | None = None,
    seed: int = 0,
) -> Scenario:
    """One chain per source-destination pair with random demands.

    Server reliabilities are redrawn uniformly from ``gen.reliability``;
    demand counts and bandwidths are uniform integers over closed ranges.
    """
    gen = gen or GeneratorConfig()
    if not topology.nodes:
        raise ValueError("topology has no nodes")
    for name in ("demand_count", "bandwidth", "reliability"):
        lo, hi = getattr(gen, name)
        if lo > hi:
            raise ValueError(f"inverted range for {name}: {lo} > {hi}")
    if gen.demand_count[0] < 1 or gen.bandwidth[0] <= 0:
        raise ValueError("demand counts must be >= 1 and bandwidths > 0")
    if gen.chain_length < 1:
        raise ValueError("chain_length must be >= 1")
    if gen.max_chains is not None and gen.max_chains < 1:
        raise ValueError("max_chains must be >= 1")

    nodes = topology.nodes
    if gen.ordered_pairs:
        pairs = [(a, b) for a in nodes for b in nodes if a != b]
    else:
        pairs = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]]

    streams = np.random.SeedSequence(seed).spawn(1 + len(pairs))
    rel_rng = np.random.Generator(np.random.PCG64(streams[0]))
    lo, hi = gen.reliability
    reliabilities = rel_rng.uniform(lo, hi, size=len(topology.servers)) if hi > lo else np.full(len(topology.servers), lo)
    topo = topology.with_reliabilities(reliabilities.tolist())
    chosen = range(len(pairs))
    if gen.max_chains is not None and gen.max_chains < len(pairs):
        chosen = sorted(rel_rng.choice(len(pairs), size=gen.max_chains, replace=False).tolist())

    vnfs = tuple(VNFSpec(f"f{j}", gen.load_ratio, gen.replicable) for j in range(gen.chain_length))
    chains = []
    for n, i in enumerate(chosen):
        a, b = pairs[i]
        rng = np.random.Generator(np.random.PCG64(streams[1 + i]))
        count = int(rng.integers(gen.demand_count[0], gen.demand_count[1], endpoint=True))
        bw = rng.integers(gen.bandwidth[0], gen.bandwidth[1], size=count, endpoint=True)
        chains.append(ServiceChain(f"s{n}", a, b, vnfs, tuple(float(x) for x in bw)))
    return Scenario(topo, chains, params, seed)


@dataclass(frozen=True)
class Violation:
    element: str
    message: str


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Return one :class:`Violation` per broken invariant (empty when valid)."""
    out: list[Violation] = []
    topo = scenario.topology
    nodes = set(topo.nodes)
    for srv in topo.servers:
        if not srv.capacity > 0:
            out.append(Violation(srv.id, "server capacity must be > 0"))
        if not 0 < srv.reliability <= 1:
            out.append(Violation(srv.id, "server reliability must lie in (0, 1]"))
    seen = set()
    for chain in scenario.chains:
        if chain.id in seen:
            out.append(Violation(chain.id, "duplicate chain id"))
        seen.add(chain.id)
        for end in (chain.src, chain.dst):
            if end not in nodes:
                out.append(Violation(chain.id, f"endpoint {end!r} not in topology"))
        if chain.src == chain.dst:
            out.append(Violation(chain.id, "source equals destination"))
        if not chain.vnfs:
            out.append(Violation(chain.id, "chain has no functions"))
        if not chain.demands:
            out.append(Violation(chain.id, "chain has no demands"))
        for lam in chain.demands:
            if not lam > 0:
                out.append(Violation(chain.id, f"demand {lam} must be > 0"))
        for v in chain.vnfs:
            if not v.load_ratio > 0:
                out.append(Violation(chain.id, f"function {v.type!r} load ratio must be > 0"))
    return out
