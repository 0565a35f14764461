"""Physical network: nodes, servers, links, and candidate routing paths."""
from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath
from typing import Iterable

import jsonschema

TOPOLOGY_SCHEMA = {
    "type": "object",
    "required": ["nodes", "links"],
    "properties": {
        "name": {"type": "string"},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "servers"],
                "properties": {
                    "id": {"type": "string"},
                    "servers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["id", "capacity", "reliability"],
                            "properties": {
                                "id": {"type": "string"},
                                "capacity": {"type": "number", "exclusiveMinimum": 0},
                                "reliability": {
                                    "type": "number",
                                    "exclusiveMinimum": 0,
                                    "maximum": 1,
                                },
                            },
                        },
                    },
                },
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "src", "dst", "capacity"],
                "properties": {
                    "id": {"type": "string"},
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "capacity": {"type": "number", "exclusiveMinimum": 0},
                    "directed": {"type": "boolean"},
                },
            },
        },
    },
}


class TopologyError(ValueError):
    """Invalid topology document or impossible routing request.

    ``element`` holds the id of the offending node, server or link when there
    is one.
    """

    def __init__(self, message: str, element: str | None = None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class Server:
    id: str
    node: str
    capacity: float
    reliability: float


@dataclass(frozen=True)
class Link:
    """A physical link.

    Bidirectional links carry traffic both ways with ``capacity`` available
    in each direction. Directed links only carry traffic from ``src`` to
    ``dst``.
    """

    id: str
    src: str
    dst: str
    capacity: float
    directed: bool = False

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class Arc:
    """One traversable direction of a link (``direction`` 1 means dst->src)."""

    link: int
    direction: int
    head: str
    tail: str


@dataclass(frozen=True)
class Path:
    id: str
    nodes: tuple[str, ...]
    arcs: tuple[tuple[int, int], ...]

    @property
    def links(self) -> tuple[int, ...]:
        return tuple(a[0] for a in self.arcs)

    @property
    def hops(self) -> int:
        return len(self.arcs)

    def traversal(self, link: int) -> int:
        return int(link in self.links)


@dataclass
class NetworkTopology:
    nodes: list[str]
    servers: list[Server]
    links: list[Link]
    name: str = ""
    node_servers: dict[str, list[int]] = field(default_factory=dict, repr=False)
    adjacency: dict[str, list[Arc]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.node_servers = {n: [] for n in self.nodes}
        for i, srv in enumerate(self.servers):
            self.node_servers[srv.node].append(i)
        self.adjacency = {n: [] for n in self.nodes}
        for i, link in enumerate(self.links):
            self.adjacency[link.src].append(Arc(i, 0, link.src, link.dst))
            if not link.directed:
                self.adjacency[link.dst].append(Arc(i, 1, link.dst, link.src))
        for arcs in self.adjacency.values():
            arcs.sort(key=lambda a: (a.tail, a.link, a.direction))

    @property
    def server_ids(self) -> list[str]:
        return [s.id for s in self.servers]

    def server_index(self, server_id: str) -> int:
        for i, s in enumerate(self.servers):
            if s.id == server_id:
                return i
        raise KeyError(server_id)

    def with_reliabilities(self, reliabilities: Iterable[float]) -> "NetworkTopology":
        servers = [
            Server(s.id, s.node, s.capacity, float(r))
            for s, r in zip(self.servers, reliabilities, strict=True)
        ]
        return NetworkTopology(list(self.nodes), servers, list(self.links), self.name)

    def to_document(self) -> dict:
        nodes = [
            {
                "id": n,
                "servers": [
                    {
                        "id": self.servers[i].id,
                        "capacity": self.servers[i].capacity,
                        "reliability": self.servers[i].reliability,
                    }
                    for i in self.node_servers[n]
                ],
            }
            for n in self.nodes
        ]
        links = []
        for link in self.links:
            entry = {"id": link.id, "src": link.src, "dst": link.dst, "capacity": link.capacity}
            if link.directed:
                entry["directed"] = True
            links.append(entry)
        doc = {"nodes": nodes, "links": links}
        if self.name:
            doc = {"name": self.name, **doc}
        return doc


def load_topology(document: dict | str | FsPath) -> NetworkTopology:
    """Validate a topology document and build a :class:`NetworkTopology`.

    ``document`` may be an already parsed dict or a path to a JSON file.
    Raises :class:`TopologyError` naming the offending element.
    """
    if not isinstance(document, dict):
        document = json.loads(FsPath(document).read_text(encoding="utf-8"))
    try:
        jsonschema.validate(document, TOPOLOGY_SCHEMA)
    except jsonschema.ValidationError as exc:
        element = _schema_element(document, list(exc.absolute_path))
        raise TopologyError(f"schema violation at {element}: {exc.message}", element) from None

    nodes: list[str] = []
    servers: list[Server] = []
    seen_servers: set[str] = set()
    for entry in document["nodes"]:
        nid = entry["id"]
        if nid in nodes:
            raise TopologyError(f"duplicate node id {nid!r}", nid)
        nodes.append(nid)
        for srv in entry["servers"]:
            if srv["id"] in seen_servers:
                raise TopologyError(f"duplicate server id {srv['id']!r}", srv["id"])
            seen_servers.add(srv["id"])
            servers.append(Server(srv["id"], nid, float(srv["capacity"]), float(srv["reliability"])))

    node_set = set(nodes)
    links: list[Link] = []
    link_ids: set[str] = set()
    arcs: set[tuple[str, str]] = set()
    for entry in document["links"]:
        lid = entry["id"]
        if lid in link_ids:
            raise TopologyError(f"duplicate link id {lid!r}", lid)
        link_ids.add(lid)
        for end in (entry["src"], entry["dst"]):
            if end not in node_set:
                raise TopologyError(f"link {lid!r} references unknown node {end!r}", end)
        if entry["src"] == entry["dst"]:
            raise TopologyError(f"link {lid!r} is a self loop", lid)
        link = Link(lid, entry["src"], entry["dst"], float(entry["capacity"]), bool(entry.get("directed", False)))
        new_arcs = [(link.src, link.dst)] + ([] if link.directed else [(link.dst, link.src)])
        for arc in new_arcs:
            if arc in arcs:
                raise TopologyError(f"link {lid!r} duplicates arc {arc[0]}->{arc[1]}", lid)
            arcs.add(arc)
        links.append(link)

    topo = NetworkTopology(nodes, servers, links, document.get("name", ""))
    _check_connected(topo)
    return topo


def bundled_topology(name: str = "janos-us") -> NetworkTopology:
    """Load one of the topologies shipped in ``sfcrel/data``."""
    text = resources.files("sfcrel.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_topology(json.loads(text))


def _schema_element(document, path: list) -> str:
    # walk down to the deepest object carrying an id
    element = "document"
    node = document
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            break
        if isinstance(node, dict) and isinstance(node.get("id"), str):
            element = node["id"]
    if element == "document" and path:
        element = "/".join(str(p) for p in path)
    return element


def _reachable(topo: NetworkTopology, start: str, reverse: bool) -> set[str]:
    succ: dict[str, list[str]] = {n: [] for n in topo.nodes}
    for n, arcs in topo.adjacency.items():
        for a in arcs:
            if reverse:
                succ[a.tail].append(n)
            else:
                succ[n].append(a.tail)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in succ[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def _check_connected(topo: NetworkTopology) -> None:
    start = topo.nodes[0]
    for reverse in (False, True):
        seen = _reachable(topo, start, reverse)
        missing = [n for n in topo.nodes if n not in seen]
        if missing:
            raise TopologyError(f"graph is not connected: node {missing[0]!r} unreachable", missing[0])


def _bfs_path(topo, src, dst, banned_nodes, banned_arcs):
    """Fewest-hop path with the lexicographically smallest node sequence."""
    if src in banned_nodes:
        return None
    parent: dict[str, tuple[str, Arc] | None] = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for arc in topo.adjacency[u]:
            w = arc.tail
            if w in parent or w in banned_nodes or (u, w) in banned_arcs:
                continue
            parent[w] = (u, arc)
            queue.append(w)
    if dst not in parent:
        return None
    nodes = [dst]
    arcs = []
    while parent[nodes[-1]] is not None:
        u, arc = parent[nodes[-1]]
        arcs.append(arc)
        nodes.append(u)
    return list(reversed(nodes)), list(reversed(arcs))


def _make_path(pid, nodes, arcs):
    return Path(pid, tuple(nodes), tuple((a.link, a.direction) for a in arcs))


def compute_candidate_paths(topo: NetworkTopology, src: str, dst: str, k: int) -> list[Path]:
    """Up to ``k`` loop-free fewest-hop paths from ``src`` to ``dst`` (Yen).

    Paths come out ordered by (hop count, node-id sequence).
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    for n in (src, dst):
        if n not in topo.adjacency:
            raise TopologyError(f"unknown node {n!r}", n)
    first = _bfs_path(topo, src, dst, set(), set())
    if first is None:
        raise TopologyError(f"no path from {src!r} to {dst!r}", dst)

    accepted: list[tuple[list[str], list[Arc]]] = [first]
    seen = {tuple(first[0])}
    candidates: list = []
    while len(accepted) < k:
        prev_nodes, prev_arcs = accepted[-1]
        for i in range(len(prev_nodes) - 1):
            root = prev_nodes[: i + 1]
            banned_arcs = {
                (p[0][i], p[0][i + 1]) for p in accepted if len(p[0]) > i + 1 and p[0][: i + 1] == root
            }
            spur = _bfs_path(topo, prev_nodes[i], dst, set(root[:-1]), banned_arcs)
            if spur is None:
                continue
            nodes = root[:-1] + spur[0]
            key = tuple(nodes)
            if key in seen:
                continue
            seen.add(key)
            arcs = prev_arcs[:i] + spur[1]
            heapq.heappush(candidates, (len(arcs), key, arcs))
        if not candidates:
            break
        _, key, arcs = heapq.heappop(candidates)
        accepted.append((list(key), arcs))
    return [_make_path(f"{src}>{dst}#{j}", n, a) for j, (n, a) in enumerate(accepted)]


@dataclass
class PathSet:
    """Candidate paths per chain plus the deduplicated global pool."""

    per_chain: list[list[Path]]
    pool: list[Path]

    def __getitem__(self, chain: int) -> list[Path]:
        return self.per_chain[chain]

    def __len__(self) -> int:
        return len(self.per_chain)


def compute_path_set(topo: NetworkTopology, endpoints: Iterable[tuple[str, str]], k: int) -> PathSet:
    cache: dict[tuple[str, str], list[Path]] = {}
    per_chain = []
    pool: list[Path] = []
    for pair in endpoints:
        if pair not in cache:
            cache[pair] = compute_candidate_paths(topo, pair[0], pair[1], k)
            pool.extend(cache[pair])
        per_chain.append(cache[pair])
    return PathSet(per_chain, pool)
