"""Network topology, routes and the precomputed deflection route table."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union


class TopologyError(ValueError):
    """Raised for malformed or invalid topology descriptions."""


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    propagation_delay: float  # seconds
    n_control_channels: int
    n_data_channels: int
    channel_bandwidth: float  # bits/s

    def __post_init__(self):
        if self.src == self.dst:
            raise TopologyError(f"self-loop on node {self.src}")
        if self.propagation_delay <= 0:
            raise TopologyError(f"non-positive delay on link {self.src}->{self.dst}")
        if self.n_control_channels < 1 or self.n_data_channels < 1:
            raise TopologyError(f"link {self.src}->{self.dst} needs >= 1 channel of each kind")
        if self.channel_bandwidth <= 0:
            raise TopologyError(f"non-positive bandwidth on link {self.src}->{self.dst}")

    @property
    def data_capacity(self) -> float:
        return self.n_data_channels * self.channel_bandwidth


@dataclass(frozen=True, order=True)
class Route:
    """A loop-free node sequence. Ordering is lexicographic on the nodes."""

    nodes: Tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a route needs at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"route {self.nodes} revisits a node")

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]

    def links(self) -> List[Tuple[int, int]]:
        return list(zip(self.nodes, self.nodes[1:]))

    def __len__(self) -> int:
        return len(self.nodes)


def route_hops(r: Route) -> int:
    return r.hops


@dataclass
class Topology:
    names: List[str]
    links: Dict[Tuple[int, int], Link]
    adjacency: Dict[int, List[int]] = field(init=False)

    def __post_init__(self):
        self.adjacency = {n: [] for n in range(len(self.names))}
        for (a, b) in sorted(self.links):
            self.adjacency[a].append(b)
        self.validate()

    @property
    def nodes(self) -> range:
        return range(len(self.names))

    @property
    def node_count(self) -> int:
        return len(self.names)

    def link(self, a: int, b: int) -> Link:
        return self.links[(a, b)]

    def has_link(self, a: int, b: int) -> bool:
        return (a, b) in self.links

    def node_id(self, name: str) -> int:
        return self.names.index(name)

    def validate(self) -> None:
        if not self.names:
            raise TopologyError("topology has no nodes")
        for (a, b), link in self.links.items():
            if (link.src, link.dst) != (a, b):
                raise TopologyError(f"link keyed {(a, b)} describes {(link.src, link.dst)}")
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise TopologyError(f"link {(a, b)} references an unknown node")
        # strong connectivity: every node reachable from 0 and 0 reachable from every node
        for adj in (self.adjacency, self._reverse_adjacency()):
            seen = {0}
            todo = [0]
            while todo:
                n = todo.pop()
                for m in adj[n]:
                    if m not in seen:
                        seen.add(m)
                        todo.append(m)
            if len(seen) != self.node_count:
                raise TopologyError("topology is not connected")

    def _reverse_adjacency(self) -> Dict[int, List[int]]:
        rev: Dict[int, List[int]] = {n: [] for n in self.nodes}
        for (a, b) in self.links:
            rev[b].append(a)
        return rev

    def hop_distances_to(self, dst: int) -> Dict[int, int]:
        """BFS hop count from every node to ``dst``."""
        rev = self._reverse_adjacency()
        dist = {dst: 0}
        queue = deque([dst])
        while queue:
            n = queue.popleft()
            for m in rev[n]:
                if m not in dist:
                    dist[m] = dist[n] + 1
                    queue.append(m)
        return dist


def parse_topology(text: str) -> Topology:
    """Parse the ``link <a> <b> <delay_us> <n_ctl> <n_data> <gbps>`` format.

    Every ``link`` record is an undirected fiber and yields two directed links.
    """
    names: List[str] = []
    index: Dict[str, int] = {}
    links: Dict[Tuple[int, int], Link] = {}

    def node(name: str) -> int:
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "link" or len(parts) != 7:
            raise TopologyError(f"line {lineno}: expected 'link <a> <b> <delay_us> <n_ctl> <n_data> <gbps>'")
        _, name_a, name_b, delay, n_ctl, n_data, gbps = parts
        try:
            delay_s = float(delay) * 1e-6
            ctl, dat = int(n_ctl), int(n_data)
            bw = float(gbps) * 1e9
        except ValueError as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
        if name_a == name_b:
            raise TopologyError(f"line {lineno}: self-loop on {name_a}")
        a, b = node(name_a), node(name_b)
        for u, v in ((a, b), (b, a)):
            if (u, v) in links:
                raise TopologyError(f"line {lineno}: duplicate link {name_a}-{name_b}")
            links[(u, v)] = Link(u, v, delay_s, ctl, dat, bw)
    return Topology(names, links)


def load_topology(source: Union[str, Path, None] = None) -> Topology:
    """Load a topology file; ``None`` loads the bundled NSFNET."""
    if source is None:
        text = resources.files("obsim.data").joinpath("nsfnet.topo").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"topology file not found: {path}")
        text = path.read_text()
    return parse_topology(text)


def topology_from_edges(edges: Iterable[Tuple[int, int]], n_nodes: Optional[int] = None,
                        delay: float = 1e-3, n_ctl: int = 2, n_data: int = 4,
                        bandwidth: float = 1e9) -> Topology:
    """Build a topology from undirected integer edges (test and scripting helper)."""
    edges = list(edges)
    if n_nodes is None:
        n_nodes = 1 + max(max(e) for e in edges)
    links: Dict[Tuple[int, int], Link] = {}
    for a, b in edges:
        for u, v in ((a, b), (b, a)):
            if (u, v) in links:
                raise TopologyError(f"duplicate link {a}-{b}")
            links[(u, v)] = Link(u, v, delay, n_ctl, n_data, bandwidth)
    return Topology([str(i) for i in range(n_nodes)], links)


@dataclass(frozen=True)
class RouteEntry:
    primary: Route
    alternatives: Tuple[Route, ...]


class RouteTable:
    """Primary and deflection routes for every ordered node pair."""

    def __init__(self, entries: Dict[Tuple[int, int], RouteEntry], xi: float, max_alternatives: int):
        self.entries = entries
        self.xi = xi
        self.max_alternatives = max_alternatives

    def primary(self, src: int, dst: int) -> Route:
        return self.entries[(src, dst)].primary

    def alternatives(self, src: int, dst: int) -> Tuple[Route, ...]:
        return self.entries[(src, dst)].alternatives

    def next_hops(self, node: int, dst: int) -> List[int]:
        """Distinct first hops offered from ``node`` toward ``dst``, primary first."""
        entry = self.entries[(node, dst)]
        hops = [entry.primary.nodes[1]]
        for alt in entry.alternatives:
            if alt.nodes[1] not in hops:
                hops.append(alt.nodes[1])
        return hops

    def max_alternative_hops(self, src: int, dst: int) -> int:
        entry = self.entries[(src, dst)]
        return max([entry.primary.hops] + [a.hops for a in entry.alternatives])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RouteTable):
            return NotImplemented
        return (self.entries, self.xi, self.max_alternatives) == (
            other.entries, other.xi, other.max_alternatives)

    def __iter__(self):
        return iter(sorted(self.entries.items()))


def length_bound(primary_hops: int, xi: float) -> int:
    """Largest admissible deflection hop count, floor(primary_hops * xi)."""
    return int(math.floor(primary_hops * xi + 1e-9))


def _simple_paths(topo: Topology, src: int, dst: int, max_hops: int,
                  dist: Dict[int, int]) -> List[Tuple[int, ...]]:
    found: List[Tuple[int, ...]] = []
    path = [src]
    on_path = {src}

    def extend(node: int) -> None:
        for nxt in topo.adjacency[node]:
            if nxt in on_path:
                continue
            # prune: even a shortest continuation would exceed the bound
            if len(path) + dist.get(nxt, math.inf) > max_hops:
                continue
            if nxt == dst:
                found.append(tuple(path) + (dst,))
                continue
            path.append(nxt)
            on_path.add(nxt)
            extend(nxt)
            path.pop()
            on_path.discard(nxt)

    extend(src)
    return found


def build_route_table(topo: Topology, xi: float = 2.0, max_alternatives: int = 5) -> RouteTable:
    if xi < 1:
        raise ValueError(f"xi must be >= 1, got {xi}")
    if max_alternatives < 1:
        raise ValueError("max_alternatives must be positive")
    entries: Dict[Tuple[int, int], RouteEntry] = {}
    for dst in topo.nodes:
        dist = topo.hop_distances_to(dst)
        for src in topo.nodes:
            if src == dst:
                continue
            shortest = dist[src]
            paths = _simple_paths(topo, src, dst, length_bound(shortest, xi), dist)
            paths.sort(key=lambda p: (len(p), p))
            primary = Route(paths[0])
            alternatives = tuple(Route(p) for p in paths[1:1 + max_alternatives])
            entries[(src, dst)] = RouteEntry(primary, alternatives)
    return RouteTable(entries, xi, max_alternatives)


def validate_route(topo: Topology, route: Sequence[int]) -> bool:
    return len(set(route)) == len(route) >= 2 and all(
        topo.has_link(a, b) for a, b in zip(route, route[1:]))
