"""Burst workloads: exponential interarrivals and sizes, calibrated to a load."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .topology import Topology

MEAN_BURST_SIZE_BITS = 400e3 * 8  # 400 KB


class ScenarioKind(str, enum.Enum):
    GENERAL = "general"
    BOTTLENECK = "bottleneck"


@dataclass
class Scenario:
    kind: ScenarioKind = ScenarioKind.GENERAL
    generator_count: Optional[int] = None  # None: scenario default
    bottleneck_nodes: int = 7
    bottleneck_dst: str = "any"  # "any" | "selected"

    def __post_init__(self):
        self.kind = ScenarioKind(self.kind)
        if self.generator_count is not None and self.generator_count < 1:
            raise ValueError("generator count must be positive")
        if self.bottleneck_dst not in ("any", "selected"):
            raise ValueError(f"bottleneck_dst must be 'any' or 'selected', got {self.bottleneck_dst!r}")


@dataclass
class TrafficSource:
    src: int
    dst: int
    arrival_rate: float  # bursts/s
    rng_seed: int
    mean_burst_size: float = MEAN_BURST_SIZE_BITS
    rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("source and destination must differ")
        if self.arrival_rate <= 0:
            raise ValueError("arrival rate must be positive")
        self.rng = random.Random(self.rng_seed)

    def next_burst(self, now: float) -> Tuple[float, int]:
        """Return ``(arrival_time, size_bits)`` of the next burst after ``now``."""
        arrival = now + self.rng.expovariate(self.arrival_rate)
        size = max(1, math.ceil(self.rng.expovariate(1.0 / self.mean_burst_size)))
        return arrival, size


def next_burst(src: TrafficSource, now: float) -> Tuple[float, int]:
    return src.next_burst(now)


def source_capacity(topo: Topology, node: int) -> float:
    """Load normalization base for one source node: its first egress link's data capacity."""
    first = topo.adjacency[node][0]
    return topo.link(node, first).data_capacity


def _pairs(scenario: Scenario, topo: Topology, rng: random.Random) -> List[Tuple[int, int]]:
    nodes = list(topo.nodes)
    if scenario.kind is ScenarioKind.GENERAL:
        all_pairs = [(s, d) for s in nodes for d in nodes if s != d]
        tau = scenario.generator_count or len(all_pairs)
        if tau == len(all_pairs):
            return all_pairs
        pairs: List[Tuple[int, int]] = []
        while len(pairs) < tau:
            batch = all_pairs[:]
            rng.shuffle(batch)
            pairs.extend(batch[: tau - len(pairs)])
        return sorted(pairs)

    k = min(scenario.bottleneck_nodes, len(nodes))
    if k < 2:
        raise ValueError("bottleneck scenario needs at least 2 selected nodes")
    selected = sorted(rng.sample(nodes, k))
    tau = scenario.generator_count or k * k
    per_source: Dict[int, int] = {s: 0 for s in selected}
    for i in range(tau):
        per_source[selected[i % k]] += 1
    pairs = []
    for s in selected:
        pool = [d for d in (selected if scenario.bottleneck_dst == "selected" else nodes) if d != s]
        want = per_source[s]
        dsts: List[int] = []
        while len(dsts) < want:
            dsts.extend(rng.sample(pool, min(len(pool), want - len(dsts))))
        pairs.extend((s, d) for d in dsts)
    return sorted(pairs)


def build_sources(scenario: Scenario, topo: Topology, load: float, seed: int,
                  mean_burst_size: float = MEAN_BURST_SIZE_BITS) -> List[TrafficSource]:
    """Traffic sources whose total offered rate equals ``load`` times the
    normalization capacity of the distinct source nodes.

    Each source node offers ``load * source_capacity`` split evenly across its
    generators.
    """
    if not load > 0:
        raise ValueError(f"load must be > 0, got {load}")
    rng = random.Random(seed)
    pairs = _pairs(scenario, topo, rng)
    per_node: Dict[int, int] = {}
    for s, _ in pairs:
        per_node[s] = per_node.get(s, 0) + 1
    sources = []
    for i, (s, d) in enumerate(pairs):
        node_bursts_per_s = load * source_capacity(topo, s) / mean_burst_size
        sources.append(TrafficSource(s, d, node_bursts_per_s / per_node[s],
                                     rng_seed=seed * 1_000_003 + i + 1,
                                     mean_burst_size=mean_burst_size))
    return sources


def offered_capacity(sources: Sequence[TrafficSource], topo: Topology) -> float:
    return sum(source_capacity(topo, s) for s in {src.src for src in sources})


def offered_rate(sources: Sequence[TrafficSource]) -> float:
    """Expected offered throughput in bits/s."""
    return sum(s.arrival_rate * s.mean_burst_size for s in sources)


def measure_offered_load(sources: Sequence[TrafficSource], topo: Topology, horizon: float) -> float:
    """Generation-only dry run: offered bits over ``horizon`` divided by capacity.

    Consumes the sources' random streams; build fresh sources for simulation.
    """
    bits = 0
    for src in sources:
        t, size = src.next_burst(0.0)
        while t < horizon:
            bits += size
            t, size = src.next_burst(t)
    return bits / horizon / offered_capacity(sources, topo)
