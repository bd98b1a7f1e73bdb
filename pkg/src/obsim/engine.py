"""Deterministic discrete-event core of the OBS simulator.

Events are processed in ``(time, sequence)`` order; the sequence number is
assigned when an event is scheduled, so two runs with the same configuration
and seed replay the same trace.

Timing model: a BHP processed at a node at time ``now`` with ``remaining_offset``
left announces a burst that reaches that node at ``now + remaining_offset`` and
occupies the outgoing channel for ``burst_duration``. Processing costs ``t_p``
and shrinks the remaining offset by the same amount.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

from .config import SimConfig
from .metrics import Counters, MetricsReport, finalize
from .policy import (DEFLECT, DROP, RETRANSMIT, ContentionContext, OffsetParams, Strategy,
                     ahdr_decide, best_alternative, compute_offset, defl_permitted, lhdr_decide,
                     pure_obs_decide)
from .stats import LinkStats, NetworkStateTable, StatsPayload, ThresholdModel, Weights
from .topology import Route, RouteTable, Topology
from .traffic import Scenario, TrafficSource, build_sources

log = logging.getLogger(__name__)

# event kinds
GEN, BHP, CTRL, RETX, REFRESH, END = range(6)
KIND_NAMES = ("BurstGeneration", "BhpArrival", "ControlArrival", "RetransmitTimer",
              "StatsRefresh", "SimulationEnd")

ACK = "ACK"
NACK = "NACK"

_EPS = 1e-12


class EngineError(RuntimeError):
    """Internal inconsistency; indicates a simulator bug, never a protocol outcome."""


class Burst:
    __slots__ = ("id", "source", "destination", "size", "created_at",
                 "retransmission_count", "measured")

    def __init__(self, id: int, source: int, destination: int, size: int, created_at: float,
                 measured: bool = True):
        if size <= 0:
            raise ValueError("burst size must be positive")
        self.id = id
        self.source = source
        self.destination = destination
        self.size = size
        self.created_at = created_at
        self.retransmission_count = 0
        self.measured = measured


class BurstHeaderPacket:
    """Control packet carrying the burst's full source route.

    ``path`` is the sequence of nodes actually visited so far; it becomes the
    reverse route of the ACK/NACK.
    """

    __slots__ = ("burst", "route", "pos", "remaining_offset", "burst_duration",
                 "deflection_count", "path")

    def __init__(self, burst: Burst, route: Tuple[int, ...], remaining_offset: float,
                 burst_duration: float):
        self.burst = burst
        self.route = route
        self.pos = 0
        self.remaining_offset = remaining_offset
        self.burst_duration = burst_duration
        self.deflection_count = 0
        self.path = [route[0]]

    @property
    def burst_id(self) -> int:
        return self.burst.id


class ControlMessage:
    __slots__ = ("kind", "burst_id", "reverse_route", "pos", "payload")

    def __init__(self, kind: str, burst_id: int, reverse_route: Tuple[int, ...],
                 payload: StatsPayload):
        self.kind = kind
        self.burst_id = burst_id
        self.reverse_route = reverse_route
        self.pos = 0
        self.payload = payload


class ChannelSchedule:
    """First-fit horizon scheduler over the data channels of one link.

    Each channel is free from its horizon (end of its last reservation)
    onward; there is no void filling. With ``audit`` set every granted
    interval is kept for later overlap checks.
    """

    __slots__ = ("horizons", "audit")

    def __init__(self, n_channels: int, audit: bool = False):
        self.horizons = [0.0] * n_channels
        self.audit: Optional[List[List[Tuple[float, float]]]] = (
            [[] for _ in range(n_channels)] if audit else None)

    def reserve(self, start: float, end: float) -> Optional[int]:
        if not start < end:
            raise EngineError(f"empty reservation [{start}, {end})")
        horizons = self.horizons
        for ch in range(len(horizons)):
            if horizons[ch] <= start:
                horizons[ch] = end
                if self.audit is not None:
                    self.audit[ch].append((start, end))
                return ch
        return None

    def overlaps(self) -> int:
        """Number of overlapping interval pairs recorded (audit mode only)."""
        if self.audit is None:
            return 0
        bad = 0
        for intervals in self.audit:
            ordered = sorted(intervals)
            for (s0, e0), (s1, e1) in zip(ordered, ordered[1:]):
                if s1 < e0:
                    bad += 1
        return bad


def reserve(sched: ChannelSchedule, interval: Tuple[float, float]) -> Optional[int]:
    return sched.reserve(interval[0], interval[1])


class Simulation:
    """One simulation instance: a (scenario, strategy, load, seed) point."""

    def __init__(self, cfg: SimConfig, topo: Topology, table: RouteTable, strategy: str,
                 load: float, seed: int, trace_path: Optional[str] = None,
                 trace_hash: bool = False, audit: bool = False,
                 sources: Optional[Sequence[TrafficSource]] = None):
        self.cfg = cfg
        self.topo = topo
        self.table = table
        self.strategy = Strategy(strategy)
        self.load = load
        self.seed = seed
        self.audit = audit

        self.params = OffsetParams(cfg.t_conf_us * 1e-6, cfg.t_p_us * 1e-6)
        self.weights = Weights.from_blr_weight(cfg.w_blr)
        self.n_ret = 0 if self.strategy is Strategy.PURE else cfg.n_ret
        self.max_deflections = cfg.max_deflections

        first = next(iter(sorted(topo.links)))
        self.bandwidth = topo.links[first].channel_bandwidth
        mean_duration = cfg.mean_burst_bits / self.bandwidth
        self.idle_time = (2 * mean_duration if cfg.idle_us is None else cfg.idle_us * 1e-6)
        self.refresh_interval = cfg.refresh_ms * 1e-3

        self.link_stats: Dict[Tuple[int, int], LinkStats] = {}
        self.schedules: Dict[Tuple[int, int], ChannelSchedule] = {}
        self.delays: Dict[Tuple[int, int], float] = {}
        for key, link in sorted(topo.links.items()):
            self.link_stats[key] = LinkStats(cfg.blr_window, cfg.util_window_bursts * mean_duration,
                                             link.n_data_channels)
            self.schedules[key] = ChannelSchedule(link.n_data_channels, audit)
            self.delays[key] = link.propagation_delay
        self.states = [NetworkStateTable(n) for n in topo.nodes]
        self.models = [ThresholdModel(cfg.threshold_min_samples, cfg.threshold_default,
                                      cfg.threshold_capacity) for _ in topo.nodes]
        self.learning = cfg.threshold_mode == "ack"
        if not self.learning:
            for model in self.models:
                model.omega, model.phi, model.fitted = cfg.omega, cfg.phi, True
        # node -> burst id -> (blr, sp) for deflections awaiting an ACK
        self.pending: List[Dict[int, Tuple[float, float]]] = [{} for _ in topo.nodes]

        if sources is None:
            scenario = Scenario(cfg.scenario, cfg.generators, cfg.bottleneck_nodes, cfg.bottleneck_dst)
            sources = build_sources(scenario, topo, load, seed, cfg.mean_burst_bits)
        self.sources = list(sources)
        total_rate = sum(s.arrival_rate for s in self.sources)
        horizon = cfg.horizon_s
        if cfg.min_bursts and total_rate > 0:
            horizon = max(horizon, cfg.min_bursts / (total_rate * (1.0 - cfg.warmup_fraction)))
        self.horizon = horizon
        self.warmup = cfg.warmup_fraction * horizon

        self.counters = Counters()  # bursts created after warm-up
        self.totals = Counters()  # every burst
        self.buffer: Dict[int, Burst] = {}
        self.unknown_control = 0
        self.insufficient_offset = 0
        self.offset_violations = 0
        self.foreign_deflections = 0
        self.max_retransmissions_seen = 0
        self.ack_count = 0
        self.nack_count = 0
        self.events_processed = 0
        self._blr_probe_sum = 0.0
        self._blr_probes = 0

        self._queue: list = []
        self._seq = 0
        self._next_burst_id = 0
        self.now = 0.0
        self._generating = True

        self._trace_file = open(trace_path, "w") if trace_path else None
        self._hasher = hashlib.sha256() if (trace_hash or trace_path) else None

    # -- event plumbing ---------------------------------------------------

    def schedule(self, at: float, kind: int, node: int, obj=None) -> None:
        if at < self.now - _EPS:
            raise EngineError(f"event scheduled in the past: {at} < {self.now}")
        heapq.heappush(self._queue, (at, self._seq, kind, node, obj))
        self._seq += 1

    def _trace(self, at: float, seq: int, kind: int, node: int, obj) -> None:
        if isinstance(obj, BurstHeaderPacket):
            burst_id, detail = obj.burst.id, f"pos={obj.pos} route={'-'.join(map(str, obj.route))}"
        elif isinstance(obj, ControlMessage):
            burst_id, detail = obj.burst_id, f"{obj.kind} link={obj.payload.link[0]}-{obj.payload.link[1]}"
        elif isinstance(obj, Burst):
            burst_id, detail = obj.id, f"retx={obj.retransmission_count}"
        elif isinstance(obj, TrafficSource):
            burst_id, detail = -1, f"dst={obj.dst}"
        else:
            burst_id, detail = -1, ""
        line = f"{at * 1e6:.6f}\t{seq}\t{KIND_NAMES[kind]}\t{node}\t{burst_id}\t{detail}\n"
        self._hasher.update(line.encode())
        if self._trace_file is not None:
            self._trace_file.write(line)

    @property
    def mean_link_blr(self) -> float:
        """Time-averaged mean over nodes of each node's mean known link BLR."""
        return self._blr_probe_sum / self._blr_probes if self._blr_probes else 0.0

    @property
    def trace_hash(self) -> Optional[str]:
        return self._hasher.hexdigest() if self._hasher is not None else None

    def run(self) -> MetricsReport:
        for i, src in enumerate(self.sources):
            t, size = src.next_burst(0.0)
            if t < self.horizon:
                self.schedule(t, GEN, src.src, (src, size))
        self.schedule(0.0, REFRESH, -1)
        self.schedule(self.horizon, END, -1)

        queue = self._queue
        tracing = self._hasher is not None
        last = (-1.0, -1)
        handlers = (self._on_generation, self.handle_bhp, self.handle_control,
                    self._on_retransmit, self._on_refresh, self._on_end)
        try:
            while queue:
                at, seq, kind, node, obj = heapq.heappop(queue)
                if (at, seq) <= last:
                    raise EngineError(f"event order violated at {(at, seq)} after {last}")
                last = (at, seq)
                self.now = at
                self.events_processed += 1
                if tracing:
                    self._trace(at, seq, kind, node, obj[0] if kind == GEN else obj)
                handlers[kind](node, obj)
        finally:
            if self._trace_file is not None:
                self._trace_file.close()

        if self.buffer:
            raise EngineError(f"{len(self.buffer)} bursts still buffered after drain")
        interval = self.horizon - self.warmup
        return finalize(self.counters, interval, self.cfg.scenario, self.strategy.value,
                        self.load, self.seed)

    # -- traffic ------------------------------------------------------------

    def _on_generation(self, node: int, obj) -> None:
        src, size = obj
        now = self.now
        burst = Burst(self._next_burst_id, src.src, src.dst, size, now, measured=now >= self.warmup)
        self._next_burst_id += 1
        self.totals.generated += 1
        if burst.measured:
            self.counters.generated += 1
        self.send_burst(burst)
        t, size = src.next_burst(now)
        if t < self.horizon and self._generating:
            self.schedule(t, GEN, src.src, (src, size))

    def _on_end(self, node: int, obj) -> None:
        self._generating = False
        # drop pending generation events beyond the horizon (none should exist)
        self._queue[:] = [e for e in self._queue if e[2] != GEN]
        heapq.heapify(self._queue)

    def _on_refresh(self, node: int, obj) -> None:
        now = self.now
        for (a, b), stats in self.link_stats.items():
            if stats.total_attempts:
                self.states[a].apply_payload(StatsPayload((a, b), stats.blr, stats.utilization(now), now))
        if self.strategy is Strategy.AHDR and self.learning:
            for model in self.models:
                model.fit()
        if now >= self.warmup:
            self._blr_probe_sum += sum(s.mean_blr() for s in self.states) / len(self.states)
            self._blr_probes += 1
        if self._generating and now + self.refresh_interval < self.horizon:
            self.schedule(now + self.refresh_interval, REFRESH, -1)

    def _context(self, node: int, dst: int, remainder: Tuple[int, ...],
                 alternatives: Sequence[Route]) -> ContentionContext:
        return ContentionContext(node, dst, Route(remainder), alternatives, self.states[node],
                                 self.models[node], self.weights)

    def send_burst(self, burst: Burst) -> None:
        """Compute the ingress offset and launch the BHP for ``burst``."""
        src, dst = burst.source, burst.destination
        primary = self.table.primary(src, dst)
        alternatives = self.table.alternatives(src, dst)
        if self.strategy is Strategy.AHDR:
            ctx = self._context(src, dst, primary.nodes, alternatives)
            best = best_alternative(ctx)
            th = self.models[src].threshold(self.states[src].mean_blr())
            permitted = defl_permitted(best[1] if best else None, th)
        elif self.strategy is Strategy.LHDR:
            permitted = self.max_deflections > 0
        else:
            permitted = False
        offset = compute_offset(self.params, permitted, self.table.max_alternative_hops(src, dst),
                                primary.hops)
        bhp = BurstHeaderPacket(burst, primary.nodes, offset, burst.size / self.bandwidth)
        self.buffer[burst.id] = burst
        self.schedule(self.now, BHP, src, bhp)

    def _on_retransmit(self, node: int, burst: Burst) -> None:
        burst.retransmission_count += 1
        if burst.retransmission_count > self.n_ret:
            raise EngineError(f"burst {burst.id} exceeded {self.n_ret} retransmissions")
        self.max_retransmissions_seen = max(self.max_retransmissions_seen, burst.retransmission_count)
        self.totals.retransmissions += 1
        if burst.measured:
            self.counters.retransmissions += 1
        self.send_burst(burst)

    # -- forwarding ---------------------------------------------------------

    def handle_bhp(self, node: int, bhp: BurstHeaderPacket) -> None:
        route, pos = bhp.route, bhp.pos
        if not (0 <= pos < len(route)) or route[pos] != node:
            raise EngineError(f"malformed BHP for burst {bhp.burst.id} at node {node}: pos={pos} route={route}")
        now = self.now
        if pos == len(route) - 1:
            self._deliver(node, bhp)
            return
        nxt = route[pos + 1]
        p = self.params
        if bhp.remaining_offset < p.t_conf + p.t_p - _EPS:
            self.insufficient_offset += 1
            self._emit(NACK, node, bhp, (node, nxt))
            return
        start = now + bhp.remaining_offset
        end = start + bhp.burst_duration
        if self._try_reserve((node, nxt), start, end):
            self._forward(node, nxt, bhp)
            return
        self._resolve_contention(node, bhp, start, end)

    def _try_reserve(self, key: Tuple[int, int], start: float, end: float) -> bool:
        ok = self.schedules[key].reserve(start, end) is not None
        stats = self.link_stats[key]
        stats.record_attempt(ok)
        if ok:
            stats.record_occupancy(end - start, self.now)
            if self.audit and start < self.now + self.params.t_p + self.params.t_conf - _EPS:
                self.offset_violations += 1
        return ok

    def _forward(self, node: int, nxt: int, bhp: BurstHeaderPacket) -> None:
        bhp.pos += 1
        bhp.remaining_offset -= self.params.t_p
        bhp.path.append(nxt)
        self.schedule(self.now + self.params.t_p + self.delays[(node, nxt)], BHP, nxt, bhp)

    def _resolve_contention(self, node: int, bhp: BurstHeaderPacket, start: float, end: float) -> None:
        burst = bhp.burst
        dst = burst.destination
        remainder = bhp.route[bhp.pos:]
        p = self.params
        # deflection routes must leave through another port, avoid nodes already
        # visited, and still fit in the offset that is left
        blocked = remainder[1]
        max_hops = math.floor((bhp.remaining_offset - p.t_conf) / p.t_p + 1e-6)
        visited = set(bhp.path[:-1])
        candidates = [a for a in self.table.alternatives(node, dst)
                      if a.nodes[1] != blocked and a.hops <= max_hops and visited.isdisjoint(a.nodes)]
        attempts = 0
        while True:
            ctx = self._context(node, dst, remainder, candidates)
            if self.strategy is Strategy.AHDR:
                decision = ahdr_decide(ctx, burst.retransmission_count, self.n_ret)
            elif self.strategy is Strategy.LHDR:
                decision = lhdr_decide(ctx, bhp.deflection_count + attempts, self.max_deflections,
                                       burst.retransmission_count, self.n_ret)
            else:
                decision = pure_obs_decide()

            if decision.kind is DEFLECT:
                attempts += 1
                alt = decision.route
                if self.audit and alt not in self.table.alternatives(node, dst):
                    self.foreign_deflections += 1
                hop = alt.nodes[1]
                if self._try_reserve((node, hop), start, end):
                    bhp.route = alt.nodes
                    bhp.pos = 0
                    bhp.deflection_count += 1
                    self.totals.deflections += 1
                    if burst.measured:
                        self.counters.deflections += 1
                    if self.strategy is Strategy.AHDR and self.learning:
                        self.pending[node][burst.id] = (ctx.state.mean_blr(), decision.sp)
                    self._forward(node, hop, bhp)
                    return
                candidates = [a for a in candidates if a.nodes[1] != hop]
                continue
            if decision.kind is RETRANSMIT or (decision.kind is DROP and self.strategy is not Strategy.PURE):
                self._emit(NACK, node, bhp, (node, remainder[1]))
            else:
                self._lose(burst)
            return

    def _deliver(self, node: int, bhp: BurstHeaderPacket) -> None:
        burst = bhp.burst
        arrival = self.now + bhp.remaining_offset
        for c in (self.totals, self.counters) if burst.measured else (self.totals,):
            c.delivered += 1
            c.delivered_bits += burst.size
            c.delay_sum += arrival - burst.created_at
        self._emit(ACK, node, bhp, (bhp.path[-2], node))

    def _lose(self, burst: Burst) -> None:
        self.buffer.pop(burst.id, None)
        self.totals.lost += 1
        if burst.measured:
            self.counters.lost += 1

    # -- signaling ----------------------------------------------------------

    def _emit(self, kind: str, node: int, bhp: BurstHeaderPacket, link: Tuple[int, int]) -> None:
        """Start an ACK/NACK at ``node`` carrying ``link``'s statistics back to the source."""
        stats = self.link_stats[link]
        payload = StatsPayload(link, stats.blr, stats.utilization(self.now), self.now)
        if kind == ACK:
            self.ack_count += 1
        else:
            self.nack_count += 1
        msg = ControlMessage(kind, bhp.burst.id, tuple(reversed(bhp.path)), payload)
        self.handle_control(node, msg)

    def handle_control(self, node: int, msg: ControlMessage) -> None:
        if msg.reverse_route[msg.pos] != node:
            raise EngineError(f"control message for burst {msg.burst_id} misrouted at {node}")
        self.states[node].apply_payload(msg.payload)
        sample = self.pending[node].pop(msg.burst_id, None)
        if sample is not None and msg.kind == ACK:
            self.models[node].add_sample(*sample)

        if msg.pos == len(msg.reverse_route) - 1:
            self._at_source(msg)
            return
        nxt = msg.reverse_route[msg.pos + 1]
        msg.pos += 1
        self.schedule(self.now + self.params.t_p + self.delays[(node, nxt)], CTRL, nxt, msg)

    def _at_source(self, msg: ControlMessage) -> None:
        burst = self.buffer.get(msg.burst_id)
        if burst is None:
            self.unknown_control += 1
            log.warning("control message for unknown burst %d", msg.burst_id)
            return
        if msg.kind == ACK:
            del self.buffer[msg.burst_id]
        elif burst.retransmission_count < self.n_ret:
            self.schedule(self.now + self.idle_time, RETX, burst.source, burst)
        else:
            self._lose(burst)


def run(cfg: SimConfig, topo: Topology, table: RouteTable, strategy: Optional[str] = None,
        load: Optional[float] = None, seed: Optional[int] = None, **kwargs) -> MetricsReport:
    """Run one instance; defaults to the first strategy/load/seed in ``cfg``."""
    sim = Simulation(cfg, topo, table,
                     strategy if strategy is not None else cfg.strategies[0],
                     load if load is not None else cfg.loads[0],
                     seed if seed is not None else cfg.seeds[0], **kwargs)
    return sim.run()
