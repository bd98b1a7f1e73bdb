"""Contention-resolution decisions and ingress offset computation.

Everything here is a pure function of its arguments; node state lives in
the engine and is passed in through :class:`ContentionContext`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .stats import NetworkStateTable, ThresholdModel, Weights, success_probability
from .topology import Route


class Strategy(str, enum.Enum):
    AHDR = "ahdr"
    LHDR = "lhdr"
    PURE = "pure"


class Kind(enum.Enum):
    FORWARD = "forward"
    DEFLECT = "deflect"
    RETRANSMIT = "retransmit"
    DROP = "drop"


@dataclass(frozen=True)
class Decision:
    kind: Kind
    route: Optional[Route] = None
    sp: Optional[float] = None
    threshold: Optional[float] = None


FORWARD = Kind.FORWARD
DEFLECT = Kind.DEFLECT
RETRANSMIT = Kind.RETRANSMIT
DROP = Kind.DROP


@dataclass
class ContentionContext:
    node: int
    destination: int
    primary_remainder: Route
    alternatives: Sequence[Route]
    state: NetworkStateTable
    threshold_model: ThresholdModel
    weights: Weights

    def __post_init__(self):
        for alt in self.alternatives:
            if alt.source != self.node or alt.destination != self.destination:
                raise ValueError(f"alternative {alt.nodes} does not run {self.node}->{self.destination}")


@dataclass(frozen=True)
class OffsetParams:
    t_conf: float = 10e-6
    t_p: float = 1e-6

    def __post_init__(self):
        if self.t_conf <= 0 or self.t_p <= 0:
            raise ValueError("t_conf and t_p must be positive")


def best_alternative(ctx: ContentionContext) -> Optional[Tuple[Route, float]]:
    """Alternative with the highest success probability.

    Ties go to the shorter route, then the lexicographically smaller one.
    """
    best: Optional[Tuple[Route, float]] = None
    best_key = None
    for alt in ctx.alternatives:
        sp = success_probability(alt.nodes, ctx.state, ctx.weights)
        key = (-sp, alt.hops, alt.nodes)
        if best_key is None or key < best_key:
            best, best_key = (alt, sp), key
    return best


def current_threshold(ctx: ContentionContext) -> float:
    return ctx.threshold_model.threshold(ctx.state.mean_blr())


def ahdr_decide(ctx: ContentionContext, retransmissions_so_far: int, n_ret: int) -> Decision:
    best = best_alternative(ctx)
    th = current_threshold(ctx)
    if best is not None and best[1] >= th:
        return Decision(DEFLECT, best[0], best[1], th)
    if retransmissions_so_far < n_ret:
        return Decision(RETRANSMIT, threshold=th)
    return Decision(DROP, threshold=th)


def lhdr_decide(ctx: ContentionContext, deflections_so_far: int, max_deflections: int,
                retransmissions_so_far: int, n_ret: int) -> Decision:
    """Static baseline: take the shortest alternative while under the deflection cap."""
    if deflections_so_far < max_deflections and ctx.alternatives:
        shortest = min(ctx.alternatives, key=lambda r: (r.hops, r.nodes))
        return Decision(DEFLECT, shortest)
    if retransmissions_so_far < n_ret:
        return Decision(RETRANSMIT)
    return Decision(DROP)


def pure_obs_decide() -> Decision:
    return Decision(DROP)


def defl_permitted(best_sp: Optional[float], th: float) -> bool:
    return best_sp is not None and best_sp >= th


def hop_count_for_offset(permitted: bool, max_defl_hops: int, shortest_hops: int) -> int:
    return max_defl_hops if permitted else shortest_hops


def compute_offset(p: OffsetParams, permitted: bool, max_defl_hops: int, shortest_hops: int) -> float:
    """Minimum offset ``t_conf + N_hops * t_p`` with the hop count predicted at ingress."""
    if max_defl_hops < 1 or shortest_hops < 1:
        raise ValueError("hop counts must be >= 1")
    return p.t_conf + hop_count_for_offset(permitted, max_defl_hops, shortest_hops) * p.t_p
