"""Link measurements, per-node network state, and the probability math that
drives deflection decisions.

Dropping probability of a link is a weighted blend of its loss ratio and
utilization; the success probability of a route is the product of its links'
complements; the deflection threshold is a least-squares line in BLR.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Optional, Sequence, Tuple

LinkKey = Tuple[int, int]


class LinkStats:
    """Sliding-window loss ratio and utilization for one directed link.

    BLR is count-based (the last ``window_attempts`` reservation attempts);
    utilization is time-based (busy channel-seconds recorded within the last
    ``window_duration`` seconds, over the link's data capacity).
    """

    __slots__ = ("window_attempts", "window_duration", "n_data_channels",
                 "_outcomes", "_failures", "_occupancy", "_busy", "total_attempts")

    def __init__(self, window_attempts: int = 100, window_duration: float = 0.32,
                 n_data_channels: int = 4):
        if window_attempts < 1:
            raise ValueError("window_attempts must be positive")
        if window_duration <= 0:
            raise ValueError("window_duration must be positive")
        self.window_attempts = window_attempts
        self.window_duration = window_duration
        self.n_data_channels = n_data_channels
        self._outcomes: Deque[bool] = deque()
        self._failures = 0
        self._occupancy: Deque[Tuple[float, float]] = deque()
        self._busy = 0.0
        self.total_attempts = 0

    def record_attempt(self, success: bool) -> "LinkStats":
        self._outcomes.append(success)
        self.total_attempts += 1
        if not success:
            self._failures += 1
        if len(self._outcomes) > self.window_attempts:
            if not self._outcomes.popleft():
                self._failures -= 1
        return self

    @property
    def blr(self) -> float:
        if not self._outcomes:
            return 0.0
        return self._failures / len(self._outcomes)

    def record_occupancy(self, busy_channel_time: float, now: float) -> "LinkStats":
        if busy_channel_time < 0:
            raise ValueError("busy_channel_time must be >= 0")
        self._occupancy.append((now, busy_channel_time))
        self._busy += busy_channel_time
        self._evict(now)
        return self

    def _evict(self, now: float) -> None:
        horizon = now - self.window_duration
        occ = self._occupancy
        while occ and occ[0][0] < horizon:
            self._busy -= occ.popleft()[1]
        if not occ:
            self._busy = 0.0  # no float drift once empty

    def utilization(self, now: Optional[float] = None) -> float:
        if now is not None:
            self._evict(now)
        u = self._busy / (self.n_data_channels * self.window_duration)
        return min(1.0, max(0.0, u))


@dataclass(frozen=True)
class StatsPayload:
    """Link statistics carried by an ACK or NACK."""

    link: LinkKey
    blr: float
    utilization: float
    measured_at: float

    def __post_init__(self):
        if not (0.0 <= self.blr <= 1.0 and 0.0 <= self.utilization <= 1.0):
            raise ValueError(f"payload values out of [0,1]: {self}")


class NetworkStateTable:
    """One node's view of every link it has heard about."""

    __slots__ = ("owner", "entries", "_blr_sum")

    def __init__(self, owner: int):
        self.owner = owner
        # link -> (blr, utilization, last_updated)
        self.entries: Dict[LinkKey, Tuple[float, float, float]] = {}
        self._blr_sum = 0.0

    def apply_payload(self, p: StatsPayload) -> bool:
        """Store ``p`` unless an entry measured later is already present.

        Returns True when the table changed.
        """
        old = self.entries.get(p.link)
        if old is not None:
            if p.measured_at < old[2]:
                return False
            self._blr_sum -= old[0]
        self.entries[p.link] = (p.blr, p.utilization, p.measured_at)
        self._blr_sum += p.blr
        return True

    def get(self, link: LinkKey) -> Optional[Tuple[float, float, float]]:
        return self.entries.get(link)

    def mean_blr(self) -> float:
        """Mean BLR over all known links, 0 when nothing is known."""
        if not self.entries:
            return 0.0
        return max(0.0, self._blr_sum / len(self.entries))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Weights:
    w_blr: float = 0.5
    w_u: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.w_blr <= 1.0 and 0.0 <= self.w_u <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.w_blr + self.w_u - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.w_blr} + {self.w_u}")

    @classmethod
    def from_blr_weight(cls, w_blr: float) -> "Weights":
        return cls(w_blr, 1.0 - w_blr)


def dropping_probability(entry: Tuple[float, float], w: Weights) -> float:
    blr, utilization = entry[0], entry[1]
    return w.w_blr * blr + w.w_u * utilization


def success_probability(route: Sequence[int], table: NetworkStateTable, w: Weights) -> float:
    """Product of per-link success probabilities along ``route``.

    ``route`` is a node sequence (a :class:`~obsim.topology.Route`'s ``nodes``).
    Links with no entry in ``table`` count as lossless.
    """
    entries = table.entries
    wb, wu = w.w_blr, w.w_u
    sp = 1.0
    for i in range(len(route) - 1):
        e = entries.get((route[i], route[i + 1]))
        if e is not None:
            sp *= 1.0 - (wb * e[0] + wu * e[1])
    return sp


def least_squares_line(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """Ordinary least-squares slope and intercept; raises on zero x-variance."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise ZeroDivisionError("x values have zero variance")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx


@dataclass
class ThresholdModel:
    """Linear success-probability threshold as a function of BLR.

    Before ``min_samples`` samples have been fitted, :meth:`threshold`
    returns ``default_threshold``.
    """

    min_samples: int = 10
    default_threshold: float = 0.5
    capacity: int = 200
    omega: float = 0.0
    phi: float = 0.0
    fitted: bool = False
    samples: Deque[Tuple[float, float]] = field(default_factory=deque)

    def __post_init__(self):
        if not isinstance(self.samples, deque) or self.samples.maxlen != self.capacity:
            self.samples = deque(self.samples, maxlen=self.capacity)

    def add_sample(self, blr: float, sp_th: float) -> None:
        self.samples.append((blr, sp_th))

    def fit(self) -> "ThresholdModel":
        if len(self.samples) < self.min_samples:
            return self
        xs = [s[0] for s in self.samples]
        ys = [s[1] for s in self.samples]
        try:
            self.omega, self.phi = least_squares_line(xs, ys)
        except ZeroDivisionError:
            # all BLR samples equal: flat line through the mean threshold
            self.omega, self.phi = 0.0, sum(ys) / len(ys)
        self.fitted = True
        return self

    def threshold(self, blr: float) -> float:
        if not self.fitted:
            return self.default_threshold
        return min(1.0, max(0.0, self.omega * blr + self.phi))


def fit_threshold(m: ThresholdModel) -> ThresholdModel:
    return m.fit()


def threshold(m: ThresholdModel, blr: float) -> float:
    return m.threshold(blr)

