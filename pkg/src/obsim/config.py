"""Simulation configuration shared by the engine and the command line."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import List, Optional, Tuple

from .traffic import MEAN_BURST_SIZE_BITS

STRATEGIES = ("ahdr", "lhdr", "pure")
SCENARIOS = ("general", "bottleneck")
THRESHOLD_MODES = ("calibrated", "ack")

# Threshold line fitted by ``obsim-calibrate`` on NSFNET, general scenario,
# calibration seeds 101-102 (see README for the exact command).
CALIBRATED_OMEGA = 0.3699
CALIBRATED_PHI = 0.0766
DEFAULT_LOADS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class ConfigError(ValueError):
    """Out-of-range or inconsistent configuration value."""


@dataclass(frozen=True)
class SimConfig:
    topology: Optional[str] = None  # None: bundled NSFNET
    scenario: str = "general"
    strategies: Tuple[str, ...] = ("ahdr",)
    loads: Tuple[float, ...] = DEFAULT_LOADS
    seeds: Tuple[int, ...] = (1,)
    xi: float = 2.0
    max_alternatives: int = 5
    w_blr: float = 0.5
    n_ret: int = 1
    idle_us: Optional[float] = None  # None: 2 mean burst durations
    t_conf_us: float = 10.0
    t_p_us: float = 1.0
    max_deflections: int = 1  # LHDR cap
    blr_window: int = 100
    util_window_bursts: float = 100.0  # utilization window in mean burst durations
    refresh_ms: float = 100.0
    threshold_mode: str = "calibrated"
    omega: float = CALIBRATED_OMEGA
    phi: float = CALIBRATED_PHI
    threshold_min_samples: int = 10
    threshold_default: float = 0.5
    threshold_capacity: int = 200
    mean_burst_kb: float = MEAN_BURST_SIZE_BITS / 8e3
    horizon_s: float = 1.0
    min_bursts: int = 0  # extend the horizon until this many measured bursts are expected
    warmup_fraction: float = 0.1
    generators: Optional[int] = None
    bottleneck_nodes: int = 7
    bottleneck_dst: str = "any"
    out: Optional[str] = None
    trace: Optional[str] = None
    plot_dir: Optional[str] = None
    workers: Optional[int] = None  # None: one per CPU

    def __post_init__(self):
        self.validate()

    @property
    def w_u(self) -> float:
        return 1.0 - self.w_blr

    @property
    def mean_burst_bits(self) -> float:
        return self.mean_burst_kb * 8e3

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}")
        need(len(self.strategies) > 0 and all(s in STRATEGIES for s in self.strategies),
             f"strategies must be drawn from {STRATEGIES}")
        need(len(self.loads) > 0 and all(l > 0 for l in self.loads), "loads must be > 0")
        need(len(set(self.seeds)) == len(self.seeds) and len(self.seeds) > 0, "seeds must be distinct")
        need(self.xi >= 1, "xi must be >= 1")
        need(self.max_alternatives >= 1, "max_alternatives must be >= 1")
        need(0.0 <= self.w_blr <= 1.0, "w_blr must lie in [0, 1]")
        need(self.n_ret >= 0, "n_ret must be >= 0")
        need(self.idle_us is None or self.idle_us >= 0, "idle_us must be >= 0")
        need(self.t_conf_us > 0 and self.t_p_us > 0, "t_conf_us and t_p_us must be > 0")
        need(self.max_deflections >= 0, "max_deflections must be >= 0")
        need(self.blr_window >= 1, "blr_window must be >= 1")
        need(self.util_window_bursts > 0, "util_window_bursts must be > 0")
        need(self.refresh_ms > 0, "refresh_ms must be > 0")
        need(self.threshold_mode in THRESHOLD_MODES, f"threshold_mode must be one of {THRESHOLD_MODES}")
        need(self.threshold_min_samples >= 1, "threshold_min_samples must be >= 1")
        need(0.0 <= self.threshold_default <= 1.0, "threshold_default must lie in [0, 1]")
        need(self.threshold_capacity >= 1, "threshold_capacity must be >= 1")
        need(self.mean_burst_kb > 0, "mean_burst_kb must be > 0")
        need(self.horizon_s > 0, "horizon_s must be > 0")
        need(self.min_bursts >= 0, "min_bursts must be >= 0")
        need(0.0 <= self.warmup_fraction < 1.0, "warmup_fraction must lie in [0, 1)")
        need(self.generators is None or self.generators >= 1, "generators must be >= 1")
        need(self.bottleneck_nodes >= 2, "bottleneck_nodes must be >= 2")
        need(self.bottleneck_dst in ("any", "selected"), "bottleneck_dst must be any|selected")
        need(self.workers is None or self.workers >= 1, "workers must be >= 1")

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def echo(self) -> List[str]:
        """``key=value`` lines that reproduce this configuration when fed back."""
        lines = []
        for f in fields(self):
            if f.name in ("out", "workers"):
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return lines
