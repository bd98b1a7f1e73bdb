"""Per-run observables and their CSV serialization."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

CSV_COLUMNS = ["scenario", "strategy", "load", "seed", "generated", "delivered", "lost",
               "blr", "goodput_gbps", "deflections", "retransmissions", "mean_delay_us"]


@dataclass
class Counters:
    """Raw tallies accumulated by one simulation instance."""

    generated: int = 0
    delivered: int = 0
    lost: int = 0
    delivered_bits: int = 0
    deflections: int = 0
    retransmissions: int = 0
    delay_sum: float = 0.0


@dataclass
class MetricsReport:
    scenario: str
    strategy: str
    load: float
    seed: int
    bursts_generated: int
    delivered: int
    permanently_lost: int
    blr: float
    goodput_gbps: float
    deflections: int
    retransmissions: int
    mean_delay_us: float
    blr_undefined: bool = field(default=False, compare=False)

    # stored in CSV units so a written row parses back to identical values

    @property
    def goodput_bps(self) -> float:
        return self.goodput_gbps * 1e9

    @property
    def mean_e2e_delay(self) -> float:
        """Mean end-to-end delay in seconds."""
        return self.mean_delay_us * 1e-6

    def row(self) -> List[str]:
        return [self.scenario, self.strategy, repr(self.load), str(self.seed),
                str(self.bursts_generated), str(self.delivered), str(self.permanently_lost),
                repr(self.blr), repr(self.goodput_gbps), str(self.deflections),
                str(self.retransmissions), repr(self.mean_delay_us)]

    @classmethod
    def from_row(cls, row: dict) -> "MetricsReport":
        generated = int(row["generated"])
        return cls(
            scenario=row["scenario"], strategy=row["strategy"], load=float(row["load"]),
            seed=int(row["seed"]), bursts_generated=generated,
            delivered=int(row["delivered"]), permanently_lost=int(row["lost"]),
            blr=float(row["blr"]), goodput_gbps=float(row["goodput_gbps"]),
            deflections=int(row["deflections"]), retransmissions=int(row["retransmissions"]),
            mean_delay_us=float(row["mean_delay_us"]), blr_undefined=generated == 0)


def finalize(counters: Counters, interval: float, scenario: str = "", strategy: str = "",
             load: float = 0.0, seed: int = 0) -> MetricsReport:
    """Turn drained counters into a report; ``interval`` is the measurement window in seconds."""
    if counters.delivered + counters.lost != counters.generated:
        raise ValueError(f"run not drained: {counters}")
    undefined = counters.generated == 0
    blr = 0.0 if undefined else counters.lost / counters.generated
    goodput = counters.delivered_bits / interval if interval > 0 else 0.0
    delay = counters.delay_sum / counters.delivered if counters.delivered else 0.0
    return MetricsReport(scenario, strategy, load, seed, counters.generated, counters.delivered,
                         counters.lost, blr, goodput / 1e9, counters.deflections,
                         counters.retransmissions, delay * 1e6, blr_undefined=undefined)


def sort_key(r: MetricsReport):
    return (r.scenario, r.strategy, r.load, r.seed)


def write_csv(reports: Iterable[MetricsReport], path: Union[str, Path, io.TextIOBase],
              header_comments: Sequence[str] = (), append: bool = False) -> None:
    """Write reports as CSV. With ``append`` on an existing file, only rows are added."""
    if isinstance(path, io.TextIOBase):
        _write(reports, path, header_comments, header=True)
        return
    path = Path(path)
    existing = append and path.exists() and path.stat().st_size > 0
    with path.open("a" if existing else "w", newline="") as fh:
        _write(reports, fh, header_comments, header=not existing)


def _write(reports, fh, header_comments, header: bool) -> None:
    if header:
        for line in header_comments:
            fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.row())


def read_csv(path: Union[str, Path]) -> List[MetricsReport]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [MetricsReport.from_row(row) for row in csv.DictReader(lines)]


def csv_body(path: Union[str, Path]) -> str:
    """File contents minus the comment header (for determinism comparisons)."""
    with Path(path).open() as fh:
        return "".join(ln for ln in fh if not ln.startswith("#"))


def seed_mean(reports: Iterable[MetricsReport], attr: str, scenario: str, strategy: str,
              load: float, per_burst: bool = False) -> Optional[float]:
    vals = []
    for r in reports:
        if (r.scenario, r.strategy) == (scenario, strategy) and abs(r.load - load) < 1e-9:
            v = getattr(r, attr)
            if per_burst:
                v = v / r.bursts_generated if r.bursts_generated else 0.0
            vals.append(v)
    return sum(vals) / len(vals) if vals else None
