"""Offline fit of the deflection threshold line.

For each load, AHDR runs with a range of constant thresholds; the threshold
with the lowest seed-averaged BLR is paired with the network link BLR the
nodes observed under it. A least-squares line through those pairs gives the
slope and intercept used at run time.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .config import SimConfig
from .engine import Simulation
from .stats import ThresholdModel
from .topology import RouteTable, Topology, build_route_table, load_topology

DEFAULT_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5)
DEFAULT_CAL_SEEDS = (101, 102)
DEFAULT_CAL_LOADS = (0.3, 0.5, 0.7, 0.9)


@dataclass
class CalibrationPoint:
    load: float
    threshold: float
    blr: float
    link_blr: float


@dataclass
class Calibration:
    omega: float
    phi: float
    best: List[CalibrationPoint]
    grid: List[CalibrationPoint]


def evaluate_threshold(cfg: SimConfig, topo: Topology, table: RouteTable, load: float,
                       threshold: float, seeds: Sequence[int]) -> CalibrationPoint:
    fixed = cfg.with_(threshold_mode="calibrated", omega=0.0, phi=threshold)
    blrs, link_blrs = [], []
    for seed in seeds:
        sim = Simulation(fixed, topo, table, "ahdr", load, seed)
        report = sim.run()
        blrs.append(report.blr)
        link_blrs.append(sim.mean_link_blr)
    return CalibrationPoint(load, threshold, sum(blrs) / len(blrs), sum(link_blrs) / len(link_blrs))


def calibrate(cfg: SimConfig, topo: Topology, table: RouteTable,
              loads: Sequence[float] = DEFAULT_CAL_LOADS,
              grid: Sequence[float] = DEFAULT_GRID,
              seeds: Sequence[int] = DEFAULT_CAL_SEEDS,
              progress=None) -> Calibration:
    all_points: List[CalibrationPoint] = []
    best: List[CalibrationPoint] = []
    for load in loads:
        points = []
        for th in grid:
            pt = evaluate_threshold(cfg, topo, table, load, th, seeds)
            points.append(pt)
            if progress:
                progress(pt)
        # lowest BLR wins; ties go to the smaller threshold
        best.append(min(points, key=lambda p: (p.blr, p.threshold)))
        all_points.extend(points)
    model = ThresholdModel(min_samples=1, capacity=max(1, len(best)))
    for pt in best:
        model.add_sample(pt.link_blr, pt.threshold)
    model.fit()
    return Calibration(model.omega, model.phi, best, all_points)


def main(argv: Optional[List[str]] = None) -> int:
    from .cli import build_config, parse_floats, parse_ints

    parser = argparse.ArgumentParser(
        prog="obsim-calibrate",
        description="Fit the AHDR threshold line (omega, phi) by sweeping constant thresholds.")
    parser.add_argument("--topology", default=None)
    parser.add_argument("--scenario", default="general", choices=("general", "bottleneck"))
    parser.add_argument("--loads", default=",".join(map(str, DEFAULT_CAL_LOADS)))
    parser.add_argument("--grid", default=",".join(map(str, DEFAULT_GRID)))
    parser.add_argument("--seeds", default=",".join(map(str, DEFAULT_CAL_SEEDS)),
                        help="keep these disjoint from evaluation seeds")
    parser.add_argument("--min-bursts", type=int, default=30000)
    parser.add_argument("--xi", type=float, default=2.0)
    args = parser.parse_args(argv)

    cfg = build_config({"topology": args.topology, "scenario": args.scenario,
                        "min_bursts": args.min_bursts, "horizon_s": 0.01, "xi": args.xi})
    topo = load_topology(cfg.topology)
    table = build_route_table(topo, cfg.xi, cfg.max_alternatives)

    def show(pt: CalibrationPoint) -> None:
        print(f"load={pt.load:g} threshold={pt.threshold:g} blr={pt.blr:.6f} "
              f"link_blr={pt.link_blr:.6f}", file=sys.stderr, flush=True)

    cal = calibrate(cfg, topo, table, parse_floats(args.loads), parse_floats(args.grid),
                    parse_ints(args.seeds), progress=show)
    for pt in cal.best:
        print(f"best load={pt.load:g} threshold={pt.threshold:g} link_blr={pt.link_blr:.6f} blr={pt.blr:.6f}")
    print(f"omega={cal.omega!r}")
    print(f"phi={cal.phi!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
