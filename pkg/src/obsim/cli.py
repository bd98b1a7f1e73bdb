"""Experiment runner: sweeps strategies x loads x seeds and writes CSV.

Precedence of settings: command-line flags, then ``--config`` file
(flat ``key=value`` lines), then built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import STRATEGIES, ConfigError, SimConfig
from .engine import EngineError, Simulation
from .metrics import CSV_COLUMNS, MetricsReport, seed_mean, sort_key, write_csv
from .topology import TopologyError, build_route_table, load_topology

log = logging.getLogger(__name__)

CSV_HEADER = ",".join(CSV_COLUMNS)

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own code for unknown flags
EXIT_RANGE = 3
EXIT_TOPOLOGY = 4
EXIT_IO = 5
EXIT_ABORT = 6

# flag name -> (config field, help). Modelling-choice defaults are marked "(chosen)".
OPTIONS: Dict[str, Tuple[str, str]] = {
    "topology": ("topology", "topology file; default: bundled 14-node NSFNET (chosen)"),
    "scenario": ("scenario", "general | bottleneck"),
    "strategy": ("strategies", "ahdr | lhdr | pure, a comma list, or 'all'"),
    "loads": ("loads", "comma list of offered loads (default 0.1..0.9 step 0.1)"),
    "seeds": ("seeds", "comma list of distinct seeds (default 1)"),
    "xi": ("xi", "deflection route length ratio limit (default 2.0, chosen)"),
    "max-alternatives": ("max_alternatives", "deflection routes kept per node pair (default 5, chosen)"),
    "w-blr": ("w_blr", "BLR weight of the dropping probability; utilization weight is 1 - w-blr (default 0.5, chosen)"),
    "n-ret": ("n_ret", "retransmissions allowed per burst (default 1)"),
    "idle-us": ("idle_us", "wait before a retransmission in us (default 2 mean burst durations, chosen)"),
    "t-conf-us": ("t_conf_us", "switch configuration time in us (default 10, chosen)"),
    "t-p-us": ("t_p_us", "per-hop BHP processing time in us (default 1, chosen)"),
    "max-deflections": ("max_deflections", "LHDR deflections per burst (default 1, chosen)"),
    "blr-window": ("blr_window", "reservation attempts in the per-link BLR window (default 100, chosen)"),
    "util-window-bursts": ("util_window_bursts", "utilization window in mean burst durations (default 100, chosen)"),
    "refresh-ms": ("refresh_ms", "statistics refresh period in ms (default 100, chosen)"),
    "threshold-mode": ("threshold_mode", "calibrated (offline-fitted line, default) | ack (online ACK sampling)"),
    "omega": ("omega", "threshold line slope for calibrated mode"),
    "phi": ("phi", "threshold line intercept for calibrated mode"),
    "threshold-min-samples": ("threshold_min_samples", "ack mode: samples before the first fit (default 10, chosen)"),
    "threshold-default": ("threshold_default", "ack mode: threshold before the first fit (default 0.5, chosen)"),
    "threshold-capacity": ("threshold_capacity", "ack mode: sample ring size (default 200, chosen)"),
    "mean-burst-kb": ("mean_burst_kb", "mean burst size in KB (default 400)"),
    "horizon-s": ("horizon_s", "traffic generation horizon in simulated seconds (default 1.0, chosen)"),
    "min-bursts": ("min_bursts", "extend the horizon until this many measured bursts are expected (default 0)"),
    "warmup-fraction": ("warmup_fraction", "fraction of the horizon excluded from metrics (default 0.1, chosen)"),
    "generators": ("generators", "number of traffic generators (default: every node pair / 7x7 bottleneck, chosen)"),
    "bottleneck-nodes": ("bottleneck_nodes", "source nodes in the bottleneck scenario (default 7)"),
    "bottleneck-dst": ("bottleneck_dst", "bottleneck destinations: any | selected (default any, chosen)"),
    "out": ("out", "CSV output path (default: stdout)"),
    "trace": ("trace", "event trace path; one file per instance when the sweep has several"),
    "plot-dir": ("plot_dir", "directory for gnuplot-ready .dat files"),
    "workers": ("workers", "parallel simulation instances (default: CPU count)"),
}


def parse_floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def parse_ints(text: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def parse_strategies(text: str) -> Tuple[str, ...]:
    if str(text).strip() == "all":
        return STRATEGIES
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _coerce(name: str, value):
    if value is None or not isinstance(value, str):
        return value
    field_types = {f.name: f.type for f in fields(SimConfig)}
    kind = field_types[name]
    if name == "strategies":
        return parse_strategies(value)
    if name == "loads":
        return parse_floats(value)
    if name == "seeds":
        return parse_ints(value)
    if value.lower() == "none" and "Optional" in kind:
        return None
    if "int" in kind:
        return int(value)
    if "float" in kind:
        return float(value)
    return value


def build_config(values: Dict[str, object]) -> SimConfig:
    """Build a validated config from field-name keyed values (strings allowed)."""
    known = {f.name for f in fields(SimConfig)}
    kwargs = {}
    for key, value in values.items():
        if value is None:
            continue
        name = key.replace("-", "_")
        if name == "strategy":
            name = "strategies"
        if name not in known:
            raise ConfigError(f"unknown setting {key!r}")
        try:
            kwargs[name] = _coerce(name, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return SimConfig(**kwargs)


def read_config_file(path: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if line == CSV_HEADER:
            break  # a results file: its data rows are not settings
        if line.startswith("#"):
            # echoed CSV headers are accepted verbatim: use their key=value lines only
            line = line.lstrip("#").strip()
            if "=" not in line:
                continue
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obsim",
        description="OBS contention-resolution simulator (AHDR, LHDR, pure OBS). "
                    "Runs every strategy x load x seed combination and writes one CSV row each.")
    parser.add_argument("--config", help="flat key=value file; flags override it")
    for flag, (_, help_text) in OPTIONS.items():
        parser.add_argument(f"--{flag}", default=None, help=help_text)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_config(argv: Optional[Sequence[str]] = None) -> SimConfig:
    args = make_parser().parse_args(argv)
    values: Dict[str, object] = {}
    if args.config:
        values.update(read_config_file(args.config))
    for flag, (name, _) in OPTIONS.items():
        v = getattr(args, flag.replace("-", "_"))
        if v is not None:
            values[name] = v
    return build_config(values)


def _instance_trace(cfg: SimConfig, strategy: str, load: float, seed: int, many: bool) -> Optional[str]:
    if not cfg.trace:
        return None
    if not many:
        return cfg.trace
    p = Path(cfg.trace)
    return str(p.with_name(f"{p.stem}.{cfg.scenario}.{strategy}.{load:g}.{seed}{p.suffix}"))


def run_instance(job) -> Tuple[MetricsReport, Optional[str]]:
    cfg, strategy, load, seed, trace_path, trace_hash = job
    topo = load_topology(cfg.topology)
    table = build_route_table(topo, cfg.xi, cfg.max_alternatives)
    sim = Simulation(cfg, topo, table, strategy, load, seed,
                     trace_path=trace_path, trace_hash=trace_hash)
    return sim.run(), sim.trace_hash


def sweep(cfg: SimConfig, trace_hash: bool = False) -> List[Tuple[MetricsReport, Optional[str]]]:
    """Run every (strategy, load, seed) instance; results sorted by (strategy, load, seed)."""
    combos = [(s, l, seed) for s in cfg.strategies for l in cfg.loads for seed in cfg.seeds]
    many = len(combos) > 1
    jobs = [(cfg, s, l, seed, _instance_trace(cfg, s, l, seed, many), trace_hash)
            for s, l, seed in combos]
    workers = cfg.workers or os.cpu_count() or 1
    if workers > 1 and many:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_instance, jobs))
    else:
        results = []
        for job in jobs:
            results.append(run_instance(job))
            log.info("done %s load=%g seed=%d", job[1], job[2], job[3])
    return sorted(results, key=lambda r: sort_key(r[0]))


PLOT_METRICS = {
    "blr": ("blr", False),
    "goodput_gbps": ("goodput_gbps", False),
    "deflections_per_burst": ("deflections", True),
    "retransmissions_per_burst": ("retransmissions", True),
}


def write_plot_data(reports: Sequence[MetricsReport], out_dir: str) -> List[Path]:
    """One whitespace-separated file per (scenario, metric): ``load <strategy>...`` seed means."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for scenario in sorted({r.scenario for r in reports}):
        strategies = [s for s in STRATEGIES if any(r.strategy == s and r.scenario == scenario for r in reports)]
        loads = sorted({r.load for r in reports if r.scenario == scenario})
        for metric, (attr, per_burst) in PLOT_METRICS.items():
            path = out / f"{scenario}_{metric}.dat"
            lines = [f"# load {' '.join(strategies)}"]
            for load in loads:
                cells = []
                for s in strategies:
                    v = seed_mean(reports, attr, scenario, s, load, per_burst)
                    cells.append("nan" if v is None else repr(v))
                lines.append(f"{load!r} {' '.join(cells)}")
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    verbose = "-v" in argv or "--verbose" in argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"obsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_RANGE
    except OSError as exc:
        print(f"obsim: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        topo = load_topology(cfg.topology)
        build_route_table(topo, cfg.xi, cfg.max_alternatives)
    except FileNotFoundError as exc:
        print(f"obsim: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except TopologyError as exc:
        print(f"obsim: invalid topology: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY

    try:
        results = sweep(cfg)
    except (EngineError, ValueError) as exc:
        print(f"obsim: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    reports = [r for r, _ in results]
    header = ["effective configuration (feed back with --config):"] + cfg.echo() + [
        "load: offered bits/s over one egress link's data capacity per source node"]
    try:
        if cfg.out:
            write_csv(reports, cfg.out, header_comments=header)
        else:
            write_csv(reports, sys.stdout, header_comments=header)
        if cfg.plot_dir:
            write_plot_data(reports, cfg.plot_dir)
    except OSError as exc:
        print(f"obsim: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
