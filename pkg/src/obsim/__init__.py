"""Optical burst switching simulator with adaptive hybrid deflection and
retransmission (AHDR), a limited-deflection baseline (LHDR) and pure OBS."""

from .config import SimConfig
from .engine import Simulation, run
from .metrics import MetricsReport
from .topology import Route, RouteTable, Topology, build_route_table, load_topology

__all__ = ["SimConfig", "Simulation", "run", "MetricsReport", "Route", "RouteTable",
           "Topology", "build_route_table", "load_topology"]
__version__ = "0.1.0"
