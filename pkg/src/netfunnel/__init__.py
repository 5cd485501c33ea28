"""Simulation and analysis of networks coupled through edge-wise funnels."""

__version__ = "0.1.0"

from .errors import NetFunnelError  # noqa: E402
from .scenario import Scenario, load, loads  # noqa: E402
from .sim import IntegratorConfig, SimState, TrajectoryLog, run  # noqa: E402

__all__ = ["__version__", "NetFunnelError", "Scenario", "load", "loads",
           "IntegratorConfig", "SimState", "TrajectoryLog", "run"]
