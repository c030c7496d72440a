"""Discrete-event simulator for AODV and AODV secured with keyed message digests."""

from .digest import SecretKey, Verdict, sign, verify
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import SimResult, Simulator, run

__all__ = [
    "SecretKey",
    "Verdict",
    "sign",
    "verify",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "SimResult",
    "Simulator",
    "run",
]
__version__ = "0.1.0"
