"""Transfer-counting workbench for algorithms on asymmetric read/write memory."""
from .memsim import (READ, WRITE, IoStats, Kind, Policy, SimConfig, Simulator,
                     TrackedArray, io_cost)

__all__ = ["READ", "WRITE", "IoStats", "Kind", "Policy", "SimConfig", "Simulator",
           "TrackedArray", "io_cost"]
__version__ = "0.1.0"
