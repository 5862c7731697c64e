"""
Domain errors raised by the solvers, the trace loader and the CLI.

All of them are ValueError subclasses so callers that only care about
"bad input" can catch a single type.
"""
from typing import Iterable, Optional


class ConfigurationError(ValueError):
    """Invalid run configuration (learning rate, dimensions, weights)."""


class InfeasibleError(ValueError):
    """No routing satisfies the gateway, capacity and connectivity constraints."""

    def __init__(self, gateways: Iterable[int], slot: Optional[int] = None, detail: str = ""):
        self.gateways = tuple(sorted(int(j) for j in gateways))
        self.slot = slot
        where = f"slot {slot}: " if slot is not None else ""
        message = f"{where}infeasible routing, violating gateway set {list(self.gateways)}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)

    def at_slot(self, slot: int) -> "InfeasibleError":
        return InfeasibleError(self.gateways, slot=slot)


class CapacityExceededError(ValueError):
    """A fixed routing puts more load on a data center than it can serve."""

    def __init__(self, dc: int, load: float, capacity: float, slot: Optional[int] = None):
        self.dc = dc
        self.load = load
        self.capacity = capacity
        self.slot = slot
        where = f"slot {slot}: " if slot is not None else ""
        super().__init__(
            f"{where}data center {dc} receives {load:.6g} MW but its capacity is {capacity:.6g} MW"
        )


class TraceFormatError(ValueError):
    """A trace file is missing or holds a malformed / out-of-range record."""

    def __init__(self, file: str, line: Optional[int], message: str):
        self.file = file
        self.line = line
        location = f"{file}:{line}" if line is not None else file
        super().__init__(f"{location}: {message}")
