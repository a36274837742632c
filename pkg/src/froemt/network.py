"""
Per-phase lumped network elements, load allocation and switching events.

Every element is single-phase and uncoupled.  Series R-L branches carry a
current state; shunt capacitance at a node makes its voltage a state, other
nodes close through an algebraic current balance.
"""

from dataclasses import dataclass, replace
import logging
import math

from .integrators import DerivativeBundle

log = logging.getLogger(__name__)

__all__ = [
    "PHASES",
    "Node",
    "SeriesRLBranch",
    "ShuntCapacitor",
    "LoadAllocation",
    "FaultSpec",
    "Event",
    "Topology",
    "NetworkError",
    "allocate_load",
    "impedance_from_power",
    "branch_derivatives",
    "node_derivatives",
    "kcl_residual",
    "snap_event_time",
    "apply_event",
]

PHASES = ("A", "B", "C")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Node:
    bus: str
    phase: str

    def __str__(self):
        return f"{self.bus}:{self.phase}"


@dataclass(frozen=True)
class SeriesRLBranch:
    """One phase of a series R-L element.  ``to_node`` None means ground."""

    name: str
    from_node: Node
    to_node: Node | None
    r: float
    l: float
    kind: str = "line"

    @property
    def id(self):
        return f"{self.name}:{self.from_node.phase}"


@dataclass(frozen=True)
class ShuntCapacitor:
    node: Node
    c: float


@dataclass(frozen=True)
class LoadAllocation:
    s: complex
    k: float
    s_a: complex
    s_b: complex
    s_c: complex

    def per_phase(self):
        return {"A": self.s_a, "B": self.s_b, "C": self.s_c}


@dataclass(frozen=True)
class FaultSpec:
    bus: str
    phases: tuple
    r_fault: float
    t_apply: float
    t_clear: float

    def __post_init__(self):
        object.__setattr__(self, "bus", str(self.bus))
        object.__setattr__(self, "phases", tuple(sorted(set(self.phases))))
        if not set(self.phases) <= set(PHASES) or not self.phases:
            raise NetworkError(f"invalid fault phases {self.phases}")
        if not self.r_fault > 0:
            raise NetworkError("fault resistance must be positive")
        if not 0 <= self.t_apply < self.t_clear:
            raise NetworkError("fault needs 0 <= t_apply < t_clear")

    @property
    def name(self):
        return f"fault:{self.bus}:{''.join(self.phases)}"


@dataclass(frozen=True)
class Event:
    t: float
    action: str  # fault_apply | fault_clear | breaker_open | breaker_close
    target: object

    def __post_init__(self):
        if self.action not in ("fault_apply", "fault_clear", "breaker_open", "breaker_close"):
            raise NetworkError(f"unknown event action {self.action!r}")

    @property
    def label(self):
        tgt = self.target.name if isinstance(self.target, FaultSpec) else self.target
        return f"{self.action} {tgt} at t={self.t:g}"


# Fault branches get a series inductance this fraction of R/omega.
FAULT_L_RATIO = 1e-2


@dataclass(frozen=True)
class Topology:
    """Immutable switching state of the network."""

    branches: tuple
    capacitors: tuple
    omega_s: float
    out_of_service: frozenset = frozenset()
    active_faults: tuple = ()

    def fault_branches(self):
        out = []
        for f in self.active_faults:
            for ph in f.phases:
                out.append(SeriesRLBranch(f.name, Node(f.bus, ph), None, f.r_fault,
                                          f.r_fault / self.omega_s * FAULT_L_RATIO, "fault"))
        return out

    def active_branches(self):
        base = [b for b in self.branches if b.name not in self.out_of_service]
        return base + self.fault_branches()


def allocate_load(s, k):
    """Split a three-phase load unevenly: (1-k)/3, 1/3, (1+k)/3 of `s`."""
    if not abs(k) < 1:
        raise NetworkError(f"allocation factor must satisfy |k| < 1, got {k}")
    s = complex(s)
    s_a = (1 - k) * s / 3
    s_b = s / 3
    s_c = s - s_a - s_b
    return LoadAllocation(s, float(k), s_a, s_b, s_c)


def impedance_from_power(s_phase, v_nom, omega_s=2 * math.pi * 60):
    """Series R-L equivalent of a constant-impedance load.

    ``Z = v_nom**2 / conj(s_phase)``; returns ``(R, L)`` with ``L = X/omega_s``.
    """
    s_phase = complex(s_phase)
    if s_phase == 0 or not v_nom > 0:
        raise NetworkError("load power must be non-zero and voltage positive")
    z = v_nom ** 2 / s_phase.conjugate()
    if z.real <= 0:
        raise NetworkError(f"load impedance {z} has non-positive resistance")
    if z.imag < 0:
        raise NetworkError("capacitive loads are not supported")
    return z.real, z.imag / omega_s


def branch_derivatives(branch, i, v_from, v_to, vdot_from=0.0, vdot_to=0.0):
    """di/dt and d2i/dt2 of a series R-L branch."""
    if not branch.l > 0:
        raise NetworkError("branch_derivatives needs L > 0")
    di = (v_from - v_to - branch.r * i) / branch.l
    ddi = (vdot_from - vdot_to - branch.r * di) / branch.l
    return DerivativeBundle(di, ddi)


def node_derivatives(capacitor, i_in, idot_in=0.0):
    """dv/dt and d2v/dt2 at a capacitive node from the net injected current."""
    if not capacitor.c > 0:
        raise NetworkError("node_derivatives needs C > 0")
    return DerivativeBundle(i_in / capacitor.c, idot_in / capacitor.c)


def kcl_residual(in_currents=(), out_currents=()):
    """Signed current sum into a node."""
    return sum(in_currents) - sum(out_currents)


def snap_event_time(t, h):
    """Nearest grid index for an event; warns when the shift exceeds h/100."""
    n = round(t / h)
    if abs(n * h - t) > h / 100:
        log.warning("event at t=%g moved to grid time %g", t, n * h)
    return n


def apply_event(topology, event, h=None):
    """Return the topology after `event`."""
    if h is not None:
        snap_event_time(event.t, h)
    if event.action == "fault_apply":
        if event.target in topology.active_faults:
            raise NetworkError(f"{event.target.name} already applied")
        return replace(topology, active_faults=topology.active_faults + (event.target,))
    if event.action == "fault_clear":
        if event.target not in topology.active_faults:
            raise NetworkError(f"cannot clear {getattr(event.target, 'name', event.target)}: "
                               "not applied")
        return replace(topology, active_faults=tuple(
            f for f in topology.active_faults if f != event.target))
    names = {b.name for b in topology.branches}
    if event.target not in names:
        raise NetworkError(f"unknown branch {event.target!r}")
    if event.action == "breaker_open":
        return replace(topology, out_of_service=topology.out_of_service | {event.target})
    return replace(topology, out_of_service=topology.out_of_service - {event.target})
