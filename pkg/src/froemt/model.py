"""
Three-phase power system model assembled from a case and its power flow.

The differential state vector is ``[branch currents; capacitive node voltages;
machine states]``.  Nodes without shunt capacitance carry algebraic voltages
closed by current balance.  A step-up transformer that is the only connection
of a machine bus is folded into that machine's stator, so the machine attaches
directly to the high-voltage bus and the generator bus voltage is recovered
afterwards from the machine current.
"""

from dataclasses import dataclass
import math

import numpy as np

from .engine import SpectralClass, StateDescriptor, SystemState
from .machine import STATE_NAMES, MachineBank, steady_state_init
from .network import (
    PHASES,
    Node,
    SeriesRLBranch,
    ShuntCapacitor,
    Topology,
    allocate_load,
    impedance_from_power,
)

__all__ = [
    "MachineAttachment",
    "PowerSystemModel",
    "InitializedSystem",
    "build_network",
    "initialize_system",
]

_SHIFT = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)


@dataclass(frozen=True)
class MachineAttachment:
    """Where a machine connects.  ``node_bus`` differs from ``gen_bus`` when
    a series transformer (``r_ext``, ``x_ext``) has been folded in."""

    id: str
    gen_bus: str
    node_bus: str
    r_ext: float = 0.0
    x_ext: float = 0.0
    branch: str = ""

    @property
    def folded(self):
        return self.node_bus != self.gen_bus


def _foldable(case):
    """Machine bus -> transformer branch that may be folded into the machine."""
    degree = {}
    for br in case.branches:
        for b in (br.from_bus, br.to_bus):
            degree[b] = degree.get(b, 0) + 1
    load_buses = {ld.bus for ld in case.loads}
    out = {}
    for m in case.machines:
        if degree.get(m.bus, 0) != 1 or m.bus in load_buses:
            continue
        br = next(b for b in case.branches if m.bus in (b.from_bus, b.to_bus))
        if br.kind == "transformer" and br.b == 0:
            out[m.bus] = br
    return out


def build_network(case, solution):
    """Base topology, machine attachments and per-phase load impedances.

    Loads become series R-L per phase from their allocated share at the
    solved bus voltage magnitude.
    """
    w = case.omega_s
    fold = _foldable(case)
    folded_ids = {br.id for br in fold.values()}
    branches = []
    caps = {}
    for br in case.branches:
        if br.id in folded_ids:
            continue
        for ph in PHASES:
            branches.append(SeriesRLBranch(br.id, Node(br.from_bus, ph), Node(br.to_bus, ph),
                                           br.r, br.x / w, br.kind))
            if br.b > 0:
                for bus in (br.from_bus, br.to_bus):
                    node = Node(bus, ph)
                    caps[node] = caps.get(node, 0.0) + 0.5 * br.b / w
    for ld in case.loads:
        alloc = allocate_load(complex(ld.p, ld.q), ld.k).per_phase()
        vmag = abs(solution.voltage(ld.bus))
        for ph in PHASES:
            r, l = impedance_from_power(3.0 * alloc[ph], vmag, w)
            branches.append(SeriesRLBranch(f"load:{ld.bus}", Node(ld.bus, ph), None, r, l,
                                           "load"))
    attachments = []
    for m in case.machines:
        br = fold.get(m.bus)
        if br is None:
            attachments.append(MachineAttachment(m.id, m.bus, m.bus))
        else:
            other = br.to_bus if br.from_bus == m.bus else br.from_bus
            attachments.append(MachineAttachment(m.id, m.bus, other, br.r, br.x, br.id))
    capacitors = tuple(ShuntCapacitor(n, c) for n, c in sorted(caps.items()))
    return Topology(tuple(branches), capacitors, w), tuple(attachments)


class PowerSystemModel:
    """Equations of one network topology coupled to a machine bank.

    Parameters
    ----------
    topology : Topology
    attachments : sequence of MachineAttachment
    bank : MachineBank
        Machines in the same order as `attachments`.
    bus_ids : sequence of str
        All case buses, for the voltage outputs.
    """

    def __init__(self, topology, attachments, bank, bus_ids):
        self.topology = topology
        self.attachments = tuple(attachments)
        self.bank = bank
        self.bus_ids = tuple(bus_ids)
        self.m = len(self.attachments)
        active = topology.active_branches()
        ind = [b for b in active if b.l > 0]
        res = [b for b in active if not b.l > 0]
        cap = {}
        for c in topology.capacitors:
            cap[c.node] = cap.get(c.node, 0.0) + c.c
        nodes = set(cap)
        for b in active:
            nodes.add(b.from_node)
            if b.to_node is not None:
                nodes.add(b.to_node)
        for a in self.attachments:
            nodes.update(Node(a.node_bus, ph) for ph in PHASES)
        self.cap_nodes = sorted(n for n in nodes if n in cap)
        self.alg_nodes = sorted(n for n in nodes if n not in cap)
        self.nodes = self.cap_nodes + self.alg_nodes
        idx = {n: i for i, n in enumerate(self.nodes)}
        self.node_index = idx
        self.branches = ind
        self.resistive = res
        nb, nc, nn = len(ind), len(self.cap_nodes), len(self.nodes)
        self.nb, self.nc, self.nn = nb, nc, nn

        inc = np.zeros((nb, nn))
        for j, b in enumerate(ind):
            inc[j, idx[b.from_node]] = 1.0
            if b.to_node is not None:
                inc[j, idx[b.to_node]] = -1.0
        self.inc = inc
        self.inc_t = inc.T.copy()
        self.r = np.array([b.r for b in ind]).reshape(nb, 1)
        self.l_inv = np.array([1.0 / b.l for b in ind]).reshape(nb, 1)
        gn = np.zeros((nn, nn))
        for b in res:
            a = np.zeros(nn)
            a[idx[b.from_node]] = 1.0
            if b.to_node is not None:
                a[idx[b.to_node]] = -1.0
            gn += np.outer(a, a) / b.r
        self.gn = gn
        self.has_res = bool(res)
        self.c_inv = np.array([1.0 / cap[n] for n in self.cap_nodes]).reshape(nc, 1)
        # machine phase p of machine j sits at node att[p, j]
        self.att = np.array([[idx[Node(a.node_bus, ph)] for a in self.attachments]
                             for ph in PHASES], dtype=int).reshape(3, self.m)
        inj = np.zeros((nn, 3 * self.m))
        for p in range(3):
            for j in range(self.m):
                inj[self.att[p, j], p * self.m + j] = 1.0
        self.inj = inj
        self.off_machine = nb + nc
        self.n_diff = nb + nc + 9 * self.m
        self.n_alg = len(self.alg_nodes)
        self.descriptors = self._descriptors()
        self.ids = [d.id for d in self.descriptors]
        self._output_plan()

    # -- layout ------------------------------------------------------------

    def _descriptors(self):
        fund = SpectralClass.FUNDAMENTAL
        out = [StateDescriptor(f"i:{b.id}", fund, b.name) for b in self.branches]
        out += [StateDescriptor(f"v:{n}", fund, f"bus {n.bus}") for n in self.cap_nodes]
        for name in STATE_NAMES:
            cls = fund if name == "psi0" else SpectralClass.SLOW
            for a in self.attachments:
                out.append(StateDescriptor(f"gen:{a.id}:{name}", cls, f"gen {a.id}"))
        return out

    @property
    def alg_ids(self):
        return [f"v:{n}" for n in self.alg_nodes]

    def machine_states(self, x):
        """Machine block of `x` (n_diff, k) as a (9, m, k) view."""
        return x[self.off_machine:].reshape(9, self.m, x.shape[1])

    def map_state(self, other, state):
        """Carry `state` of model `other` over to this model by state id.

        States new to this model (e.g. fault currents) start at zero.
        """
        old = dict(zip(other.ids, state.diff))
        old_alg = dict(zip(other.alg_ids, state.alg))
        old_alg.update((k, v) for k, v in old.items() if k.startswith("v:"))
        diff = np.array([old.get(i, old_alg.get(i, 0.0)) for i in self.ids])
        alg = np.array([old_alg.get(i, old.get(i, 0.0)) for i in self.alg_ids])
        return SystemState(diff, alg, state.t)

    # -- equations ---------------------------------------------------------

    def _split(self, x, y):
        nb, nc = self.nb, self.nc
        i_l = x[:nb]
        v_all = np.vstack([x[nb:nb + nc], y]) if self.n_alg else x[nb:nb + nc]
        return i_l, v_all

    def _machine_inj(self, i_abc):
        k = i_abc.shape[-1]
        return self.inj @ i_abc.reshape(3 * self.m, k)

    def rates(self, x, y, ydot, t, second=True):
        i_l, v_all = self._split(x, y)
        k = x.shape[1]
        node_i = -(self.inc_t @ i_l)
        if self.has_res:
            node_i -= self.gn @ v_all
        if self.m:
            X = self.machine_states(x)
            Xd, i_m, ctx = self.bank.first(X, v_all[self.att], t)
            node_i += self._machine_inj(i_m)
        di = self.l_inv * (self.inc @ v_all - self.r * i_l)
        dv = self.c_inv * node_i[:self.nc]
        parts = [di, dv]
        if self.m:
            parts.append(Xd.reshape(9 * self.m, k))
        xdot = np.vstack(parts)
        if not second:
            return xdot, np.zeros_like(xdot)
        vdot_all = np.vstack([dv, ydot]) if self.n_alg else dv
        node_id = -(self.inc_t @ di)
        if self.has_res:
            node_id -= self.gn @ vdot_all
        parts = [self.l_inv * (self.inc @ vdot_all - self.r * di)]
        if self.m:
            Xdd, idot_m = self.bank.second(ctx, vdot_all[self.att])
            node_id += self._machine_inj(idot_m)
        parts.append(self.c_inv * node_id[:self.nc])
        if self.m:
            parts.append(Xdd.reshape(9 * self.m, k))
        return xdot, np.vstack(parts)

    def algebraic(self, x, y, t):
        """Current balance at the algebraic nodes."""
        i_l, v_all = self._split(x, y)
        node_i = -(self.inc_t @ i_l)
        if self.has_res:
            node_i -= self.gn @ v_all
        if self.m:
            node_i += self._machine_inj(self.bank.currents_abc(self.machine_states(x), t))
        return node_i[self.nc:]

    # -- outputs -----------------------------------------------------------

    def _output_plan(self):
        fold = {a.gen_bus: j for j, a in enumerate(self.attachments) if a.folded}
        self.voltage_names = [f"v:{bus}:{ph}" for bus in self.bus_ids for ph in PHASES]
        self._fold = fold
        self.machine_names = []
        for a in self.attachments:
            self.machine_names += [f"gen:{a.id}:delta", f"gen:{a.id}:speed"]
        self.current_names = [f"i:{b.id}" for b in self.branches]
        self._plans = {}

    def output_names(self, groups=("voltages", "machines")):
        names = []
        if "voltages" in groups:
            names += self.voltage_names
        if "machines" in groups:
            names += self.machine_names
        if "currents" in groups:
            names += self.current_names
        return names

    def _plan(self, names):
        """Index plan evaluating `names` from ``[diff; alg; 0]``."""
        pos = {sid: i for i, sid in enumerate(self.ids)}
        pos.update((sid, self.n_diff + i) for i, sid in enumerate(self.alg_ids))
        zero = self.n_diff + self.n_alg
        idx, offset, gen = [], [], []
        for r, name in enumerate(names):
            parts = name.split(":")
            off = 0.0
            if parts[0] == "gen" and parts[-1] == "speed":
                i = pos[f"gen:{':'.join(parts[1:-1])}:dw"]
                off = 1.0
            elif name in pos:
                i = pos[name]
            elif parts[0] == "v" and parts[1] in self._fold:
                j = self._fold[parts[1]]
                ph = parts[2]
                i = pos[f"v:{self.attachments[j].node_bus}:{ph}"]
                gen.append((r, PHASES.index(ph), j))
            else:
                i = zero
            idx.append(i)
            offset.append(off)
        g = np.array(gen, dtype=int).reshape(-1, 3)
        return np.array(idx, dtype=int), np.array(offset), g

    def output_vector(self, state, xdot, names):
        """Values of the recorded signals `names` at an accepted point.

        Names unknown to this topology (e.g. a disconnected branch current)
        read as zero.
        """
        key = tuple(names)
        plan = self._plans.get(key)
        if plan is None:
            plan = self._plans[key] = self._plan(names)
        idx, offset, gen = plan
        z = np.concatenate([state.diff, state.alg, [0.0]])
        out = z[idx] + offset
        if gen.size:
            X = self.machine_states(state.diff[:, None])
            Xd = self.machine_states(np.asarray(xdot, float)[:, None])
            i_m = self.bank.currents_abc(X, state.t)[:, :, 0]
            idot = self.bank.current_rates_abc(X, Xd, state.t)[:, :, 0]
            r, p, j = gen[:, 0], gen[:, 1], gen[:, 2]
            out[r] += self.bank.r_ext[j, 0] * i_m[p, j] + self.bank.l_ext[j, 0] * idot[p, j]
        return out

    def outputs(self, state, xdot, groups=("voltages", "machines")):
        """Recorded signals at an accepted point, as ``{name: value}``."""
        names = self.output_names(groups)
        return dict(zip(names, self.output_vector(state, xdot, names)))


@dataclass
class InitializedSystem:
    """Initial model and state built from a power flow solution."""

    model: PowerSystemModel
    state: SystemState
    phasors: dict
    machine_states: np.ndarray

    def steady_state(self, t):
        """Balanced sinusoidal continuation of the initial point to time `t`.

        Exact periodic steady state only for balanced loading (k = 0).
        """
        w = self.model.bank.omega_s
        diff = np.empty(self.model.n_diff)
        for i, sid in enumerate(self.model.ids):
            if sid in self.phasors:
                ph, shift = self.phasors[sid]
                diff[i] = abs(ph) * math.cos(w * t + math.atan2(ph.imag, ph.real) + shift)
        diff[self.model.off_machine:] = self.machine_states.reshape(-1)
        alg = np.array([abs(self.phasors[a][0]) * math.cos(
            w * t + math.atan2(self.phasors[a][0].imag, self.phasors[a][0].real)
            + self.phasors[a][1]) for a in self.model.alg_ids])
        return SystemState(diff, alg, t)


def initialize_system(solution, case, k=None):
    """Balanced instantaneous initial conditions at t = 0.

    Parameters
    ----------
    solution : PowerFlowSolution
    case : Case
    k : float, optional
        Overrides every load's allocation factor.

    Returns
    -------
    InitializedSystem
    """
    if k is not None:
        case = case.with_allocation(k)
    topology, attachments = build_network(case, solution)
    w = case.omega_s
    by_id = {m.id: m for m in case.machines}
    params, states, e_fd, p_m = [], [], [], []
    for a in attachments:
        cm = by_id[a.id]
        prm = cm.params.to_system_base(case.base_mva)
        v_node = solution.voltage(a.node_bus)
        if a.folded:
            i_ph = (solution.voltage(a.gen_bus) - v_node) / complex(a.r_ext, a.x_ext)
            s_gen = v_node * i_ph.conjugate()
        else:
            s_gen = solution.injection(a.gen_bus)
            if a.gen_bus in {ld.bus for ld in case.loads}:
                s_gen += sum(complex(ld.p, ld.q) for ld in case.loads if ld.bus == a.gen_bus)
        st, inp = steady_state_init(v_node, s_gen, prm, a.r_ext, a.x_ext)
        params.append(prm)
        states.append(st.as_array())
        e_fd.append(inp.e_fd)
        p_m.append(inp.p_m)
    bank = MachineBank(params, w, [a.r_ext for a in attachments],
                       [a.x_ext for a in attachments], e_fd, p_m)
    model = PowerSystemModel(topology, attachments, bank, case.bus_ids())

    phasors = {}
    for b in model.branches:
        p = PHASES.index(b.from_node.phase)
        v_to = 0 if b.to_node is None else solution.voltage(b.to_node.bus)
        z = complex(b.r, b.l * w)
        phasors[f"i:{b.id}"] = ((solution.voltage(b.from_node.bus) - v_to) / z, _SHIFT[p])
    for n in model.nodes:
        phasors[f"v:{n}"] = (solution.voltage(n.bus), _SHIFT[PHASES.index(n.phase)])
    ms = np.array(states).T.reshape(9, len(states))
    init = InitializedSystem(model, None, phasors, ms)
    init.state = init.steady_state(0.0)
    return init
