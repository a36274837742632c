"""Positive-sequence Newton-Raphson power flow (polar form, flat start)."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PowerFlowError",
    "PowerFlowCase",
    "PowerFlowSolution",
    "solve_power_flow",
    "powerflow_case_from",
]


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerFlowCase:
    """Bus data in per unit.

    `bus_type` holds 'slack', 'PV' or 'PQ'.  `p_spec`/`q_spec` are net
    injections (generation minus load); `v_spec` is the voltage magnitude
    setpoint of slack and PV buses.  Branches are pi sections
    ``(from_index, to_index, r, x, b_total)``.
    """

    bus_ids: tuple
    bus_type: tuple
    p_spec: np.ndarray
    q_spec: np.ndarray
    v_spec: np.ndarray
    branches: tuple
    slack_angle: float = 0.0

    def ybus(self):
        n = len(self.bus_ids)
        Y = np.zeros((n, n), dtype=complex)
        for f, t, r, x, b in self.branches:
            y = 1.0 / complex(r, x)
            Y[f, f] += y + 0.5j * b
            Y[t, t] += y + 0.5j * b
            Y[f, t] -= y
            Y[t, f] -= y
        return Y


@dataclass(frozen=True)
class PowerFlowSolution:
    bus_ids: tuple
    v: np.ndarray
    s_injection: np.ndarray
    iterations: int
    mismatch: float

    def voltage(self, bus):
        return complex(self.v[self.bus_ids.index(str(bus))])

    def injection(self, bus):
        return complex(self.s_injection[self.bus_ids.index(str(bus))])


def _check_connected(case):
    n = len(case.bus_ids)
    adj = [[] for _ in range(n)]
    for f, t, *_ in case.branches:
        adj[f].append(t)
        adj[t].append(f)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise PowerFlowError(f"islanded buses: {[case.bus_ids[i] for i in missing]}")


def solve_power_flow(case, tol=1e-8, max_iter=30):
    """Solve for bus voltage phasors; returns a PowerFlowSolution."""
    types = list(case.bus_type)
    if types.count("slack") != 1:
        raise PowerFlowError("exactly one slack bus is required")
    _check_connected(case)
    Y = case.ybus()
    n = len(types)
    slack = types.index("slack")
    pq = [i for i, t in enumerate(types) if t == "PQ"]
    ang_idx = [i for i in range(n) if i != slack]
    vm = np.where(np.array([t != "PQ" for t in types]), case.v_spec, 1.0).astype(float)
    va = np.full(n, case.slack_angle, dtype=float)

    def mismatch(vm, va):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        return np.concatenate([case.p_spec[ang_idx] - S.real[ang_idx],
                               case.q_spec[pq] - S.imag[pq]]), V

    it = 0
    f, V = mismatch(vm, va)
    norm = np.max(np.abs(f)) if f.size else 0.0
    while norm > tol:
        if it >= max_iter:
            raise PowerFlowError(f"power flow did not converge (mismatch {norm:.3e})")
        Ibus = Y @ V
        diagV = np.diag(V)
        dS_dva = 1j * diagV @ np.conj(np.diag(Ibus) - Y @ diagV)
        dS_dvm = diagV @ np.conj(Y @ np.diag(V / vm)) + np.conj(np.diag(Ibus)) @ np.diag(V / vm)
        J = np.block([
            [dS_dva.real[np.ix_(ang_idx, ang_idx)], dS_dvm.real[np.ix_(ang_idx, pq)]],
            [dS_dva.imag[np.ix_(pq, ang_idx)], dS_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, f)
        va[ang_idx] += dx[:len(ang_idx)]
        vm[pq] += dx[len(ang_idx):]
        it += 1
        f, V = mismatch(vm, va)
        norm = np.max(np.abs(f))
    S = V * np.conj(Y @ V)
    return PowerFlowSolution(tuple(case.bus_ids), V, S, it, float(norm))


def powerflow_case_from(case):
    """Positive-sequence power flow data of a Case (constant-power loads)."""
    ids = tuple(case.bus_ids())
    index = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    p = np.zeros(n)
    q = np.zeros(n)
    v = np.ones(n)
    types = ["PQ"] * n
    for m in case.machines:
        i = index[m.bus]
        types[i] = "slack" if m.bus == case.slack else "PV"
        v[i] = m.v_set
        p[i] += m.p
    for ld in case.loads:
        i = index[ld.bus]
        p[i] -= ld.p
        q[i] -= ld.q
    branches = tuple((index[b.from_bus], index[b.to_bus], b.r, b.x, b.b) for b in case.branches)
    return PowerFlowCase(ids, tuple(types), p, q, v, branches)
