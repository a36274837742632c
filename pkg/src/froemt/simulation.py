"""Fixed-step simulation loop: events, half-step pairs and signal recording."""

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .engine import NewtonSettings, Scheme, StepSolver
from .network import Event, NetworkError, apply_event, snap_event_time
from .powerflow import powerflow_case_from, solve_power_flow
from .model import PowerSystemModel, initialize_system

log = logging.getLogger(__name__)

__all__ = [
    "SimulationConfig",
    "RunRecord",
    "SimulationError",
    "schedule_events",
    "run",
    "reference_run",
    "REFERENCE_STEP_US",
]

REFERENCE_STEP_US = 5


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    """Run settings.  The step is an integer number of microseconds.

    `record_stride` keeps every n-th grid instant (plus all half-step and
    final instants); 1 records everything.
    """

    step_us: int
    t_end: float
    scheme: Scheme = Scheme.FRO
    signals: tuple = ("voltages", "machines")
    settings: NewtonSettings = field(default_factory=NewtonSettings)
    record_stride: int = 1

    def __post_init__(self):
        if int(self.step_us) != self.step_us or self.step_us <= 0:
            raise SimulationError("step_us must be a positive integer")
        object.__setattr__(self, "step_us", int(self.step_us))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.h <= self.t_end:
            raise SimulationError("need 0 < h <= t_end")
        if int(self.record_stride) < 1:
            raise SimulationError("record_stride must be >= 1")

    @property
    def h(self):
        return self.step_us / 1e6

    @property
    def n_steps(self):
        return int(round(self.t_end * 1e6 / self.step_us))


@dataclass
class RunRecord:
    """Recorded traces on a shared time axis.

    ``values`` has one row per instant and one column per name in `names`.
    ``half_step`` flags the intermediate instants of half-step pairs.
    """

    times: np.ndarray
    names: list
    values: np.ndarray
    half_step: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def column(self, name):
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no signal {name!r} in record") from None

    def grid(self):
        """Copy restricted to regular grid instants."""
        keep = ~self.half_step
        return RunRecord(self.times[keep], list(self.names), self.values[keep],
                         self.half_step[keep], dict(self.meta))

    def voltage_names(self):
        return [n for n in self.names if n.startswith("v:")]

    def angle_names(self):
        return [n for n in self.names if n.startswith("gen:") and n.endswith(":delta")]


def schedule_events(case, config):
    """Grid-indexed events ``{step_index: [Event, ...]}`` in application order."""
    events = []
    for f in case.faults:
        events += [Event(f.t_apply, "fault_apply", f), Event(f.t_clear, "fault_clear", f)]
    for op in case.breaker_ops:
        events.append(Event(op.t, "breaker_" + op.action, op.branch))
    out = {}
    for ev in sorted(events, key=lambda e: e.t):
        if not 0 <= ev.t <= config.t_end:
            raise SimulationError(f"event outside horizon: {ev.label}")
        n = snap_event_time(ev.t, config.h)
        if n < config.n_steps:
            out.setdefault(n, []).append(ev)
    return out


def _time(n, step_us, half=False):
    if half:
        return (2 * n + 1) * step_us / 2e6
    return n * step_us / 1e6


def run(case, config, k=None):
    """Simulate `case` and return a RunRecord.

    `k` overrides the loads' allocation factor.
    """
    t0 = time.perf_counter()
    if k is not None:
        case = case.with_allocation(k)
    case.validate()
    events = schedule_events(case, config)
    solution = solve_power_flow(powerflow_case_from(case))
    init = initialize_system(solution, case)
    model = init.model
    h = config.h
    solvers = {}

    def solver_for(mdl):
        key = (mdl.topology.out_of_service, mdl.topology.active_faults)
        if key not in solvers:
            solvers[key] = StepSolver(mdl, config.scheme, h, case.omega_s, config.settings)
        return solvers[key]

    solver = solver_for(model)
    state = init.state
    hist = solver.initial_history(state)
    groups = tuple(config.signals)

    names = model.output_names(groups)
    stride = int(config.record_stride)
    times, rows, flags = [], [], []

    def record(st, xdot, half):
        rows.append(model.output_vector(st, xdot, names))
        times.append(st.t)
        flags.append(half)

    record(state, hist.xdot_prev, False)
    event_log = []
    iterations = 0
    for n in range(config.n_steps):
        if n in events:
            topo = model.topology
            for ev in events[n]:
                try:
                    topo = apply_event(topo, ev)
                except NetworkError as exc:
                    # e.g. a breaker on a transformer folded into its machine
                    raise SimulationError(f"{ev.label}: {exc}") from exc
                event_log.append(f"{ev.label} (step {n})")
                log.info("applied %s at step %d", ev.label, n)
            new_model = PowerSystemModel(topo, model.attachments, model.bank, model.bus_ids)
            state = new_model.map_state(model, state)
            model = new_model
            solver = solver_for(model)
            pair, hist, it = solver.half_step_pair(
                state, step_index=n,
                times=(_time(n, config.step_us, True), _time(n + 1, config.step_us)))
            iterations += it
            mid = pair[0]
            xdot_mid = model.rates(mid.diff[:, None], mid.alg[:, None],
                                   np.zeros((model.n_alg, 1)), mid.t, False)[0][:, 0]
            record(mid, xdot_mid, True)
            state = pair[1]
        else:
            state, hist, it = solver.step(hist, step_index=n, t=_time(n + 1, config.step_us))
            iterations += it
        if (n + 1) % stride == 0 or n + 1 == config.n_steps or n in events:
            record(state, hist.xdot_prev, False)

    wall = time.perf_counter() - t0
    meta = {
        "scheme": config.scheme.value,
        "step_us": config.step_us,
        "h": h,
        "t_end": config.t_end,
        "case": case.name,
        "case_hash": case.hash,
        "events": event_log,
        "newton_iterations": iterations,
        "steps": config.n_steps,
        "record_stride": stride,
        "wall_time_s": wall,
    }
    log.info("run %s h=%gus: %d steps, %d Newton iterations, %.2f s", config.scheme.value,
             config.step_us, config.n_steps, iterations, wall)
    return RunRecord(np.array(times), names, np.array(rows, dtype=float).reshape(len(times), -1),
                     np.array(flags, dtype=bool), meta)


def reference_run(case, t_end=2.0, signals=("voltages", "machines"), k=None, record_stride=1):
    """Trapezoidal run at the reference step of 5 microseconds."""
    cfg = SimulationConfig(REFERENCE_STEP_US, t_end, Scheme.TRAP, tuple(signals),
                           record_stride=record_stride)
    return run(case, cfg, k=k)
