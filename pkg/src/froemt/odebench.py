"""
Scalar and small linear test problems for the integrators and the step solver.

Every routine drives the real :class:`~froemt.engine.StepSolver` on a tiny
linear model with exact derivatives, so the numbers reflect the production
code path.
"""

from dataclasses import dataclass
import math

import numpy as np

from .engine import NewtonSettings, Scheme, SpectralClass, StateDescriptor, StepSolver, SystemState
from .integrators import IntegratorKind, coefficients, relative_error

__all__ = [
    "LinearModel",
    "TIGHT",
    "ORDER_STEPS",
    "FRO_ORDER_STEPS",
    "one_step_factor",
    "integrate",
    "observed_order",
    "order_table",
    "linear_map_error",
    "harmonic_check",
    "rl_switching",
    "alternation_metric",
    "zero_multiplicity",
    "run_all",
]

OMEGA_60 = 2 * math.pi * 60
# Newton tolerance for benchmarks: residual at rounding level.
TIGHT = NewtonSettings(tol=1e-14, reuse_contraction=None)
ORDER_STEPS = (0.1, 0.05, 0.025)
# the frequency-tuned rules need omega*h < pi at omega = 2*pi*60
FRO_ORDER_STEPS = (4e-3, 2e-3, 1e-3)


class LinearModel:
    """``xdot = A x + b(t)`` with exact second derivative ``A xdot``.

    `b` is a constant forcing vector (zero by default).
    """

    n_alg = 0

    def __init__(self, a, b=None, spectral_class=SpectralClass.SLOW, names=None):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        n = self.a.shape[0]
        self.b = np.zeros((n, 1)) if b is None else np.asarray(b, float).reshape(n, 1)
        names = names or [f"x{i}" for i in range(n)]
        self.descriptors = [StateDescriptor(nm, SpectralClass(spectral_class)) for nm in names]

    def rates(self, x, y, ydot, t, second=True):
        xd = self.a @ x + self.b
        return xd, (self.a @ xd if second else np.zeros_like(xd))

    def algebraic(self, x, y, t):
        return np.zeros((0, x.shape[1]))


def one_step_factor(kind, h, lam, omega_select=0.0):
    """Closed-form growth factor of one step on ``xdot = lam x``."""
    c = coefficients(kind, h, omega_select)
    return (1 + c.b_m1 * lam + c.c_m1 * lam ** 2) / (1 - c.b0 * lam - c.c0 * lam ** 2)


def integrate(model, kind, h, n_steps, x0, omega_select=0.0, settings=TIGHT):
    """States after each of `n_steps` normal steps, shape (n_steps + 1, n)."""
    solver = StepSolver(model, Scheme.TRAP, h, omega_select, settings,
                        kinds=[kind] * len(model.descriptors))
    state = SystemState(np.asarray(x0, float), np.zeros(0), 0.0)
    hist = solver.initial_history(state)
    out = [state.diff.copy()]
    for n in range(n_steps):
        state, hist, _ = solver.step(hist, t=(n + 1) * h)
        out.append(state.diff.copy())
    return np.array(out)


def observed_order(kind, steps=None, omega_select=None, lam=-1.0, t_end=1.0):
    """Least-squares slope of log global error against log h on ``xdot = lam x``.

    Returns ``(order, errors)``.
    """
    kind = IntegratorKind.parse(kind)
    if omega_select is None:
        omega_select = OMEGA_60 if kind.needs_omega else 0.0
    if steps is None:
        steps = FRO_ORDER_STEPS if kind.needs_omega else ORDER_STEPS
    model = LinearModel([[lam]])
    errs = []
    for h in steps:
        n = int(round(t_end / h))
        x = integrate(model, kind, h, n, [1.0], omega_select)
        errs.append(abs(x[-1, 0] - math.exp(lam * t_end)))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    return float(slope), errs


def order_table(kinds=("obreshkov", "taylor2", "trapezoidal", "froa", "frob",
                       "backward_euler")):
    return {IntegratorKind.parse(k): observed_order(k) for k in kinds}


def linear_map_error(kind, h=1e-3, lams=(-100.0, -1e3, -5e3, 2.0), omega_select=None,
                     n_steps=1):
    """Largest relative gap between solver steps and the rational growth factor.

    The Newton tolerance is absolute, so several steps on a fast decay
    lose relative accuracy once the state is small; one step from unit
    size measures the map itself.
    """
    kind = IntegratorKind.parse(kind)
    if omega_select is None:
        omega_select = OMEGA_60 if kind.needs_omega else 0.0
    worst = 0.0
    for lam in lams:
        x = integrate(LinearModel([[lam]]), kind, h, n_steps, [1.0], omega_select)
        r = one_step_factor(kind, h, lam, omega_select)
        expect = r ** np.arange(n_steps + 1)
        worst = max(worst, float(np.max(np.abs(x[:, 0] - expect) / np.abs(expect))))
    return worst


@dataclass(frozen=True)
class OscillatorResult:
    amplitude_drift: float
    phase_drift: float
    frequency: float


def harmonic_check(kind, h=1e-3, omega=OMEGA_60, t_end=2.0, omega_select=None):
    """Integrate ``x'' = -omega**2 x`` as a first-order pair from (1, 0).

    The pair is ``(x, x'/omega)`` so both states are of unit size.  Returns
    relative amplitude drift, phase drift (rad) at `t_end` and the observed
    angular frequency.
    """
    kind = IntegratorKind.parse(kind)
    if omega_select is None:
        omega_select = omega if kind.needs_omega else 0.0
    model = LinearModel([[0.0, omega], [-omega, 0.0]], names=["x", "v"])
    n = int(round(t_end / h))
    xs = integrate(model, kind, h, n, [1.0, 0.0], omega_select)
    z = xs[:, 0] - 1j * xs[:, 1]  # exp(j omega t) for the exact solution
    amp = np.abs(z)
    phase = np.unwrap(np.angle(z))
    t = np.arange(n + 1) * h
    freq = np.polyfit(t, phase, 1)[0]
    return OscillatorResult(float(abs(amp[-1] - 1.0)),
                            float(abs(phase[-1] - omega * t[-1])), float(freq))


def alternation_metric(i, start):
    """Period-2h sign-alternating content after index `start`, relative to peak.

    Uses the second difference, which vanishes to O(h**2) on smooth signals
    and equals four times the amplitude of a pure alternation.
    """
    seg = np.asarray(i[start:], dtype=float)
    d2 = seg[2:] - 2 * seg[1:-1] + seg[:-2]
    return float(np.max(np.abs(d2)) / 4 / np.max(np.abs(i)))


def rl_switching(protocol, r=1.0, l=1e-7, v0=1.0, h=1e-3, n_before=5, n_after=40,
                 kind="trapezoidal"):
    """Series RL closed onto a voltage step at a grid instant.

    With `protocol` the step is followed by the half-step pair (backward
    Euler for the trapezoidal rule); without it the solver continues with
    history from before the switch.  Returns ``(times, current, exact,
    first)`` where `first` is the first grid sample after the switch.
    """
    kind = IntegratorKind.parse(kind)
    before = LinearModel([[-r / l]], [0.0], names=["i"])
    after = LinearModel([[-r / l]], [v0 / l], names=["i"])
    # h*di/dt reaches v0*h/l, so rounding in the residual scales with it
    settings = NewtonSettings(tol=1e-11, reuse_contraction=None)
    s_before = StepSolver(before, Scheme.TRAP, h, 0.0, settings, kinds=[kind])
    s_after = StepSolver(after, Scheme.TRAP, h, 0.0, settings, kinds=[kind])
    state = SystemState(np.zeros(1), np.zeros(0), 0.0)
    hist = s_before.initial_history(state)
    times, cur = [0.0], [0.0]
    for n in range(n_before):
        state, hist, _ = s_before.step(hist, t=(n + 1) * h)
        times.append(state.t)
        cur.append(state.diff[0])
    t_sw = n_before * h
    if protocol:
        pair, hist, _ = s_after.half_step_pair(state, times=(t_sw + h / 2, t_sw + h))
        times.append(pair[0].t)
        cur.append(pair[0].diff[0])
        state = pair[1]
        times.append(state.t)
        cur.append(state.diff[0])
        start = n_before + 1
    else:
        start = n_before
    while len(times) < n_before + n_after + 1:
        n = round((state.t - t_sw) / h) + n_before
        state, hist, _ = s_after.step(hist, t=(n + 1) * h)
        times.append(state.t)
        cur.append(state.diff[0])
    times = np.array(times)
    elapsed = np.clip(times - t_sw, 0.0, None)
    exact = np.where(times >= t_sw, v0 / r * -np.expm1(-elapsed * r / l), 0.0)
    return times, np.array(cur), exact, start + 1


def zero_multiplicity(kind, h=1e-3, omega_select=OMEGA_60, sigmas=None):
    """Log-log slope of |relative error| along the positive real axis near 0."""
    kind = IntegratorKind.parse(kind)
    c = coefficients(kind, h, omega_select if kind.needs_omega else 0.0)
    if sigmas is None:
        sigmas = np.logspace(-3, -1, 9) / h
    e = np.abs(relative_error(c, np.asarray(sigmas, dtype=float)))
    return float(np.polyfit(np.log(sigmas), np.log(e), 1)[0])


def run_all():
    """All benchmark results as a list of printable lines."""
    lines = ["observed global order on x' = -x over [0, 1]:"]
    for kind, (order, errs) in order_table().items():
        steps = FRO_ORDER_STEPS if kind.needs_omega else ORDER_STEPS
        lines.append(f"  {kind.value:<15} order {order:6.3f}   h = {steps}   "
                     f"errors = {', '.join(f'{e:.3e}' for e in errs)}")
    lines.append("one-step map vs closed-form growth factor (max relative gap):")
    for kind in IntegratorKind:
        lines.append(f"  {kind.value:<15} {linear_map_error(kind):.3e}")
    lines.append("zero multiplicity at s = 0 (log-log slope):")
    for kind in IntegratorKind:
        lines.append(f"  {kind.value:<15} {zero_multiplicity(kind):6.3f}")
    lines.append("harmonic oscillator at 60 Hz, h = 1 ms, 2 s:")
    for kind in (IntegratorKind.FRO_A, IntegratorKind.FRO_B, IntegratorKind.TRAPEZOIDAL):
        res = harmonic_check(kind)
        lines.append(f"  {kind.value:<15} amplitude drift {res.amplitude_drift:.3e}  "
                     f"phase drift {res.phase_drift:.3e} rad  "
                     f"frequency {res.frequency:.6f} rad/s")
    lines.append("RL switching, alternation relative to peak current:")
    for protocol in (True, False):
        _, i, _, start = rl_switching(protocol)
        label = "half-step pair" if protocol else "no protocol"
        lines.append(f"  {label:<15} {alternation_metric(i, start):.3e}")
    return lines
