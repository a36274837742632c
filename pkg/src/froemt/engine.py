"""
Fixed-step solver for semi-explicit DAEs discretized with two-point
second-derivative integrators.

A model exposes ``n_diff`` differential states (each tagged with a spectral
class) and ``n_alg`` algebraic unknowns.  Each step solves, simultaneously by
Newton iteration, one discretization residual per differential state and the
model's algebraic equations.
"""

from dataclasses import dataclass, replace
from enum import Enum
import logging
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .integrators import IntegratorKind, coefficients, discontinuity_variant

log = logging.getLogger(__name__)

__all__ = [
    "SpectralClass",
    "Scheme",
    "StateDescriptor",
    "SystemState",
    "History",
    "NewtonSettings",
    "ConvergenceError",
    "SingularJacobianError",
    "ModelEvaluationError",
    "integrator_for",
    "second_derivative",
    "input_derivative",
    "StepSolver",
]


class SpectralClass(str, Enum):
    FUNDAMENTAL = "fundamental"
    SLOW = "slow"


class Scheme(str, Enum):
    FRO = "fro"
    TRAP = "trap"
    BE = "be"


_NORMAL_KIND = {
    (Scheme.FRO, SpectralClass.FUNDAMENTAL): IntegratorKind.FRO_A,
    (Scheme.FRO, SpectralClass.SLOW): IntegratorKind.OBRESHKOV,
    (Scheme.TRAP, SpectralClass.FUNDAMENTAL): IntegratorKind.TRAPEZOIDAL,
    (Scheme.TRAP, SpectralClass.SLOW): IntegratorKind.TRAPEZOIDAL,
    (Scheme.BE, SpectralClass.FUNDAMENTAL): IntegratorKind.BACKWARD_EULER,
    (Scheme.BE, SpectralClass.SLOW): IntegratorKind.BACKWARD_EULER,
}


def integrator_for(spectral_class, scheme, half_step=False):
    """Integrator kind assigned to a state of `spectral_class` under `scheme`."""
    kind = _NORMAL_KIND[(Scheme(scheme), SpectralClass(spectral_class))]
    return discontinuity_variant(kind) if half_step else kind


@dataclass(frozen=True)
class StateDescriptor:
    id: str
    spectral_class: SpectralClass
    owner: str = ""


@dataclass
class SystemState:
    diff: np.ndarray
    alg: np.ndarray
    t: float

    def __post_init__(self):
        self.diff = np.asarray(self.diff, dtype=float)
        self.alg = np.asarray(self.alg, dtype=float)

    def vector(self):
        return np.concatenate([self.diff, self.alg])


@dataclass
class History:
    """Lagged values needed by the previous-point terms of a step."""

    x_prev: np.ndarray
    xdot_prev: np.ndarray
    xddot_prev: np.ndarray
    u_prev: np.ndarray
    udot_prev: np.ndarray
    t_prev: float
    valid: bool = True

    def invalidated(self):
        return replace(self, valid=False)


@dataclass
class NewtonSettings:
    tol: float = 1e-8
    max_iter: int = 50
    fd_perturbation: float = 1e-7
    # Keep the LU factors across iterations/steps while the residual contracts
    # by at least this factor per iteration; None rebuilds every iteration.
    reuse_contraction: float | None = 0.3
    pivot_floor: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


class ConvergenceError(RuntimeError):
    def __init__(self, message, step=None, t=None, residual=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.residual = residual


class SingularJacobianError(ConvergenceError):
    pass


class ModelEvaluationError(RuntimeError):
    pass


def second_derivative(f, x, u=0.0, udot=0.0, *, dfdx=None, dfdu=None, rel_step=1e-6):
    """Second time derivative of ``x`` for ``xdot = f(x, u)`` (chain rule).

    ``xddot = df/dx * f(x, u) + df/du * udot``.  Analytic partials are used when
    given; otherwise central differences stand in for them.
    """
    fx = f(x, u)
    if dfdx is None:
        dx = rel_step * max(1.0, abs(x))
        dfdx_v = (f(x + dx, u) - f(x - dx, u)) / (2 * dx)
    else:
        dfdx_v = dfdx(x, u)
    if dfdu is None:
        du = rel_step * max(1.0, abs(u))
        dfdu_v = (f(x, u + du) - f(x, u - du)) / (2 * du)
    else:
        dfdu_v = dfdu(x, u)
    out = dfdx_v * fx + dfdu_v * udot
    if not np.all(np.isfinite(out)):
        raise ModelEvaluationError("non-finite second derivative")
    return out


def input_derivative(u_now, u_prev, h_eff):
    """Backward-difference input rate (u_now - u_prev) / h_eff."""
    if not h_eff > 0:
        raise ValueError("h_eff must be positive")
    if u_prev is None:
        raise ValueError("input rate needs a valid history")
    return (np.asarray(u_now) - np.asarray(u_prev)) / h_eff


def _col(v):
    return v[:, None] if v.ndim == 1 else v


class StepSolver:
    """Newton solver for one step of a discretized DAE model.

    Parameters
    ----------
    model
        Object with ``descriptors`` (sequence of StateDescriptor), ``n_alg``,
        ``rates(x, y, ydot, t, second)`` returning ``(xdot, xddot)`` for
        column-stacked states of shape ``(n_diff, k)``, and
        ``algebraic(x, y, t)`` returning ``(n_alg, k)``.
    scheme : Scheme
    h : float
        Normal step size in seconds.
    omega_select : float
        Frequency given to the FRO_A / FRO_B states.
    settings : NewtonSettings, optional
    kinds : sequence of IntegratorKind, optional
        Per-state integrators overriding the scheme assignment; the
        half-step pair then uses their discontinuity variants.
    """

    def __init__(self, model, scheme, h, omega_select, settings=None, kinds=None):
        self.model = model
        self.scheme = Scheme(scheme)
        self._kinds = None if kinds is None else [IntegratorKind.parse(k) for k in kinds]
        if self._kinds is not None and len(self._kinds) != len(model.descriptors):
            raise ValueError("kinds must give one integrator per differential state")
        self.h = float(h)
        self.omega_select = float(omega_select)
        self.settings = settings or NewtonSettings()
        self.n_diff = len(model.descriptors)
        self.n_alg = int(model.n_alg)
        self._coef = {}
        for mode, h_eff in (("normal", self.h), ("half", self.h / 2)):
            self._coef[mode] = self._build_coefficients(mode == "half", h_eff)
        self._lu = None
        self._lu_key = None
        self.iteration_log = []

    def _build_coefficients(self, half, h_eff):
        cols = []
        for kind in self.kinds(half):
            cols.append(coefficients(kind, h_eff, self.omega_select).as_tuple())
        arr = np.array(cols, dtype=float).reshape(-1, 4)
        b0, b1, c0, c1 = (arr[:, i].copy() for i in range(4))
        # predictor weights; p0 multiplies x, p1 xdot, p2 xddot
        fund = np.array([d.spectral_class == SpectralClass.FUNDAMENTAL
                         for d in self.model.descriptors], dtype=bool)
        wh = self.omega_select * h_eff
        p0 = np.zeros(len(fund))
        p1 = np.full(len(fund), h_eff)
        p2 = np.full(len(fund), 0.5 * h_eff ** 2)
        if self.omega_select > 0:
            w = self.omega_select
            p0[fund] = np.cos(wh) - 1.0
            p1[fund] = np.sin(wh) / w
            p2[fund] = 2.0 * np.sin(0.5 * wh) ** 2 / w ** 2
        return {"b0": b0, "b1": b1, "c0": c0, "c1": c1, "h": h_eff,
                "p0": p0, "p1": p1, "p2": p2,
                "second": bool(np.any(c0 != 0) or np.any(c1 != 0))}

    def kinds(self, half_step=False):
        """Integrator of every differential state in normal or half-step mode."""
        if self._kinds is not None:
            return [discontinuity_variant(k) if half_step else k for k in self._kinds]
        return [integrator_for(d.spectral_class, self.scheme, half_step)
                for d in self.model.descriptors]

    # -- history -----------------------------------------------------------

    def initial_history(self, state):
        """History at the initial point; algebraic rates are taken as zero."""
        y = state.alg
        ydot = np.zeros_like(y)
        xd, xdd = self._rates(state.diff, y, ydot, state.t, True)
        return History(state.diff.copy(), xd, xdd, y.copy(), ydot, state.t)

    def accept_step(self, state, history, mode="normal", rates=None):
        """History for the next step, evaluated at the accepted `state`."""
        h_eff = self._coef[mode]["h"]
        ydot = input_derivative(state.alg, history.u_prev, h_eff)
        if rates is None:
            rates = self._rates(state.diff, state.alg, ydot, state.t, True)
        xd, xdd = rates
        return History(state.diff.copy(), xd, xdd, state.alg.copy(), ydot, state.t)

    def _rates(self, x, y, ydot, t, second):
        xd, xdd = self.model.rates(_col(x), _col(y), _col(ydot), t, second)
        if not (np.all(np.isfinite(xd)) and np.all(np.isfinite(xdd))):
            raise ModelEvaluationError(f"non-finite model rates at t={t}")
        return xd[:, 0], xdd[:, 0]

    # -- residual ----------------------------------------------------------

    def assemble_residual(self, history, candidate, mode="normal", _return_rates=False, t=None):
        """Step residual for `candidate` (SystemState or stacked vector(s)).

        Accepts a 1-D vector ``[x; y]`` or a 2-D array of such columns.
        """
        if isinstance(candidate, SystemState):
            z, t = candidate.vector(), candidate.t
        else:
            z = np.asarray(candidate, dtype=float)
        if mode == "normal" and not history.valid:
            raise ValueError("normal-mode residual needs a valid history")
        co = self._coef[mode]
        if t is None:
            t = history.t_prev + co["h"]
        single = z.ndim == 1
        Z = _col(z)
        n = self.n_diff
        if Z.shape[0] != n + self.n_alg:
            raise ValueError(f"candidate has {Z.shape[0]} rows, expected {n + self.n_alg}")
        x, y = Z[:n], Z[n:]
        ydot = (y - history.u_prev[:, None]) / co["h"]
        xd, xdd = self.model.rates(x, y, ydot, t, co["second"])
        rx = x - history.x_prev[:, None] - co["b0"][:, None] * xd
        if mode == "normal":
            rx = rx - (co["b1"] * history.xdot_prev)[:, None]
            if co["second"]:
                rx = rx - (co["c1"] * history.xddot_prev)[:, None]
        if co["second"]:
            rx = rx - co["c0"][:, None] * xdd
        if self.n_alg:
            r = np.vstack([rx, self.model.algebraic(x, y, t)])
        else:
            r = rx
        if not np.all(np.isfinite(r)):
            raise ModelEvaluationError(f"non-finite residual at t={t}")
        if single:
            r = r[:, 0]
            if _return_rates:
                return r, (xd[:, 0], xdd[:, 0])
        return r

    def jacobian(self, history, z, mode, r0=None, t=None):
        """Forward-difference Jacobian of the full step residual."""
        if r0 is None:
            r0 = self.assemble_residual(history, z, mode, t=t)
        dz = self.settings.fd_perturbation * np.maximum(1.0, np.abs(z))
        Z = z[:, None] + np.diag(dz)
        R = self.assemble_residual(history, Z, mode, t=t)
        return (R - r0[:, None]) / dz[None, :]

    def _factor(self, history, z, mode, r0, t=None):
        J = self.jacobian(history, z, mode, r0, t)
        with warnings.catch_warnings():
            # exact zero pivots are reported below with the equation name
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(J, check_finite=False)
        d = np.abs(np.diag(lu))
        bad = np.flatnonzero(d < self.settings.pivot_floor)
        if bad.size:
            row = int(piv[bad[0]]) if bad[0] < len(piv) else int(bad[0])
            name = self._row_name(row)
            raise SingularJacobianError(
                f"singular step Jacobian (pivot {d[bad[0]]:.3e}) near equation {name}",
                t=history.t_prev)
        self._lu = (lu, piv)
        self._lu_key = mode

    def _row_name(self, row):
        if row < self.n_diff:
            return self.model.descriptors[row].id
        return f"algebraic[{row - self.n_diff}]"

    # -- Newton ------------------------------------------------------------

    def newton_solve(self, history, guess, mode="normal", step_index=None, t=None):
        """Solve one step.  Returns ``(state, rates, iterations)``.

        `t` overrides the solution time (default ``t_prev + h_eff``).
        """
        s = self.settings
        co = self._coef[mode]
        if t is None:
            t = history.t_prev + co["h"]
        z = guess.vector().copy() if isinstance(guess, SystemState) else np.array(guess, float)
        cand = SystemState(z[:self.n_diff], z[self.n_diff:], t)
        r, rates = self.assemble_residual(history, cand, mode, _return_rates=True)
        rn = np.max(np.abs(r)) if r.size else 0.0
        it = 0
        while rn > s.tol:
            if it >= s.max_iter:
                raise ConvergenceError(
                    f"Newton did not converge at step {step_index} (t={t:.9g}): "
                    f"residual {rn:.3e} after {it} iterations",
                    step=step_index, t=t, residual=rn)
            if self._lu is None or self._lu_key != mode or s.reuse_contraction is None:
                self._factor(history, z, mode, r, t)
            z = z - lu_solve(self._lu, r, check_finite=False)
            it += 1
            cand = SystemState(z[:self.n_diff], z[self.n_diff:], t)
            r, rates = self.assemble_residual(history, cand, mode, _return_rates=True)
            rn_new = np.max(np.abs(r))
            if s.reuse_contraction is not None and rn_new > s.tol \
                    and rn_new > s.reuse_contraction * rn:
                self._lu = None  # stale factors: rebuild at the current iterate
            rn = rn_new
        self.iteration_log.append((t, it, rn))
        n = self.n_diff
        state = SystemState(z[:n], z[n:], t)
        return state, rates, it

    def predict(self, history, mode="normal"):
        """Explicit guess for the next point.

        Fundamental-class states are extrapolated along a sinusoid at
        ``omega_select``, slow states by Taylor expansion.  The second
        derivative is used when the scheme provides it.
        """
        if not history.valid:
            return np.concatenate([history.x_prev, history.u_prev])
        co = self._coef[mode]
        x, xd = history.x_prev, history.xdot_prev
        if self._coef["normal"]["second"]:
            xn = x + co["p1"] * xd + co["p2"] * history.xddot_prev
        else:
            xn = x + co["p0"] * x + co["p1"] * xd
        return np.concatenate([xn, history.u_prev + co["h"] * history.udot_prev])

    def step(self, history, guess=None, mode="normal", step_index=None, t=None):
        """Advance one (half) step and return ``(state, new_history, iterations)``."""
        if guess is None:
            guess = self.predict(history, mode)
        state, rates, it = self.newton_solve(history, guess, mode, step_index, t)
        new_hist = self.accept_step(state, history, mode, rates)
        return state, new_hist, it

    def half_step_pair(self, state, step_index=None, times=None):
        """Two h/2 steps with zero-history integrators after a discontinuity.

        `state` is the post-event state at the event time.  `times` optionally
        gives the two solution instants exactly.  Returns the list of the two
        solved states, the rebuilt normal-mode history and the iteration count.
        """
        hist = History(state.diff.copy(), np.zeros(self.n_diff), np.zeros(self.n_diff),
                       state.alg.copy(), np.zeros(self.n_alg), state.t, valid=False)
        self._lu = None
        out = []
        iters = 0
        for j in range(2):
            tj = None if times is None else times[j]
            s1, hist, it = self.step(hist, mode="half", step_index=step_index, t=tj)
            out.append(s1)
            iters += it
        self._lu = None
        hist = replace(hist, valid=True)
        return out, hist, iters
