"""Step residual, Newton solve, history handling and the half-step pair."""

import math

import numpy as np
import pytest

from froemt.engine import (
    ConvergenceError,
    NewtonSettings,
    Scheme,
    SingularJacobianError,
    SpectralClass,
    StateDescriptor,
    StepSolver,
    SystemState,
    input_derivative,
    integrator_for,
    second_derivative,
)
from froemt.integrators import IntegratorKind
from froemt.odebench import LinearModel, one_step_factor

W60 = 2 * math.pi * 60


class SmallDAE:
    """``x' = -x + y``, ``0 = y - a x``; reduces to ``x' = (a - 1) x``."""

    n_alg = 1

    def __init__(self, a=0.5, singular=False):
        self.a = a
        self.singular = singular
        self.descriptors = [StateDescriptor("x", SpectralClass.SLOW)]

    def rates(self, x, y, ydot, t, second=True):
        xd = -x + y
        return xd, -xd + ydot

    def algebraic(self, x, y, t):
        return 0.0 * y if self.singular else y - self.a * x


class Pendulum:
    n_alg = 0
    descriptors = [StateDescriptor("th", SpectralClass.SLOW), StateDescriptor("w", SpectralClass.SLOW)]

    def rates(self, x, y, ydot, t, second=True):
        xd = np.vstack([x[1:2], -np.sin(x[0:1])])
        xdd = np.vstack([xd[1:2], -np.cos(x[0:1]) * xd[0:1]])
        return xd, xdd


def test_scheme_assignment():
    f, s = SpectralClass.FUNDAMENTAL, SpectralClass.SLOW
    assert integrator_for(f, Scheme.FRO) is IntegratorKind.FRO_A
    assert integrator_for(s, Scheme.FRO) is IntegratorKind.OBRESHKOV
    assert integrator_for(f, Scheme.FRO, half_step=True) is IntegratorKind.FRO_B
    assert integrator_for(s, Scheme.FRO, half_step=True) is IntegratorKind.TAYLOR2
    for cls in (f, s):
        assert integrator_for(cls, Scheme.TRAP) is IntegratorKind.TRAPEZOIDAL
        assert integrator_for(cls, Scheme.TRAP, True) is IntegratorKind.BACKWARD_EULER
        assert integrator_for(cls, "be") is IntegratorKind.BACKWARD_EULER


def test_second_derivative_linear():
    assert second_derivative(lambda x, u: 3.0 * x, 2.0) == pytest.approx(18.0, rel=1e-8)


def test_second_derivative_inductor():
    r, l, v, vdot, i = 0.5, 0.01, 1.0, 7.0, 0.2
    f = lambda i, v: (v - r * i) / l
    expect = (vdot - r * (v - r * i) / l) / l
    got = second_derivative(f, i, v, vdot, dfdx=lambda i, v: -r / l, dfdu=lambda i, v: 1 / l)
    assert got == pytest.approx(expect, rel=1e-14)


def test_second_derivative_nonlinear():
    assert second_derivative(lambda x, u: np.sin(x) * u, 0.0, 2.0, 3.0) == pytest.approx(0.0, abs=1e-12)


def test_input_derivative():
    assert input_derivative(1.0, 1.0, 1e-3) == 0.0
    assert input_derivative(1.5, 1.0, 0.001) == pytest.approx(500.0, rel=1e-12)
    alpha, h = 3.7, 1e-3
    assert input_derivative(alpha * 0.5, alpha * (0.5 - h), h) == pytest.approx(alpha, rel=1e-10)
    with pytest.raises(ValueError):
        input_derivative(1.0, None, h)


def test_fixed_point_residual_is_zero():
    solver = StepSolver(LinearModel([[-2.0]], [4.0]), Scheme.FRO, 1e-3, W60)
    s = SystemState([2.0], [], 0.0)
    hist = solver.initial_history(s)
    assert np.allclose(hist.xdot_prev, 0) and np.allclose(hist.xddot_prev, 0)
    r = solver.assemble_residual(hist, SystemState([2.0], [], 1e-3))
    assert np.max(np.abs(r)) < 1e-14


def test_inductor_residual_trapezoidal():
    v, l, h = 2.0, 0.05, 1e-3
    solver = StepSolver(LinearModel([[0.0]], [v / l]), Scheme.TRAP, h, 0.0)
    hist = solver.initial_history(SystemState([0.3], [], 0.0))
    good = solver.assemble_residual(hist, np.array([0.3 + h * v / l]))
    bad = solver.assemble_residual(hist, np.array([0.3 + h * v / l + 1e-6]))
    assert abs(good[0]) < 1e-15
    assert bad[0] == pytest.approx(1e-6)


def test_newton_returns_converged_guess_unchanged():
    solver = StepSolver(LinearModel([[-2.0]], [4.0]), Scheme.FRO, 1e-3, W60)
    hist = solver.initial_history(SystemState([2.0], [], 0.0))
    state, _, it = solver.newton_solve(hist, np.array([2.0]))
    assert it == 0 and state.diff[0] == 2.0


@pytest.mark.parametrize("scheme,kind", [
    (Scheme.FRO, IntegratorKind.OBRESHKOV), (Scheme.TRAP, IntegratorKind.TRAPEZOIDAL),
    (Scheme.BE, IntegratorKind.BACKWARD_EULER),
])
def test_linear_step_hits_rational_fixed_point(scheme, kind):
    lam, h = -30.0, 1e-2
    solver = StepSolver(LinearModel([[lam]]), scheme, h, W60)
    hist = solver.initial_history(SystemState([1.0], [], 0.0))
    state, _, it = solver.newton_solve(hist, np.array([1.0]))
    # one iteration; the difference Jacobian leaves an error far below tol
    assert it == 1
    assert abs(state.diff[0] - one_step_factor(kind, h, lam)) < solver.settings.tol


def test_algebraic_unknowns_are_solved_with_the_state():
    h, a = 1e-3, 0.5
    solver = StepSolver(SmallDAE(a), Scheme.TRAP, h, 0.0, NewtonSettings(tol=1e-13))
    hist = solver.initial_history(SystemState([1.0], [a], 0.0))
    state = None
    for n in range(10):
        state, hist, _ = solver.step(hist)
    r = one_step_factor(IntegratorKind.TRAPEZOIDAL, h, a - 1.0)
    assert state.diff[0] == pytest.approx(r ** 10, rel=1e-11)
    assert state.alg[0] == pytest.approx(a * state.diff[0], rel=1e-12)
    assert state.t == pytest.approx(10 * h)


def test_singular_jacobian_names_the_row():
    solver = StepSolver(SmallDAE(singular=True), Scheme.TRAP, 1e-3, 0.0)
    hist = solver.initial_history(SystemState([1.0], [0.0], 0.0))
    with pytest.raises(SingularJacobianError, match="algebraic"):
        solver.newton_solve(hist, np.array([2.0, 1.0]))


def test_non_convergence_is_reported():
    settings = NewtonSettings(tol=1e-14, max_iter=1, reuse_contraction=None)
    solver = StepSolver(Pendulum(), Scheme.FRO, 0.5, 0.0, settings)
    hist = solver.initial_history(SystemState([2.5, 0.0], [], 0.0))
    with pytest.raises(ConvergenceError) as info:
        solver.newton_solve(hist, np.array([0.0, 0.0]), step_index=7)
    assert info.value.step == 7 and info.value.residual > 0


def test_predictor_is_exact_for_the_selected_sinusoid():
    # x'' = -w^2 x as (x, x'/w); both states fundamental
    model = LinearModel([[0.0, W60], [-W60, 0.0]], spectral_class=SpectralClass.FUNDAMENTAL)
    h = 1e-3
    solver = StepSolver(model, Scheme.FRO, h, W60, NewtonSettings(tol=1e-12))
    hist = solver.initial_history(SystemState([1.0, 0.0], [], 0.0))
    guess = solver.predict(hist)
    assert np.allclose(guess, [math.cos(W60 * h), -math.sin(W60 * h)], atol=1e-13)
    _, _, it = solver.newton_solve(hist, guess)
    assert it == 0


def test_normal_mode_rejects_invalidated_history():
    solver = StepSolver(LinearModel([[-1.0]]), Scheme.FRO, 1e-3, W60)
    hist = solver.initial_history(SystemState([1.0], [], 0.0)).invalidated()
    with pytest.raises(ValueError):
        solver.assemble_residual(hist, np.array([1.0]))


def test_half_step_pair_uses_zero_history_variants():
    lam, h = -5.0, 1e-2
    solver = StepSolver(LinearModel([[lam]]), Scheme.FRO, h, W60, NewtonSettings(tol=1e-14))
    pair, hist, _ = solver.half_step_pair(SystemState([1.0], [], 0.3), times=(0.305, 0.31))
    r = one_step_factor(IntegratorKind.TAYLOR2, h / 2, lam)
    assert [p.t for p in pair] == [0.305, 0.31]
    assert pair[0].diff[0] == pytest.approx(r, rel=1e-12)
    assert pair[1].diff[0] == pytest.approx(r * r, rel=1e-12)
    assert hist.valid and hist.t_prev == 0.31
    assert hist.xdot_prev[0] == pytest.approx(lam * r * r, rel=1e-12)
    assert solver.kinds(half_step=True) == [IntegratorKind.TAYLOR2]


def test_accept_step_of_steady_state_has_zero_rates():
    solver = StepSolver(SmallDAE(1.0), Scheme.FRO, 1e-3, W60)
    s = SystemState([0.7], [0.7], 0.0)
    hist = solver.initial_history(s)
    s1, hist, it = solver.step(hist)
    assert it == 0
    assert np.allclose(hist.xdot_prev, 0, atol=1e-15) and np.allclose(hist.udot_prev, 0)
