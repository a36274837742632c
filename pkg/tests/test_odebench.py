"""Scalar and small linear benchmark problems through the production solver."""

import math

import numpy as np
import pytest

from froemt.integrators import IntegratorKind
from froemt.odebench import (
    alternation_metric,
    harmonic_check,
    linear_map_error,
    observed_order,
    rl_switching,
    zero_multiplicity,
)

W60 = 2 * math.pi * 60


@pytest.mark.parametrize("kind,order,tol", [
    ("obreshkov", 4, 0.3), ("taylor2", 2, 0.2), ("trapezoidal", 2, 0.2),
    ("backward_euler", 1, 0.1), ("frob", 2, 0.2),
])
def test_observed_orders(kind, order, tol):
    slope, _ = observed_order(kind)
    assert abs(slope - order) < tol


def test_froa_order_at_fixed_frequency():
    # with omega fixed the frequency correction to c0 is O(h**4), so the
    # rule keeps the fourth order of its low-frequency limit
    slope, errs = observed_order("froa")
    assert abs(slope - 4) < 0.3
    assert errs[-1] < 1e-10


@pytest.mark.parametrize("kind", list(IntegratorKind))
def test_one_step_map_matches_rational_factor(kind):
    assert linear_map_error(kind) < 1e-12


@pytest.mark.parametrize("kind,slope", [
    ("froa", 3), ("frob", 1), ("obreshkov", 5), ("taylor2", 3), ("trapezoidal", 3),
])
def test_zero_multiplicity(kind, slope):
    assert abs(zero_multiplicity(kind) - slope) < 0.1


def test_froa_harmonic_oscillator_is_exact():
    res = harmonic_check("froa")
    assert res.amplitude_drift < 1e-9
    assert res.phase_drift / (W60 * 2.0) < 1e-9


def test_trapezoidal_frequency_warping():
    h = 1e-3
    res = harmonic_check("trapezoidal", h=h)
    warped = 2 / h * math.atan(W60 * h / 2)
    assert res.frequency == pytest.approx(warped, rel=1e-2)
    # amplitude is preserved, only the phase drifts
    assert res.amplitude_drift < 1e-9
    assert res.phase_drift > 1.0


def test_alternation_metric():
    n = np.arange(40)
    assert alternation_metric(np.sin(0.01 * n), 0) < 1e-4
    assert alternation_metric(1 + 0.1 * (-1.0) ** n, 0) == pytest.approx(0.1 / 1.1)


def test_rl_switching_protocol():
    times, i, exact, first = rl_switching(True)
    assert np.max(np.abs(i[first:] - exact[first:])) < 1e-6 * np.max(np.abs(exact))
    # trapezoidal keeps alternating the residual rounding left by the pair
    assert alternation_metric(i, first) < 1e-7


def test_rl_switching_without_protocol_rings():
    times, i, exact, first = rl_switching(False)
    assert alternation_metric(i, first) > 1e-4
    # the ringing alternates sign around the exact response
    d = (i - exact)[first:first + 6]
    assert np.all(np.sign(d[1:]) == -np.sign(d[:-1]))
