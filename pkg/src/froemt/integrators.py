"""
Two-point integrators with first- and second-derivative terms.

Every integrator here advances a state over one step of size ``h`` as::

    x_t = x_{t-h} + b0*xdot_t + b_m1*xdot_{t-h} + c0*xddot_t + c_m1*xddot_{t-h}

The classical first-derivative rules (trapezoidal, backward Euler) are the
special case ``c0 = c_m1 = 0``.  The frequency-response-optimized rules pick
the coefficients so that the s-domain relative error vanishes at
``s = +/- j*omega_select``, which makes them exact for sinusoids at that
frequency whatever the step size.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "IntegratorKind",
    "IntegratorCoefficients",
    "DerivativeBundle",
    "IntegratorError",
    "coefficients",
    "relative_error",
    "step_residual",
    "discontinuity_variant",
]


class IntegratorError(ValueError):
    """Invalid integrator request (step size, frequency or kind)."""


class IntegratorKind(str, Enum):
    FRO_A = "froa"
    FRO_B = "frob"
    OBRESHKOV = "obreshkov"
    TAYLOR2 = "taylor2"
    TRAPEZOIDAL = "trapezoidal"
    BACKWARD_EULER = "backward_euler"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"a": "froa", "b": "frob", "c": "obreshkov", "d": "taylor2",
                   "trap": "trapezoidal", "be": "backward_euler"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise IntegratorError(f"unknown integrator kind {name!r}") from None

    @property
    def needs_omega(self):
        return self in (IntegratorKind.FRO_A, IntegratorKind.FRO_B)


@dataclass(frozen=True)
class IntegratorCoefficients:
    """Coefficient set of one integrator at a fixed step size."""

    b0: float
    b_m1: float
    c0: float
    c_m1: float
    h: float
    omega_select: float = 0.0

    @property
    def zero_history(self):
        return self.b_m1 == 0.0 and self.c_m1 == 0.0

    @property
    def uses_second_derivative(self):
        return self.c0 != 0.0 or self.c_m1 != 0.0

    def as_tuple(self):
        return (self.b0, self.b_m1, self.c0, self.c_m1)


@dataclass(frozen=True)
class DerivativeBundle:
    xdot: float
    xddot: float = 0.0

    def __post_init__(self):
        if not (np.all(np.isfinite(self.xdot)) and np.all(np.isfinite(self.xddot))):
            raise ValueError("derivatives must be finite")


# x*cot(x) - 1 = sum_k C_k x^(2k), k >= 1
_XCOT_SERIES = (-1.0 / 3.0, -1.0 / 45.0, -2.0 / 945.0, -1.0 / 4725.0,
                -2.0 / 93555.0, -1382.0 / 638512875.0)


def _froa_c0(h, omega):
    x = 0.5 * omega * h
    if x < 0.05:
        x2 = x * x
        acc = 0.0
        for coef in reversed(_XCOT_SERIES):
            acc = (acc + coef) * x2
        return acc / (omega * omega)
    return (x / math.tan(x) - 1.0) / (omega * omega)


@lru_cache(maxsize=256)
def _coefficients(kind, h, omega):
    if kind is IntegratorKind.TRAPEZOIDAL:
        return IntegratorCoefficients(h / 2, h / 2, 0.0, 0.0, h)
    if kind is IntegratorKind.BACKWARD_EULER:
        return IntegratorCoefficients(h, 0.0, 0.0, 0.0, h)
    if kind is IntegratorKind.OBRESHKOV:
        return IntegratorCoefficients(h / 2, h / 2, -h * h / 12, h * h / 12, h)
    if kind is IntegratorKind.TAYLOR2:
        return IntegratorCoefficients(h, 0.0, -h * h / 2, 0.0, h)
    if not omega > 0.0:
        raise IntegratorError(f"{kind.value} needs omega_select > 0, got {omega}")
    if kind is IntegratorKind.FRO_A:
        if omega * h >= math.pi:
            raise IntegratorError(
                f"froa requires omega_select*h < pi (got {omega * h:.6g})")
        c0 = _froa_c0(h, omega)
        return IntegratorCoefficients(h / 2, h / 2, c0, -c0, h, omega)
    # FRO_B; 1 - cos(wh) written as 2 sin^2(wh/2) to keep precision as w -> 0
    s = math.sin(0.5 * omega * h)
    return IntegratorCoefficients(math.sin(omega * h) / omega, 0.0,
                                  -2.0 * s * s / (omega * omega), 0.0, h, omega)


def coefficients(kind, h, omega_select=0.0):
    """Return the coefficient set of integrator `kind` for step `h`.

    Parameters
    ----------
    kind : IntegratorKind or str
    h : float
        Step size in seconds, strictly positive.
    omega_select : float
        Angular frequency (rad/s) at which FRO_A / FRO_B are made exact.
        Ignored by the other kinds.
    """
    kind = IntegratorKind.parse(kind)
    h = float(h)
    if not (h > 0.0 and math.isfinite(h)):
        raise IntegratorError(f"step size must be positive, got {h}")
    omega = float(omega_select) if kind.needs_omega else 0.0
    return _coefficients(kind, h, omega)


def _series_terms(coeffs, z, nterms=28):
    # Taylor expansion in z = s*h of the relative error; avoids the cancellation
    # of the closed form near s = 0.
    h = coeffs.h
    beta0, beta1 = coeffs.b0 / h, coeffs.b_m1 / h
    gamma0, gamma1 = coeffs.c0 / (h * h), coeffs.c_m1 / (h * h)
    out = np.zeros_like(z)
    zn = np.ones_like(z)
    fact = [1.0]
    for n in range(1, nterms + 1):
        fact.append(fact[-1] * n)
    for n in range(1, nterms + 1):
        zn = zn * z
        a = (-1.0) ** (n + 1) / fact[n]
        a -= beta1 * (-1.0) ** (n - 1) / fact[n - 1]
        if n == 1:
            a -= beta0
        if n == 2:
            a -= gamma0
        if n >= 2:
            a -= gamma1 * (-1.0) ** (n - 2) / fact[n - 2]
        out = out + a * zn
    return out


def relative_error(coeffs, s):
    """Evaluate the s-domain relative error of an integrator.

    ``1 - e^{-sh} - b0 s - b_m1 s e^{-sh} - c0 s^2 - c_m1 s^2 e^{-sh}``

    Accepts a scalar or an array of complex frequencies.  For ``|s h| < 0.5``
    the function is summed from its power series, which is the same entire
    function but free of cancellation close to the origin.
    """
    s_arr = np.asarray(s, dtype=complex)
    h = coeffs.h
    z = s_arr * h
    em = np.exp(-z)
    direct = (-np.expm1(-z) - coeffs.b0 * s_arr - coeffs.b_m1 * s_arr * em
              - coeffs.c0 * s_arr ** 2 - coeffs.c_m1 * s_arr ** 2 * em)
    small = np.abs(z) < 0.5
    if np.any(small):
        direct = np.where(small, _series_terms(coeffs, z), direct)
    if np.ndim(s) == 0:
        return complex(direct)
    return direct


def step_residual(coeffs, x_t, x_prev, d_t, d_prev):
    """Residual of one step; zero iff the discretized equation holds."""
    return (x_t - x_prev - coeffs.b0 * d_t.xdot - coeffs.b_m1 * d_prev.xdot
            - coeffs.c0 * d_t.xddot - coeffs.c_m1 * d_prev.xddot)


_VARIANT = {
    IntegratorKind.FRO_A: IntegratorKind.FRO_B,
    IntegratorKind.OBRESHKOV: IntegratorKind.TAYLOR2,
    IntegratorKind.TRAPEZOIDAL: IntegratorKind.BACKWARD_EULER,
}


def discontinuity_variant(kind):
    """Zero-history integrator used for the two half steps after an event."""
    kind = IntegratorKind.parse(kind)
    return _VARIANT.get(kind, kind)
