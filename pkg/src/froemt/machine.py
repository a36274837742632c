"""
Synchronous generator: subtransient dq model with stator flux dynamics.

Nine states per machine, in this order::

    delta, dw, eqp, edp, psi1d, psi2q, psid, psiq, psi0

Generator convention, per unit on the system base, time in seconds.  The
q-axis sits at ``delta`` in the synchronously rotating frame, so the Park
transform is applied at ``theta = omega_s*t + delta - pi/2``.

A series impedance between the machine terminal and its network attachment
point (a unit step-up transformer) can be folded into the stator circuit.
The stator flux states then refer to the attachment point; torque and rotor
equations are unchanged.
"""

from dataclasses import dataclass, fields, replace
import math

import numpy as np

__all__ = [
    "STATE_NAMES",
    "MachineParams",
    "MachineState",
    "MachineInputs",
    "MachineError",
    "park",
    "inverse_park",
    "machine_derivatives",
    "electrical_torque",
    "steady_state_init",
    "MachineBank",
]

STATE_NAMES = ("delta", "dw", "eqp", "edp", "psi1d", "psi2q", "psid", "psiq", "psi0")
SLOW_STATES = STATE_NAMES[:8]

_A = 2.0 * math.pi / 3.0


class MachineError(ValueError):
    pass


@dataclass(frozen=True)
class MachineParams:
    """Machine data.  Reactances/resistance on the machine rating unless
    converted with :meth:`to_system_base`."""

    s_rated: float
    r_s: float
    x_l: float
    x_d: float
    x_q: float
    xp_d: float
    xp_q: float
    xpp_d: float
    xpp_q: float
    tp_d0: float
    tp_q0: float
    tpp_d0: float
    tpp_q0: float
    h: float
    d: float

    def validate(self):
        errs = []
        if not (self.x_d > self.xp_d > self.xpp_d > self.x_l > 0):
            errs.append("require x_d > xp_d > xpp_d > x_l > 0")
        if not (self.x_q > self.xp_q > self.xpp_q > 0):
            errs.append("require x_q > xp_q > xpp_q > 0")
        if not (self.xpp_q > self.x_l):
            errs.append("require xpp_q > x_l")
        for name in ("tp_d0", "tp_q0", "tpp_d0", "tpp_q0"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be positive")
        if not self.h > 0:
            errs.append("h must be positive")
        if not self.s_rated > 0:
            errs.append("s_rated must be positive")
        if self.r_s < 0 or self.d < 0:
            errs.append("r_s and d must be non-negative")
        if errs:
            raise MachineError("; ".join(errs))
        return self

    def to_system_base(self, base_mva):
        """Impedances and damping rescaled from the machine rating to `base_mva`.

        The inertia constant is taken as already expressed on the system base.
        """
        zk = base_mva / self.s_rated
        scaled = {f.name: getattr(self, f.name) * zk for f in fields(self)
                  if f.name in ("r_s", "x_l", "x_d", "x_q", "xp_d", "xp_q",
                                "xpp_d", "xpp_q")}
        scaled["d"] = self.d / zk
        return replace(self, **scaled)


@dataclass
class MachineState:
    delta: float
    dw: float
    eqp: float
    edp: float
    psi1d: float
    psi2q: float
    psid: float
    psiq: float
    psi0: float

    def as_array(self):
        return np.array([getattr(self, n) for n in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass
class MachineInputs:
    v_abc: np.ndarray
    e_fd: float
    p_m: float


def park(v_abc, theta):
    """Amplitude-invariant Park transform, d-axis at `theta`.

    `v_abc` has the phase index first; extra trailing axes broadcast.
    """
    va, vb, vc = v_abc[0], v_abc[1], v_abc[2]
    ca, cb, cc = np.cos(theta), np.cos(theta - _A), np.cos(theta + _A)
    sa, sb, sc = np.sin(theta), np.sin(theta - _A), np.sin(theta + _A)
    vd = (2.0 / 3.0) * (va * ca + vb * cb + vc * cc)
    vq = -(2.0 / 3.0) * (va * sa + vb * sb + vc * sc)
    v0 = (va + vb + vc) / 3.0
    return np.array([vd, vq, v0])


def inverse_park(v_dq0, theta):
    vd, vq, v0 = v_dq0[0], v_dq0[1], v_dq0[2]
    va = vd * np.cos(theta) - vq * np.sin(theta) + v0
    vb = vd * np.cos(theta - _A) - vq * np.sin(theta - _A) + v0
    vc = vd * np.cos(theta + _A) - vq * np.sin(theta + _A) + v0
    return np.array([va, vb, vc])


def electrical_torque(psid, psiq, i_d, i_q):
    """Air-gap torque psi_d*i_q - psi_q*i_d."""
    return psid * i_q - psiq * i_d


class MachineBank:
    """Vectorized evaluation of several machines sharing one frequency.

    States are passed state-major as arrays of shape (9, m, k): state index,
    machine, column.  The rotor equations and the flux-to-current relations
    are linear, so they are stored as block matrices over the machines.

    Parameters
    ----------
    params : sequence of MachineParams
        On the system base.
    omega_s : float
        Synchronous angular frequency, rad/s.
    r_ext, x_ext : sequence of float
        Series impedance folded into each stator (0 for none).
    e_fd, p_m : sequence of float
        Constant field voltage and mechanical power.
    """

    def __init__(self, params, omega_s, r_ext=None, x_ext=None, e_fd=None, p_m=None):
        m = len(params)
        self.m = m
        self.params = tuple(params)
        self.omega_s = float(omega_s)
        col = lambda vals: np.asarray(vals, dtype=float).reshape(m, 1)
        get = lambda name: np.array([getattr(p, name) for p in params], dtype=float)
        self.r_ext = col(r_ext if r_ext is not None else [0.0] * m)
        self.x_ext = col(x_ext if x_ext is not None else [0.0] * m)
        self.e_fd = col(e_fd if e_fd is not None else [1.0] * m)
        self.p_m = col(p_m if p_m is not None else [0.0] * m)
        self.l_ext = self.x_ext / self.omega_s
        xl, xd, xq = get("x_l"), get("x_d"), get("x_q")
        xpd, xpq, xppd, xppq = get("xp_d"), get("xp_q"), get("xpp_d"), get("xpp_q")
        xe = self.x_ext[:, 0]
        ad = (xpd - xppd) / (xpd - xl) ** 2
        aq = (xpq - xppq) / (xpq - xl) ** 2
        tpd, tpq = 1.0 / get("tp_d0"), 1.0 / get("tp_q0")
        tppd, tppq = 1.0 / get("tpp_d0"), 1.0 / get("tpp_q0")
        kd1 = (xppd - xl) / (xpd - xl)
        kd2 = (xpd - xppd) / (xpd - xl)
        kq1 = (xppq - xl) / (xpq - xl)
        kq2 = (xpq - xppq) / (xpq - xl)

        # currents (i_d, i_q, i_0) from states 2..8 (eqp, edp, p1d, p2q, psid, psiq, psi0)
        z = np.zeros((m, m))
        dg = np.diag
        xdd, xqq, x00 = xppd + xe, xppq + xe, xl + xe
        self.c_cur = np.block([
            [dg(kd1 / xdd), z, dg(kd2 / xdd), z, -dg(1 / xdd), z, z],
            [z, -dg(kq1 / xqq), z, dg(kq2 / xqq), z, -dg(1 / xqq), z],
            [z, z, z, z, z, z, -dg(1 / x00)],
        ])
        # rotor rates (eqp, edp, p1d, p2q) from the same states plus (i_d, i_q)
        dmd, dmq = xd - xpd, xq - xpq
        ld, lq = xpd - xl, xpq - xl
        self.a_rot = np.block([
            [dg(-tpd * (1 + dmd * ad)), z, dg(tpd * dmd * ad), z],
            [z, dg(-tpq * (1 + dmq * aq)), z, dg(-tpq * dmq * aq)],
            [dg(tppd), z, -dg(tppd), z],
            [z, -dg(tppq), z, -dg(tppq)],
        ])
        self.b_rot = np.block([
            [dg(-tpd * dmd * (1 - ad * ld)), z],
            [z, dg(tpq * dmq * (1 - aq * lq))],
            [dg(-tppd * ld), z],
            [z, dg(-tppq * lq)],
        ])
        self.e_rot = np.concatenate([tpd * self.e_fd[:, 0], np.zeros(3 * m)]).reshape(4 * m, 1)
        self.r_e = col(get("r_s")) + self.r_ext
        self.inv_2h = col(1.0 / (2.0 * get("h")))
        self.d = col(get("d"))
        self._off = np.array([0.0, -_A, _A]).reshape(3, 1, 1)

    def theta(self, delta, t):
        return self.omega_s * t + delta - 0.5 * math.pi

    def _trig(self, delta, t):
        th3 = delta + (self._off + (self.omega_s * t - 0.5 * math.pi))
        return np.cos(th3), np.sin(th3)

    def _currents(self, X):
        k = X.shape[-1]
        return (self.c_cur @ X[2:].reshape(7 * self.m, k)).reshape(3, self.m, k)

    def currents_dq0(self, X):
        """Stator currents (d, q, 0) from states X of shape (9, m, k)."""
        i = self._currents(X)
        return i[0], i[1], i[2]

    def currents_abc(self, X, t):
        """Injected phase currents, shape (3, m, k)."""
        c3, s3 = self._trig(X[0], t)
        i = self._currents(X)
        return c3 * i[0] - s3 * i[1] + i[2]

    def rates(self, X, v_abc, vdot_abc, t, second=True):
        """First (and optionally second) derivatives of all machine states.

        Returns ``(Xdot, Xddot, i_abc, idot_abc)``; arrays (9, m, k) and
        (3, m, k).  `vdot_abc` may be None when ``second`` is False.
        """
        Xdot, i_abc, ctx = self.first(X, v_abc, t)
        if not second:
            return Xdot, np.zeros_like(Xdot), i_abc, None
        Xddot, idot_abc = self.second(ctx, vdot_abc)
        return Xdot, Xddot, i_abc, idot_abc

    def first(self, X, v_abc, t):
        """State derivatives and injected phase currents.

        The third return value carries intermediates for :meth:`second`.
        """
        m, k = self.m, X.shape[-1]
        ws = self.omega_s
        dw, psid, psiq = X[1], X[6], X[7]
        w = 1.0 + dw
        c3, s3 = self._trig(X[0], t)
        vd = (2.0 / 3.0) * (v_abc * c3).sum(axis=0)
        vq = (-2.0 / 3.0) * (v_abc * s3).sum(axis=0)
        v0 = v_abc.sum(axis=0) / 3.0
        cur = self._currents(X)
        i_d, i_q, i_0 = cur
        te = psid * i_q - psiq * i_d

        Xdot = np.empty((9, m, k))
        Xdot[0] = ws * dw
        Xdot[1] = (self.p_m / w - te - self.d * dw) * self.inv_2h
        Xdot[2:6] = (self.a_rot @ X[2:6].reshape(4 * m, k)
                     + self.b_rot @ cur[:2].reshape(2 * m, k) + self.e_rot).reshape(4, m, k)
        Xdot[6] = ws * (self.r_e * i_d + w * psiq + vd)
        Xdot[7] = ws * (self.r_e * i_q - w * psid + vq)
        Xdot[8] = ws * (self.r_e * i_0 + v0)
        i_abc = c3 * i_d - s3 * i_q + i_0
        return Xdot, i_abc, (X, Xdot, c3, s3, w, vd, vq, cur)

    def second(self, ctx, vdot_abc):
        """Second derivatives and phase current rates given terminal voltage rates."""
        X, Xdot, c3, s3, w, vd, vq, cur = ctx
        m, k = self.m, X.shape[-1]
        ws = self.omega_s
        psid, psiq = X[6], X[7]
        i_d, i_q = cur[0], cur[1]
        d_dw, d_psid, d_psiq = Xdot[1], Xdot[6], Xdot[7]
        thdot = ws * w
        dcur = self._currents(Xdot)
        di_d, di_q, di_0 = dcur
        dvd = (2.0 / 3.0) * (vdot_abc * c3).sum(axis=0) + thdot * vq
        dvq = (-2.0 / 3.0) * (vdot_abc * s3).sum(axis=0) - thdot * vd
        dv0 = vdot_abc.sum(axis=0) / 3.0
        dte = d_psid * i_q + psid * di_q - d_psiq * i_d - psiq * di_d

        Xddot = np.empty((9, m, k))
        Xddot[0] = ws * d_dw
        Xddot[1] = (-self.p_m * d_dw / (w * w) - dte - self.d * d_dw) * self.inv_2h
        Xddot[2:6] = (self.a_rot @ Xdot[2:6].reshape(4 * m, k)
                      + self.b_rot @ dcur[:2].reshape(2 * m, k)).reshape(4, m, k)
        Xddot[6] = ws * (self.r_e * di_d + d_dw * psiq + w * d_psiq + dvd)
        Xddot[7] = ws * (self.r_e * di_q - d_dw * psid - w * d_psid + dvq)
        Xddot[8] = ws * (self.r_e * di_0 + dv0)
        idot_abc = c3 * (di_d - thdot * i_q) - s3 * (di_q + thdot * i_d) + di_0
        return Xddot, idot_abc

    def current_rates_abc(self, X, Xdot, t):
        """Phase current derivatives from states and their derivatives."""
        c3, s3 = self._trig(X[0], t)
        i_d, i_q, _ = self._currents(X)
        di_d, di_q, di_0 = self._currents(Xdot)
        thdot = self.omega_s * (1.0 + X[1])
        return c3 * (di_d - thdot * i_q) - s3 * (di_q + thdot * i_d) + di_0


def machine_derivatives(state, inputs, params, omega_s, t=0.0, vdot_abc=None,
                        r_ext=0.0, x_ext=0.0):
    """First and second derivatives of one machine's nine states.

    Returns ``(xdot, xddot)`` as length-9 arrays.  `vdot_abc` (terminal
    voltage rates) defaults to zero.
    """
    bank = MachineBank([params], omega_s, [r_ext], [x_ext], [inputs.e_fd], [inputs.p_m])
    X = np.asarray(state.as_array() if isinstance(state, MachineState) else state,
                   dtype=float).reshape(9, 1, 1)
    v = np.asarray(inputs.v_abc, dtype=float).reshape(3, 1, 1)
    vd = np.zeros((3, 1, 1)) if vdot_abc is None else np.asarray(vdot_abc, float).reshape(3, 1, 1)
    xd, xdd, _, _ = bank.rates(X, v, vd, t, True)
    out = xd[:, 0, 0], xdd[:, 0, 0]
    if not (np.all(np.isfinite(out[0])) and np.all(np.isfinite(out[1]))):
        raise MachineError("non-finite machine derivatives")
    return out


def steady_state_init(v_term, s_gen, params, r_ext=0.0, x_ext=0.0):
    """Balanced steady state for terminal phasor `v_term` delivering `s_gen`.

    Phasors are peak-value per unit relative to the synchronous frame.  With a
    folded series impedance, `v_term` and `s_gen` refer to the attachment
    point.  Returns ``(MachineState, MachineInputs)``; ``inputs.v_abc`` holds
    the phase voltages at ``t = 0``.
    """
    params.validate()
    v_term = complex(v_term)
    if abs(v_term) <= 0:
        raise MachineError("terminal voltage must be non-zero")
    i_ph = complex(s_gen).conjugate() / v_term.conjugate()
    r_e = params.r_s + r_ext
    e_locus = v_term + complex(r_e, params.x_q + x_ext) * i_ph
    delta = math.atan2(e_locus.imag, e_locus.real)
    rot = complex(math.cos(delta - 0.5 * math.pi), -math.sin(delta - 0.5 * math.pi))
    vdq, idq = v_term * rot, i_ph * rot
    vd, vq, i_d, i_q = vdq.real, vdq.imag, idq.real, idq.imag
    eqp = vq + r_e * i_q + (params.xp_d + x_ext) * i_d
    psi1d = eqp - (params.xp_d - params.x_l) * i_d
    e_fd = eqp + (params.x_d - params.xp_d) * i_d
    edp = (params.x_q - params.xp_q) * i_q
    psi2q = -edp - (params.xp_q - params.x_l) * i_q
    psid = r_e * i_q + vq
    psiq = -(r_e * i_d + vd)
    p_m = psid * i_q - psiq * i_d
    state = MachineState(delta, 0.0, eqp, edp, psi1d, psi2q, psid, psiq, 0.0)
    ang = math.atan2(v_term.imag, v_term.real)
    mag = abs(v_term)
    v_abc = np.array([mag * math.cos(ang - k * _A) for k in range(3)])
    return state, MachineInputs(v_abc, e_fd, p_m)
