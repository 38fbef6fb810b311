"""Per-joint closed-loop responses, DC-motor voltage/current and move energy.

Each joint is a feedback-linearized double integrator closed by a controller with
time constant ``tau_in``; the closed loop from reference to position is
(3*tau*s + 1) / (tau*s + 1)**3. The reference either steps to the target or
approaches it as 1 - exp(-t/tau_delay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter

from .errors import NearDegenerateTimeConstants, StepTooCoarse
from .kinematics import CAMERA_DOWN, Orientation, RobotGeometry, ik_points

SETTLING_BAND = 0.02
DEGENERATE_REL = 1e-6


@dataclass(frozen=True)
class MotorGearParams:
    r_ohm: float = 0.03
    l_h: float = 1e-4
    kb_mv_per_rpm: float = 7.0
    km: float = 0.0674
    ja: float = 0.09847
    jg: float = 0.05
    gear_ratio: float = 200.0
    bm: float = 0.06

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"MotorGearParams.{name} must be > 0")

    @property
    def kb(self) -> float:
        """Back-emf constant in V*s/rad."""
        return self.kb_mv_per_rpm * 1e-3 * 60.0 / (2 * math.pi)

    @property
    def jm(self) -> float:
        return self.ja + self.jg

    @property
    def b(self) -> float:
        return self.bm + self.kb * self.km / self.r_ohm

    @property
    def max_step(self) -> float:
        """Largest integration step that resolves the electrical time constant."""
        return self.l_h / (10 * self.r_ohm)


@dataclass(frozen=True)
class ControlParams:
    tau_in: float = 0.009
    tau_delay: float = 0.0

    def __post_init__(self):
        if not self.tau_in > 0:
            raise ValueError("ControlParams.tau_in must be > 0")
        if not self.tau_delay >= 0:
            raise ValueError("ControlParams.tau_delay must be >= 0")


@dataclass(frozen=True)
class JointMove:
    q_initial: float
    q_final: float
    params: MotorGearParams = MotorGearParams()
    control: ControlParams = ControlParams()

    @property
    def delta(self) -> float:
        return self.q_final - self.q_initial


@dataclass(frozen=True)
class EnergyQuote:
    energy: float
    settling_time: float


def _delay_coefficients(tau: float, delay: float):
    if abs(tau - delay) < DEGENERATE_REL * tau:
        raise NearDegenerateTimeConstants(
            f"tau_delay={delay} too close to tau_in={tau}; perturb tau_delay"
        )
    g = tau - delay
    a_q = tau + tau * delay / g
    b_q = -tau - (3 * tau**2 * delay - tau * delay**2) / g**2
    c_q = -tau - (-3 * tau**2 * delay**2 + tau * delay**3) / g**3
    d_q = -(3 * tau * delay**3 - delay**4) / g**3
    return a_q, b_q, c_q, d_q


def normalized_response(t, control: ControlParams):
    """(q, qdot, v) for a unit move from 0 to 1.

    ``q`` excludes the initial offset; ``v`` is the virtual input, i.e. the
    acceleration of the double-integrator plant.
    """
    t = np.asarray(t, dtype=float)
    tau, delay = control.tau_in, control.tau_delay
    e = np.exp(-t / tau)
    if delay == 0:
        u = t / tau
        q = (u * u - u - 1) * e + 1
        qd = (3 * u - u * u) * e / tau
        v = (u * u - 5 * u + 3) * e / tau**2
        return q, qd, v

    a, b, c, dq = _delay_coefficients(tau, delay)
    ed = np.exp(-t / delay)
    q = (a / tau**3 * t * t + b / tau**2 * t + c / tau) * e + dq / delay * ed + 1
    qd = (-a / tau**4 * t * t + (2 * a - b) / tau**3 * t + (b - c) / tau**2) * e - dq / delay**2 * ed
    v = (
        (a / tau**5 * t * t + (b - 4 * a) / tau**4 * t + (2 * a - 2 * b + c) / tau**3) * e
        + dq / delay**3 * ed
    )
    return q, qd, v


def joint_response(move: JointMove, t):
    """Position, velocity and virtual input of one joint at time(s) ``t`` >= 0."""
    q, qd, v = normalized_response(t, move.control)
    return move.q_initial + move.delta * q, move.delta * qd, move.delta * v


def joint_voltage(move: JointMove, t):
    """Armature voltage of the decoupled joint model."""
    _, qd, v = joint_response(move, t)
    p = move.params
    return p.r_ohm / p.km * (p.jm * v + p.b * qd)


def check_grid(t, max_step: float) -> float:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("time grid needs at least two samples")
    steps = np.diff(t)
    h = float(steps.mean())
    if not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform")
    if h > max_step * (1 + 1e-12):
        raise StepTooCoarse(f"step {h:.3e} s exceeds L/(10R) = {max_step:.3e} s")
    return h


def rl_current(drive, t, r_ohm: float, l_h: float) -> np.ndarray:
    """Solve L dI/dt + R I = drive(t), I(t[0]) = 0, on a uniform grid.

    The drive is taken as piecewise linear between samples, which the
    exponential integrator then handles exactly.
    """
    drive = np.asarray(drive, dtype=float)
    h = float(t[1] - t[0])
    a = r_ohm / l_h
    e = math.exp(-a * h)
    one_minus = -math.expm1(-a * h)
    b_new = (1 / a - one_minus / (a * a * h)) / l_h
    b_old = (one_minus / (a * a * h) - e / a) / l_h
    # I[k] = e*I[k-1] + b_new*u[k] + b_old*u[k-1], with I[0] forced to zero
    out, _ = lfilter([b_new, b_old], [1.0, -e], drive, zi=[-b_new * drive[0]])
    return out


def joint_current(move: JointMove, t) -> np.ndarray:
    """Armature current on a uniform grid starting at rest."""
    t = np.asarray(t, dtype=float)
    p = move.params
    check_grid(t, p.max_step)
    _, qd, _ = joint_response(move, t)
    drive = joint_voltage(move, t) - p.kb / p.gear_ratio * qd
    return rl_current(drive, t, p.r_ohm, p.l_h)


def settling_time(control: ControlParams) -> float:
    """Time after which the response stays within 2% of the move; independent of magnitude."""
    scale = max(control.tau_in, control.tau_delay)
    t = np.linspace(0.0, 40 * scale, 40001)

    def err(x):
        return abs(normalized_response(x, control)[0] - 1.0) - SETTLING_BAND

    outside = np.nonzero(np.abs(normalized_response(t, control)[0] - 1.0) > SETTLING_BAND)[0]
    if len(outside) == 0:
        return 0.0
    k = outside[-1]
    if k + 1 >= len(t):
        raise RuntimeError("response has not settled inside the search window")
    return float(brentq(err, t[k], t[k + 1], xtol=1e-14))


def default_horizon(control: ControlParams) -> float:
    return settling_time(control) + 5 * max(control.tau_in, control.tau_delay)


def energy_grid(horizon: float, max_step: float) -> np.ndarray:
    n = math.ceil(horizon / max_step * (1 - 1e-12))
    return np.linspace(0.0, horizon, n + 1)


def joint_energy(move: JointMove, horizon: float | None = None, step: float | None = None) -> float:
    """Integral of V*I over [0, horizon] (trapezoid rule on the current grid)."""
    if move.delta == 0:
        return 0.0
    if horizon is None:
        horizon = default_horizon(move.control)
    t = energy_grid(horizon, move.params.max_step if step is None else step)
    power = joint_voltage(move, t) * joint_current(move, t)
    return float(np.trapezoid(power, t))


def unit_energy(params: MotorGearParams, control: ControlParams, step: float | None = None) -> float:
    """Energy of a unit (1 rad) move; the model is linear so energy scales with delta**2."""
    return joint_energy(JointMove(0.0, 1.0, params, control), step=step)


def move_energy(p_a, p_b, geom: RobotGeometry, params: MotorGearParams, control: ControlParams,
                orientation: Orientation = CAMERA_DOWN) -> EnergyQuote:
    """Sum of the six joint energies for a camera move between two points (direct per-joint route)."""
    from .errors import Unreachable

    q, ok = ik_points(np.array([p_a, p_b], dtype=float), geom, orientation)
    if not ok.all():
        raise Unreachable("move endpoint outside the arm's reach")
    total, t_s = 0.0, 0.0
    for qi, qf in zip(q[0], q[1]):
        move = JointMove(float(qi), float(qf), params, control)
        if move.delta != 0:
            total += joint_energy(move)
            t_s = max(t_s, settling_time(control))
    return EnergyQuote(energy=total, settling_time=t_s)


def energy_table(p_a, p_b, geom: RobotGeometry, params: MotorGearParams, control: ControlParams,
                 tau_delays, orientation: Orientation = CAMERA_DOWN) -> list[tuple[float, float, float]]:
    """Rows of (tau_delay, energy, settling time)."""
    rows = []
    for delay in tau_delays:
        c = ControlParams(tau_in=control.tau_in, tau_delay=float(delay))
        quote = move_energy(p_a, p_b, geom, params, c, orientation)
        rows.append((float(delay), quote.energy, quote.settling_time))
    return rows


class EnergyModel:
    """Move-energy lookup over a fixed node set.

    Joint vectors for all nodes are solved once; the energy of any move is then
    the unit-move energy times the squared joint displacement.
    """

    def __init__(self, positions, geom: RobotGeometry, params: MotorGearParams, control: ControlParams,
                 orientation: Orientation = CAMERA_DOWN):
        from .errors import Unreachable

        self.positions = np.asarray(positions, dtype=float)
        q, ok = ik_points(self.positions, geom, orientation)
        if not ok.all():
            raise Unreachable(f"{int((~ok).sum())} node(s) outside the arm's reach")
        self.q = q
        self.unit = unit_energy(params, control)
        self._rows: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.positions)

    def row(self, i: int) -> np.ndarray:
        """Energies from node position i (0-based) to every node."""
        if i not in self._rows:
            dq = self.q - self.q[i]
            self._rows[i] = self.unit * np.einsum("ij,ij->i", dq, dq)
        return self._rows[i]

    def cost(self, i: int, j: int) -> float:
        return float(self.row(i)[j])
