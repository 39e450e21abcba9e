"""Truth model: rigid-body translation with rotor drag and gravity-direction kinematics.

State layout used by the array helpers: ``(u, v, w, eta1, eta2, eta3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dragobs.profiles import InputProfile
from dragobs.types import GRAVITY, DragParams, RateThrustInput, TruthState

STATE_FIELDS = ("u", "v", "w", "eta1", "eta2", "eta3")


class DivergenceError(FloatingPointError):
    """A simulated quantity left the finite range."""


@dataclass(frozen=True)
class TruthDerivative:
    du: float
    dv: float
    dw: float
    deta: np.ndarray


@dataclass(frozen=True)
class TruthParams:
    drag: DragParams
    g: float = GRAVITY
    # False drops the velocity cross-product terms (design model)
    coriolis: bool = True

    @property
    def mass(self) -> float:
        return self.drag.mass


def drag_coefficient(params: DragParams, motor_speeds) -> float:
    """Rotor-drag coefficient ``lam / m * sum(omega_i)`` in 1/s."""
    speeds = np.asarray(motor_speeds, dtype=float)
    if np.any(speeds < 0):
        raise ValueError(f"motor speeds must be non-negative, got {speeds}")
    return params.lam / params.mass * float(np.sum(speeds))


def coriolis_terms(u, v, w, p, q, r):
    return v * r - w * q, w * p - u * r, u * q - v * p


def coriolis_norm(s: TruthState, omega_body) -> float:
    p, q, r = (float(x) for x in omega_body)
    return math.hypot(*coriolis_terms(s.u, s.v, s.w, p, q, r))


def hold_thrust(u, v, e3, p, q, g, m, coriolis=True):
    """Thrust that zeroes the body-z acceleration, clipped at zero."""
    cw = u * q - v * p if coriolis else 0.0
    return max(m * (g * e3 + cw), 0.0)


def _rhs(x, p, q, r, thrust, c, g, m, coriolis):
    u, v, w, e1, e2, e3 = x
    if thrust is None:
        thrust = hold_thrust(u, v, e3, p, q, g, m, coriolis)
    if coriolis:
        cu, cv, cw = v * r - w * q, w * p - u * r, u * q - v * p
    else:
        cu = cv = cw = 0.0
    return (
        cu + g * e1 - c * u,
        cv + g * e2 - c * v,
        cw + g * e3 - thrust / m,
        r * e2 - q * e3,
        p * e3 - r * e1,
        q * e1 - p * e2,
    )


def truth_derivative(
    s: TruthState,
    inputs: RateThrustInput,
    c: float,
    g: float = GRAVITY,
    m: float = 1.0,
    coriolis: bool = True,
) -> TruthDerivative:
    if abs(float(np.linalg.norm(s.eta)) - 1.0) > 1e-6:
        raise ValueError(f"eta off the unit sphere: |eta| = {np.linalg.norm(s.eta)}")
    if not (math.isfinite(c) and math.isfinite(g) and math.isfinite(m)):
        raise ValueError("non-finite drag coefficient, gravity or mass")
    if c < 0:
        raise ValueError(f"drag coefficient must be >= 0, got {c}")
    p, q, r = inputs.omega_body
    d = _rhs(tuple(s.as_array()), p, q, r, inputs.thrust, c, g, m, coriolis)
    return TruthDerivative(d[0], d[1], d[2], np.array(d[3:]))


def _stage_values(profile: InputProfile, drag: DragParams, t: float):
    p, q, r = profile.rates(t)
    thrust = None if profile.thrust is None else profile.thrust(t)
    c = drag_coefficient(drag, profile.speeds(t))
    return p, q, r, thrust, c


def rk4_truth(x, stages, dt, g, m, coriolis):
    """One RK4 step over tuple state ``x``; returns the renormalized tuple.

    ``stages`` holds the ``(p, q, r, thrust, c)`` inputs at the start,
    midpoint and end of the step (thrust ``None`` means vertical hold).
    """
    (p0, q0, r0, t0, c0), (p1, q1, r1, t1, c1), (p2, q2, r2, t2, c2) = stages
    h = 0.5 * dt
    x0, x1, x2, x3, x4, x5 = x
    a0, a1, a2, a3, a4, a5 = _rhs(x, p0, q0, r0, t0, c0, g, m, coriolis)
    b0, b1, b2, b3, b4, b5 = _rhs(
        (x0 + h * a0, x1 + h * a1, x2 + h * a2, x3 + h * a3, x4 + h * a4, x5 + h * a5),
        p1, q1, r1, t1, c1, g, m, coriolis,
    )
    d0, d1, d2, d3, d4, d5 = _rhs(
        (x0 + h * b0, x1 + h * b1, x2 + h * b2, x3 + h * b3, x4 + h * b4, x5 + h * b5),
        p1, q1, r1, t1, c1, g, m, coriolis,
    )
    f0, f1, f2, f3, f4, f5 = _rhs(
        (x0 + dt * d0, x1 + dt * d1, x2 + dt * d2, x3 + dt * d3, x4 + dt * d4, x5 + dt * d5),
        p2, q2, r2, t2, c2, g, m, coriolis,
    )
    s = dt / 6.0
    u = x0 + s * (a0 + 2.0 * (b0 + d0) + f0)
    v = x1 + s * (a1 + 2.0 * (b1 + d1) + f1)
    w = x2 + s * (a2 + 2.0 * (b2 + d2) + f2)
    e1 = x3 + s * (a3 + 2.0 * (b3 + d3) + f3)
    e2 = x4 + s * (a4 + 2.0 * (b4 + d4) + f4)
    e3 = x5 + s * (a5 + 2.0 * (b5 + d5) + f5)
    n = math.sqrt(e1 * e1 + e2 * e2 + e3 * e3)
    out = (u, v, w, e1 / n, e2 / n, e3 / n)
    if not math.isfinite(u + v + w + n):
        bad = next(name for name, val in zip(STATE_FIELDS, out) if not math.isfinite(val))
        raise DivergenceError(f"truth state diverged in {bad!r}")
    return out


def step_rk4(s: TruthState, profile: InputProfile, t: float, dt: float, params: TruthParams) -> TruthState:
    """Advance the truth by ``dt`` with classical RK4, then project eta onto the sphere."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    stages = (
        _stage_values(profile, params.drag, t),
        _stage_values(profile, params.drag, t + 0.5 * dt),
        _stage_values(profile, params.drag, t + dt),
    )
    x = rk4_truth(tuple(s.as_array()), stages, dt, params.g, params.mass, params.coriolis)
    return TruthState(x[0], x[1], x[2], np.array(x[3:]))


@dataclass
class InputTable:
    """Time-only inputs tabulated on the half-step grid ``k * dt / 2``."""

    dt: float
    p: list
    q: list
    r: list
    thrust: list
    c: list
    speeds: np.ndarray

    @classmethod
    def build(cls, profile: InputProfile, drag: DragParams, dt: float, n_steps: int) -> "InputTable":
        times = np.arange(2 * n_steps + 1) * (0.5 * dt)
        tab = profile.tabulate(times)
        if np.any(tab["speeds"] < 0):
            raise ValueError("motor speed profile goes negative")
        c = drag.lam / drag.mass * tab["speeds"].sum(axis=0)
        thrust = [None if math.isnan(x) else x for x in tab["thrust"].tolist()]
        return cls(dt, tab["p"].tolist(), tab["q"].tolist(), tab["r"].tolist(), thrust, c.tolist(), tab["speeds"])

    def stages(self, k: int):
        i = 2 * k
        return (
            (self.p[i], self.q[i], self.r[i], self.thrust[i], self.c[i]),
            (self.p[i + 1], self.q[i + 1], self.r[i + 1], self.thrust[i + 1], self.c[i + 1]),
            (self.p[i + 2], self.q[i + 2], self.r[i + 2], self.thrust[i + 2], self.c[i + 2]),
        )

    def at_step(self, k: int):
        """``(p, q, r, thrust_or_None, c)`` at time ``k * dt``."""
        i = 2 * k
        return self.p[i], self.q[i], self.r[i], self.thrust[i], self.c[i]


@dataclass
class TruthTrajectory:
    t: np.ndarray
    x: np.ndarray  # (n + 1, 6)
    inputs: InputTable

    def state(self, k: int) -> TruthState:
        return TruthState.from_array(self.x[k])


def simulate_truth(s0: TruthState, profile: InputProfile, params: TruthParams, dt: float, n_steps: int) -> TruthTrajectory:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    table = InputTable.build(profile, params.drag, dt, n_steps)
    x = tuple(s0.as_array())
    g, m, cor = params.g, params.mass, params.coriolis
    rows = [x]
    for k in range(n_steps):
        x = rk4_truth(x, table.stages(k), dt, g, m, cor)
        rows.append(x)
    out = np.array(rows)
    return TruthTrajectory(np.arange(n_steps + 1) * dt, out, table)
