"""Open-loop time profiles for body rates, thrust and motor speeds.

A channel is a :class:`Signal`, the sum of primitive terms (constant,
sinusoid, piecewise-linear). Every primitive accepts scalar or array time so
whole runs can be tabulated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)

    def derivative(self, t):
        return np.zeros(np.shape(t)) if np.ndim(t) else 0.0

    def to_json(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(2 pi frequency t + phase)``; frequency in Hz."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        w = 2.0 * math.pi * self.frequency
        if np.ndim(t):
            return self.offset + self.amplitude * np.sin(w * np.asarray(t, dtype=float) + self.phase)
        return self.offset + self.amplitude * math.sin(w * t + self.phase)

    def derivative(self, t):
        w = 2.0 * math.pi * self.frequency
        if np.ndim(t):
            return self.amplitude * w * np.cos(w * np.asarray(t, dtype=float) + self.phase)
        return self.amplitude * w * math.cos(w * t + self.phase)

    def to_json(self):
        return {
            "type": "sinusoid",
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through ``(times, values)``, held constant outside."""

    times: tuple
    values: tuple

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("piecewise-linear needs matching, non-empty times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("piecewise-linear times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))

    def __call__(self, t):
        out = np.interp(t, self.times, self.values)
        return out if np.ndim(t) else float(out)

    def derivative(self, t):
        # right-continuous slope, zero outside the breakpoints
        times = np.asarray(self.times)
        slopes = np.append(np.diff(self.values) / np.diff(times), 0.0)
        idx = np.searchsorted(times, t, side="right") - 1
        out = np.where(idx >= 0, slopes[np.clip(idx, 0, None)], 0.0)
        return out if np.ndim(t) else float(out)

    def to_json(self):
        return {"type": "piecewise-linear", "times": list(self.times), "values": list(self.values)}


def _scale(term, k):
    if isinstance(term, Constant):
        return Constant(term.value * k)
    if isinstance(term, Sinusoid):
        return Sinusoid(term.amplitude * k, term.frequency, term.phase, term.offset * k)
    return PiecewiseLinear(term.times, tuple(v * k for v in term.values))


_PRIMITIVES = {"constant": Constant, "sinusoid": Sinusoid, "piecewise-linear": PiecewiseLinear}


@dataclass(frozen=True)
class Signal:
    terms: tuple = ()

    def __call__(self, t):
        if not self.terms:
            return np.zeros(np.shape(t)) if np.ndim(t) else 0.0
        total = self.terms[0](t)
        for term in self.terms[1:]:
            total = total + term(t)
        return total

    def derivative(self, t):
        if not self.terms:
            return np.zeros(np.shape(t)) if np.ndim(t) else 0.0
        total = self.terms[0].derivative(t)
        for term in self.terms[1:]:
            total = total + term.derivative(t)
        return total

    def scaled(self, factor: float) -> "Signal":
        return Signal(tuple(_scale(term, factor) for term in self.terms))

    @classmethod
    def constant(cls, value: float) -> "Signal":
        return cls((Constant(float(value)),))

    @classmethod
    def parse(cls, spec) -> "Signal":
        """Build from JSON: a number, one primitive dict, or a list of them."""
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        if isinstance(spec, dict):
            spec = [spec]
        terms = []
        for item in spec:
            item = dict(item)
            kind = item.pop("type", None)
            if kind not in _PRIMITIVES:
                raise ValueError(f"unknown signal primitive {kind!r}; expected one of {sorted(_PRIMITIVES)}")
            terms.append(_PRIMITIVES[kind](**item))
        return cls(tuple(terms))

    def to_json(self):
        return [term.to_json() for term in self.terms]


@dataclass(frozen=True)
class InputProfile:
    """Scripted rates, thrust and motor speeds.

    Body rates come either directly from ``p``, ``q``, ``r`` or, when
    ``phi`` and ``theta`` are given (radians), from inverting the roll/pitch
    kinematics along the scripted attitude with yaw rate ``r``. The second
    form keeps the attitude bounded over long runs, which open-loop rate
    sinusoids do not.

    ``thrust=None`` selects vertical hold: the thrust is computed from the
    state at each evaluation so that the body-z velocity derivative is zero.
    This keeps ``w`` bounded without a flight controller.
    """

    p: Signal = field(default_factory=Signal)
    q: Signal = field(default_factory=Signal)
    r: Signal = field(default_factory=Signal)
    thrust: Signal | None = None
    motor_speeds: tuple = ()
    phi: Signal | None = None
    theta: Signal | None = None

    def __post_init__(self):
        if len(self.motor_speeds) != 4:
            raise ValueError("motor_speeds needs exactly four signals")
        if (self.phi is None) != (self.theta is None):
            raise ValueError("attitude scripting needs both phi and theta")

    @property
    def scripted_attitude(self) -> bool:
        return self.phi is not None

    def attitude(self, t):
        """Scripted ``(phi, theta)`` in radians; only for attitude-scripted profiles."""
        return self.phi(t), self.theta(t)

    def rates(self, t):
        r = self.r(t)
        if self.phi is None:
            return self.p(t), self.q(t), r
        phi, theta = self.phi(t), self.theta(t)
        sphi, cphi = np.sin(phi), np.cos(phi)
        q = (self.theta.derivative(t) + r * sphi) / cphi
        p = self.phi.derivative(t) - (q * sphi + r * cphi) * np.tan(theta)
        if np.ndim(t):
            return p, q, r
        return float(p), float(q), float(r)

    def speeds(self, t):
        return np.array([s(t) for s in self.motor_speeds])

    def tabulate(self, times: np.ndarray) -> dict[str, np.ndarray]:
        """Evaluate all time-only channels on ``times``; thrust is NaN under vertical hold."""
        times = np.asarray(times, dtype=float)
        speeds = np.stack([np.broadcast_to(s(times), times.shape) for s in self.motor_speeds])
        thrust = np.full(times.shape, np.nan) if self.thrust is None else np.broadcast_to(self.thrust(times), times.shape)
        p, q, r = self.rates(times)
        return {
            "p": np.broadcast_to(p, times.shape).astype(float),
            "q": np.broadcast_to(q, times.shape).astype(float),
            "r": np.broadcast_to(r, times.shape).astype(float),
            "thrust": np.asarray(thrust, dtype=float),
            "speeds": speeds.astype(float),
        }

    @classmethod
    def parse(cls, spec: dict, omega_bar: float) -> "InputProfile":
        thrust = spec.get("thrust", "hold")
        speeds = spec.get("motor_speeds", omega_bar)
        if not isinstance(speeds, list) or len(speeds) != 4:
            speeds = [speeds] * 4
        deg = math.pi / 180.0
        phi = spec.get("phi_deg")
        theta = spec.get("theta_deg")
        return cls(
            p=Signal.parse(spec.get("p", 0.0)),
            q=Signal.parse(spec.get("q", 0.0)),
            r=Signal.parse(spec.get("r", 0.0)),
            thrust=None if thrust == "hold" else Signal.parse(thrust),
            motor_speeds=tuple(Signal.parse(s) for s in speeds),
            phi=None if phi is None else Signal.parse(phi).scaled(deg),
            theta=None if theta is None else Signal.parse(theta).scaled(deg),
        )

    def to_json(self) -> dict:
        out = {
            "r": self.r.to_json(),
            "thrust": "hold" if self.thrust is None else self.thrust.to_json(),
            "motor_speeds": [s.to_json() for s in self.motor_speeds],
        }
        if self.phi is None:
            out["p"] = self.p.to_json()
            out["q"] = self.q.to_json()
        else:
            rad = 180.0 / math.pi
            out["phi_deg"] = self.phi.scaled(rad).to_json()
            out["theta_deg"] = self.theta.scaled(rad).to_json()
        return out

    @classmethod
    def hover(cls, omega_bar: float) -> "InputProfile":
        return cls(motor_speeds=tuple(Signal.constant(omega_bar) for _ in range(4)))
