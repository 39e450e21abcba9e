"""Shared value types, units and gain validation.

All quantities are SI. Angles are radians everywhere inside the library;
degrees only appear in CSV columns and CLI arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81


def _vec(x, n: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries: {arr}")
    arr.setflags(write=False)
    return arr


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} is not finite: {value}")
    return value


def eta_from_angles(phi: float, theta: float) -> np.ndarray:
    """Gravity direction in body axes for roll ``phi`` and pitch ``theta``."""
    return np.array(
        [
            -math.sin(theta),
            math.sin(phi) * math.cos(theta),
            math.cos(phi) * math.cos(theta),
        ]
    )


@dataclass(frozen=True)
class TruthState:
    """Simulated body velocity (m/s) and unit gravity direction ``eta``."""

    u: float
    v: float
    w: float
    eta: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "w"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        eta = _vec(self.eta, 3, "eta")
        if abs(np.linalg.norm(eta) - 1.0) > 1e-6:
            raise ValueError(f"eta must be a unit vector, |eta| = {np.linalg.norm(eta)!r}")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_angles(cls, u=0.0, v=0.0, w=0.0, phi=0.0, theta=0.0) -> "TruthState":
        return cls(u, v, w, eta_from_angles(phi, theta))

    @classmethod
    def from_array(cls, x) -> "TruthState":
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2], x[3:6] / np.linalg.norm(x[3:6]))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w, *self.eta])


@dataclass(frozen=True)
class ObserverState:
    """Observer estimate. ``eta_hat`` is NOT constrained to the unit sphere."""

    u_hat: float
    v_hat: float
    eta_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_hat", _finite("u_hat", self.u_hat))
        object.__setattr__(self, "v_hat", _finite("v_hat", self.v_hat))
        object.__setattr__(self, "eta_hat", _vec(self.eta_hat, 3, "eta_hat"))

    @classmethod
    def from_array(cls, x) -> "ObserverState":
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2:5])

    @classmethod
    def from_truth(cls, s: TruthState) -> "ObserverState":
        return cls(s.u, s.v, s.eta)

    def as_array(self) -> np.ndarray:
        return np.array([self.u_hat, self.v_hat, *self.eta_hat])


@dataclass(frozen=True)
class ImuSample:
    """Specific acceleration ``a`` (m/s^2) and body rate ``omega`` (rad/s) at time ``t``."""

    t: float
    a: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _finite("t", self.t))
        object.__setattr__(self, "a", _vec(self.a, 3, "a"))
        object.__setattr__(self, "omega", _vec(self.omega, 3, "omega"))


@dataclass(frozen=True)
class RateThrustInput:
    omega_body: np.ndarray
    thrust: float
    motor_speeds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega_body", _vec(self.omega_body, 3, "omega_body"))
        thrust = _finite("thrust", self.thrust)
        if thrust < 0:
            raise ValueError(f"thrust must be >= 0, got {thrust}")
        object.__setattr__(self, "thrust", thrust)
        speeds = _vec(self.motor_speeds, 4, "motor_speeds")
        if np.any(speeds < 0):
            raise ValueError(f"motor speeds must be >= 0, got {speeds}")
        object.__setattr__(self, "motor_speeds", speeds)


@dataclass(frozen=True)
class DragParams:
    """Rotor-drag constant ``lam``, vehicle ``mass`` and hover motor speed ``omega_bar``."""

    lam: float
    mass: float
    omega_bar: float

    def __post_init__(self):
        for name in ("lam", "mass", "omega_bar"):
            value = _finite(name, getattr(self, name))
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def c_bar(self) -> float:
        """Drag coefficient at hover, all four motors at ``omega_bar``."""
        return 4.0 * self.lam * self.omega_bar / self.mass

    @classmethod
    def for_nominal(cls, c_bar: float, mass: float = 1.0, omega_bar: float = 400.0) -> "DragParams":
        return cls(lam=c_bar * mass / (4.0 * omega_bar), mass=mass, omega_bar=omega_bar)


@dataclass(frozen=True)
class Gains:
    """Observer tuning constants (1/s), sphere margin ``epsilon`` and drag bounds."""

    k1: float
    k2: float
    k3: float
    ku: float
    kv: float
    epsilon: float = 0.1
    c_l: float = 0.2
    c_u: float = 0.3
    g: float = GRAVITY

    def k_eta_min(self) -> float:
        if self.epsilon == 0:
            return math.inf
        return 1.0 + self.k3 / (2.0 * self.epsilon**2)

    def ku_min(self) -> float:
        return self.k1**2 * self.c_u**2 / (2.0 * self.g**2) + self.g**2 / 2.0

    def kv_min(self) -> float:
        return self.k2**2 * self.c_u**2 / (2.0 * self.g**2) + self.g**2 / 2.0

    def margins(self) -> dict[str, float]:
        """Slack constants k10, k20, ku0, kv0 of the Lyapunov decay bound."""
        return {
            "k10": self.k1 - self.k_eta_min(),
            "k20": self.k2 - self.k_eta_min(),
            "ku0": self.ku - self.ku_min(),
            "kv0": self.kv - self.kv_min(),
        }

    def replace(self, **changes) -> "Gains":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Violation:
    condition: str
    value: float
    threshold: float

    @property
    def slack(self) -> float:
        """``value - threshold``; non-positive for a violated strict inequality."""
        return self.value - self.threshold

    def __str__(self) -> str:
        return f"{self.condition}: {self.value:.6g} vs {self.threshold:.6g} (slack {self.slack:.6g})"


@dataclass(frozen=True)
class GainsReport:
    ok: bool
    thresholds: dict[str, float]
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def validate_gains(gains: Gains) -> GainsReport:
    """Check the convergence conditions on the observer gains.

    Never raises: every failed condition is returned as a :class:`Violation`
    carrying the numeric slack, so deliberately invalid configurations can
    still be simulated.
    """
    k_eta = gains.k_eta_min()
    thresholds = {
        "k3": 0.0,
        "k1": k_eta,
        "k2": k_eta,
        "ku": gains.ku_min(),
        "kv": gains.kv_min(),
    }
    checks = [
        ("k3 > 0", gains.k3, 0.0),
        ("k1 > 1 + k3/(2 eps^2)", gains.k1, k_eta),
        ("k2 > 1 + k3/(2 eps^2)", gains.k2, k_eta),
        ("ku > k1^2 c_u^2/(2 g^2) + g^2/2", gains.ku, thresholds["ku"]),
        ("kv > k2^2 c_u^2/(2 g^2) + g^2/2", gains.kv, thresholds["kv"]),
        ("epsilon > 0", gains.epsilon, 0.0),
        ("epsilon < 1", 1.0, gains.epsilon),
        ("c_l > 0", gains.c_l, 0.0),
    ]
    violations = [Violation(name, value, bound) for name, value, bound in checks if not value > bound]
    # non-strict
    if not gains.c_l <= gains.c_u:
        violations.append(Violation("c_l <= c_u", gains.c_u, gains.c_l))
    return GainsReport(ok=not violations, thresholds=thresholds, violations=violations)
