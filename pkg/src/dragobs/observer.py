"""Constant-gain nonlinear observer for in-plane velocity and gravity direction.

The observer state ``(u_hat, v_hat, eta_hat)`` lives in R^5: ``eta_hat`` is
not kept on the unit sphere. The sphere constraint enters only through the
correction ``-k3 * E(...)`` on the third component, which pulls the estimate
onto the upper cap ``eta3 >= epsilon``.

The right-hand side functions are written component-wise so they accept
Python floats (single run) or numpy arrays (batched Monte-Carlo runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dragobs.dynamics import DivergenceError
from dragobs.types import Gains, ImuSample, ObserverState, validate_gains

OBSERVER_FIELDS = ("u_hat", "v_hat", "eta1_hat", "eta2_hat", "eta3_hat")


class ObserverConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ObserverConfig:
    gains: Gains
    c_mode: str = "true"  # "true" uses c(t), "nominal" uses c_bar
    integration: str = "rk4"
    dt: float = 1e-3
    strict: bool = False

    def __post_init__(self):
        if self.c_mode not in ("true", "nominal"):
            raise ObserverConfigError(f"c_mode must be 'true' or 'nominal', got {self.c_mode!r}")
        if self.integration not in ("rk4", "euler"):
            raise ObserverConfigError(f"integration must be 'rk4' or 'euler', got {self.integration!r}")
        if not self.dt > 0:
            raise ObserverConfigError(f"dt must be > 0, got {self.dt}")
        if self.strict:
            report = validate_gains(self.gains)
            if not report.ok:
                raise ObserverConfigError("invalid gains: " + "; ".join(map(str, report.violations)))


@dataclass(frozen=True)
class ObserverDerivative:
    du_hat: float
    dv_hat: float
    deta_hat: np.ndarray


def saturate(x, epsilon: float):
    """``min(1, (1 - eps^2)/|x|) * x``: clip ``x`` to ``[-(1 - eps^2), 1 - eps^2]``."""
    lim = 1.0 - epsilon * epsilon
    if isinstance(x, (float, int)):
        return float(min(max(x, -lim), lim))
    return np.clip(x, -lim, lim)


def constraint_error(x1, x2, x3, epsilon: float):
    """Saturated distance of ``(x1, x2, x3)`` from the upper unit hemisphere.

    The saturation keeps the square-root argument at or above ``eps^2`` and
    the denominator at or above ``1 - eps^2``, so this is finite everywhere.
    """
    lim = 1.0 - epsilon * epsilon
    s = x1 * x1 + x2 * x2
    if isinstance(s, float):
        return (x3 - math.sqrt(1.0 - min(s, lim))) / (s + lim)
    return (x3 - np.sqrt(1.0 - np.minimum(s, lim))) / (s + lim)


def gains_tuple(g: Gains):
    return g.k1, g.k2, g.k3, g.ku, g.kv, g.epsilon, g.g


def rhs(x, ax, ay, p, q, r, c, gt):
    """Observer vector field on ``x = (u_hat, v_hat, n1, n2, n3)``."""
    uh, vh, n1, n2, n3 = x
    k1, k2, k3, ku, kv, eps, g = gt
    yu = uh + ax / c
    yv = vh + ay / c
    e = constraint_error(n1 - k1 / g * yu, n2 - k2 / g * yv, n3, eps)
    return (
        g * n1 - c * uh - (ku + k1) * yu,
        g * n2 - c * vh - (kv + k2) * yv,
        r * n2 - q * n3 - k1 * ku / g * yu - r * k2 / g * yv,
        p * n3 - r * n1 + r * k1 / g * yu - k2 * kv / g * yv,
        q * n1 - p * n2 - q * k1 / g * yu + p * k2 / g * yv - k3 * e,
    )


def design_rhs(u, v, e1, e2, e3, p, q, r, c, g):
    """Simplified design model (no Coriolis terms, no vertical channel)."""
    return (
        g * e1 - c * u,
        g * e2 - c * v,
        r * e2 - q * e3,
        p * e3 - r * e1,
        q * e1 - p * e2,
    )


def _check_c(c, gains: Gains):
    if not np.all(c >= gains.c_l):
        raise ValueError(f"drag coefficient {c} below the lower bound c_l={gains.c_l}")


def observer_derivative(o: ObserverState, imu: ImuSample, c: float, gains: Gains) -> ObserverDerivative:
    _check_c(c, gains)
    ax, ay = imu.a[0], imu.a[1]
    p, q, r = imu.omega
    d = rhs(tuple(map(float, o.as_array())), float(ax), float(ay), float(p), float(q), float(r), float(c), gains_tuple(gains))
    return ObserverDerivative(d[0], d[1], np.array(d[2:]))


def advance(x, ax, ay, p, q, r, c, dt, gt, method="rk4"):
    """Integrate the observer over ``dt`` with the measurement held constant."""
    if method == "euler":
        d = rhs(x, ax, ay, p, q, r, c, gt)
        return tuple(a + dt * b for a, b in zip(x, d))
    h = 0.5 * dt
    k1 = rhs(x, ax, ay, p, q, r, c, gt)
    k2 = rhs(tuple(a + h * b for a, b in zip(x, k1)), ax, ay, p, q, r, c, gt)
    k3 = rhs(tuple(a + h * b for a, b in zip(x, k2)), ax, ay, p, q, r, c, gt)
    k4 = rhs(tuple(a + dt * b for a, b in zip(x, k3)), ax, ay, p, q, r, c, gt)
    s = dt / 6.0
    return tuple(a + s * (b1 + 2.0 * (b2 + b3) + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4))


def check_finite(x, label="observer"):
    for name, val in zip(OBSERVER_FIELDS, x):
        if not np.all(np.isfinite(val)):
            raise DivergenceError(f"{label} state diverged in {name!r}")


def step(o: ObserverState, imu: ImuSample, cfg: ObserverConfig, c: float) -> ObserverState:
    """Advance one ``cfg.dt`` step with zero-order-held ``imu``."""
    _check_c(c, cfg.gains)
    x = advance(
        tuple(map(float, o.as_array())),
        float(imu.a[0]), float(imu.a[1]),
        *map(float, imu.omega),
        float(c), cfg.dt, gains_tuple(cfg.gains), cfg.integration,
    )
    check_finite(x)
    return ObserverState.from_array(x)


def extract_angles(eta_hat) -> tuple[float, float]:
    """Roll and pitch (rad) of an estimate, inverting ``eta = (-s_theta, s_phi c_theta, c_phi c_theta)``."""
    eta = np.asarray(eta_hat, dtype=float)
    n = float(np.linalg.norm(eta))
    if n == 0 or not eta[2] > 0:
        raise ValueError(f"eta_hat {eta} is outside the admissible cap (need eta3 > 0)")
    theta = -math.asin(min(1.0, max(-1.0, eta[0] / n)))
    phi = math.atan(eta[1] / eta[2])
    return phi, theta


def angles_from_eta(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`extract_angles`; NaN where ``eta3 <= 0``."""
    eta = np.asarray(eta, dtype=float)
    n = np.linalg.norm(eta, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = -np.arcsin(np.clip(eta[..., 0] / n, -1.0, 1.0))
        phi = np.arctan(eta[..., 1] / eta[..., 2])
    bad = ~(eta[..., 2] > 0)
    return np.where(bad, np.nan, phi), np.where(bad, np.nan, theta)


def observability_oracle(u, v, c, g: float, dt: float) -> np.ndarray:
    """Recover eta from velocity and drag streams by differentiation.

    Uses second-order central differences (second-order one-sided at the
    ends). Diagnostic only; the observer never calls this.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), u.shape)
    if u.size < 3:
        raise ValueError("need at least three samples to differentiate")
    e1 = (np.gradient(u, dt, edge_order=2) + c * u) / g
    e2 = (np.gradient(v, dt, edge_order=2) + c * v) / g
    rest = 1.0 - e1**2 - e2**2
    if np.any(rest < 0):
        k = int(np.argmax(rest < 0))
        raise ValueError(f"1 - eta1^2 - eta2^2 < 0 at sample {k}: trajectory leaves the cap or the data are too noisy")
    return np.stack([e1, e2, np.sqrt(rest)], axis=-1)
