"""Continuous-discrete EKF on the simplified design model, used as a baseline.

State ``(u, v, eta1, eta2, eta3)``, propagated with the gyro as input and
updated with the horizontal accelerometer axes through ``h(x) = (-c u, -c v)``.
After each update ``eta`` is projected back to the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dragobs.dynamics import DivergenceError
from dragobs.observer import design_rhs
from dragobs.sensors import SensorConfig, filtered_noise_variance
from dragobs.types import GRAVITY

# Process noise spectral densities picked by the grid search in
# dragobs.runner.tune_process_noise on the paper-v scenario.
DEFAULT_Q_VELOCITY = 1e-2
DEFAULT_Q_ETA = 1e-4
# Floor on the accelerometer variance so ideal-sensor runs stay well posed
R_FLOOR = 1e-6


class EkfError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EkfState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(5)
        cov = np.array(self.covariance, dtype=float).reshape(5, 5)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DivergenceError("EKF state has non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class EkfNoise:
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray

    @classmethod
    def default(cls, sensors: SensorConfig, q_velocity=DEFAULT_Q_VELOCITY, q_eta=DEFAULT_Q_ETA) -> "EkfNoise":
        r = max(filtered_noise_variance(sensors), R_FLOOR)
        return cls(
            Q=np.diag([q_velocity, q_velocity, q_eta, q_eta, q_eta]),
            R=np.eye(2) * r,
            P0=np.diag([1.0, 1.0, 0.1, 0.1, 0.1]),
        )


def jacobian(mean, gyro, c: float, g: float = GRAVITY) -> np.ndarray:
    p, q, r = gyro
    return np.array(
        [
            [-c, 0.0, g, 0.0, 0.0],
            [0.0, -c, 0.0, g, 0.0],
            [0.0, 0.0, 0.0, r, -q],
            [0.0, 0.0, -r, 0.0, p],
            [0.0, 0.0, q, -p, 0.0],
        ]
    )


def _rk4_mean(x, p, q, r, c, g, dt):
    h = 0.5 * dt
    k1 = design_rhs(*x, p, q, r, c, g)
    k2 = design_rhs(*(a + h * b for a, b in zip(x, k1)), p, q, r, c, g)
    k3 = design_rhs(*(a + h * b for a, b in zip(x, k2)), p, q, r, c, g)
    k4 = design_rhs(*(a + dt * b for a, b in zip(x, k3)), p, q, r, c, g)
    s = dt / 6.0
    return np.array([a + s * (b1 + 2.0 * (b2 + b3) + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)])


def predict_arrays(mean, P, p, q, r, c, dt, Qdt, g=GRAVITY):
    """Unchecked kernel behind :func:`ekf_predict`; ``Qdt`` is ``Q * dt``."""
    new_mean = _rk4_mean(mean.tolist(), p, q, r, c, g, dt)
    phi = np.eye(5) + jacobian(mean, (p, q, r), c, g) * dt
    P = phi @ P @ phi.T + Qdt
    return new_mean, 0.5 * (P + P.T)


def update_arrays(mean, P, ax, ay, c, R):
    """Unchecked kernel behind :func:`ekf_update`.

    ``H = -c [I2 0]`` so the gain only needs the leading 2x2 block of ``P``.
    """
    S = c * c * P[:2, :2] + R
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if not det > 0:
        raise EkfError(f"innovation covariance is not positive definite: {S}")
    S_inv = np.array([[S[1, 1], -S[0, 1]], [-S[1, 0], S[0, 0]]]) / det
    K = -c * P[:, :2] @ S_inv
    innovation = np.array([ax + c * mean[0], ay + c * mean[1]])
    mean = mean + K @ innovation
    I_KH = np.eye(5)
    I_KH[:, :2] += c * K
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    n = math.sqrt(mean[2] ** 2 + mean[3] ** 2 + mean[4] ** 2)
    if n > 0:
        mean[2:] /= n
    return mean, P


def ekf_predict(s: EkfState, gyro, c: float, dt: float, Q, g: float = GRAVITY) -> EkfState:
    """RK4 mean propagation; first-order covariance transition plus ``Q dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    p, q, r = (float(x) for x in gyro)
    mean, P = predict_arrays(s.mean, s.covariance, p, q, r, float(c), dt, np.asarray(Q, dtype=float) * dt, g)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(P))):
        raise DivergenceError("EKF prediction produced non-finite values")
    return EkfState(mean, P)


def ekf_update(s: EkfState, accel_xy, c: float, R) -> EkfState:
    """Kalman update on ``(a_x, a_y)`` with the Joseph-form covariance."""
    ax, ay = (float(a) for a in accel_xy)
    mean, P = update_arrays(s.mean.copy(), s.covariance, ax, ay, float(c), np.asarray(R, dtype=float))
    return EkfState(mean, P)
