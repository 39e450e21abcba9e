"""Convergence diagnostics: error coordinates, Lyapunov functions, linearization.

The decay bound implemented in :func:`w_decay_bound` is the right-hand side
of the strict Lyapunov inequality

    dW/dt <= -k10 z1^2 - k20 z2^2 - (k3/2) z3^2 - ku0 e_u^2 - kv0 e_v^2

for ``W = 3 (1 - eps^2) V + 2 V^2``. It holds along design-model trajectories
with ``eta3 >= eps`` and ``c_l <= c(t) <= c_u`` when the gains are valid.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from dragobs.types import GRAVITY, Gains, GainsReport, ObserverState, TruthState, validate_gains

# W >= V needs 3 (1 - eps^2) >= 1, i.e. eps <= sqrt(2/3); kept a little inside
EPSILON_MAX = 0.8


@dataclass(frozen=True)
class ErrorCoordinates:
    e_u: float
    e_v: float
    z1: float
    z2: float
    z3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_u, self.e_v, self.z1, self.z2, self.z3])


def error_variables(truth: TruthState, o: ObserverState, g: Gains) -> ErrorCoordinates:
    """Shifted error coordinates: ``z_i = eta_hat_i - eta_i - (k_i/g) * velocity error``."""
    e_u = o.u_hat - truth.u
    e_v = o.v_hat - truth.v
    d = o.eta_hat - truth.eta
    return ErrorCoordinates(
        e_u,
        e_v,
        float(d[0] - g.k1 / g.g * e_u),
        float(d[1] - g.k2 / g.g * e_v),
        float(d[2]),
    )


def error_arrays(u, v, eta, u_hat, v_hat, eta_hat, g: Gains) -> dict[str, np.ndarray]:
    """Array form of :func:`error_variables`; ``eta`` arrays have last axis 3."""
    e_u = np.asarray(u_hat) - np.asarray(u)
    e_v = np.asarray(v_hat) - np.asarray(v)
    d = np.asarray(eta_hat) - np.asarray(eta)
    return {
        "e_u": e_u,
        "e_v": e_v,
        "z1": d[..., 0] - g.k1 / g.g * e_u,
        "z2": d[..., 1] - g.k2 / g.g * e_v,
        "z3": d[..., 2],
    }


def lyapunov_V(e) -> float:
    """``(e_u^2 + e_v^2 + z1^2 + z2^2 + z3^2) / 2``; accepts coordinates or a mapping of arrays."""
    if isinstance(e, ErrorCoordinates):
        return 0.5 * float(np.sum(e.as_array() ** 2))
    return 0.5 * (e["e_u"] ** 2 + e["e_v"] ** 2 + e["z1"] ** 2 + e["z2"] ** 2 + e["z3"] ** 2)


def lyapunov_W(V, epsilon: float):
    if np.any(np.asarray(V) < 0):
        raise ValueError("V must be non-negative")
    return 3.0 * (1.0 - epsilon**2) * V + 2.0 * V * V


def _decay_constants(g: Gains) -> dict[str, float]:
    report = validate_gains(g)
    if not report.ok:
        raise ValueError("decay bound needs valid gains: " + "; ".join(map(str, report.violations)))
    if not g.epsilon < EPSILON_MAX:
        raise ValueError(f"decay bound needs epsilon < {EPSILON_MAX}, got {g.epsilon}")
    return g.margins()


def w_decay_bound(e, g: Gains):
    """Upper bound on ``dW/dt``; non-positive, zero only at zero error."""
    m = _decay_constants(g)
    if isinstance(e, ErrorCoordinates):
        e = {"e_u": e.e_u, "e_v": e.e_v, "z1": e.z1, "z2": e.z2, "z3": e.z3}
    return -(
        m["k10"] * e["z1"] ** 2
        + m["k20"] * e["z2"] ** 2
        + 0.5 * g.k3 * e["z3"] ** 2
        + m["ku0"] * e["e_u"] ** 2
        + m["kv0"] * e["e_v"] ** 2
    )


def linearized_subsystems(g: Gains, c_bar: float):
    """Error dynamics linearized at hover: ``(A1, A2, a3)``.

    ``A1`` acts on ``(z1, e_u)``, ``A2`` on ``(z2, e_v)``, ``a3`` on ``z3``.
    """
    A1 = np.array([[-g.k1, c_bar * g.k1 / g.g], [g.g, -(g.ku + c_bar)]])
    A2 = np.array([[-g.k2, c_bar * g.k2 / g.g], [g.g, -(g.kv + c_bar)]])
    a3 = -g.k3 / (1.0 - g.epsilon**2)
    return A1, A2, a3


@dataclass(frozen=True)
class SubsystemEigenvalues:
    values: tuple  # sorted by descending real part
    is_complex: bool

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


def subsystem_eigenvalues(A) -> SubsystemEigenvalues:
    """Roots of ``lambda^2 - tr(A) lambda + det(A)`` by the quadratic formula."""
    A = np.asarray(A, dtype=float)
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0:
        root = cmath.sqrt(disc)
        lam = ((tr + root) / 2.0, (tr - root) / 2.0)
        return SubsystemEigenvalues(tuple(sorted(lam, key=lambda z: (-z.real, -z.imag))), True)
    sq = math.sqrt(disc)
    # cancellation-free pair: the large-magnitude root first, the other from det
    big = 0.5 * (tr - sq) if tr <= 0 else 0.5 * (tr + sq)
    small = det / big if big != 0 else 0.5 * (tr + sq)
    return SubsystemEigenvalues(tuple(sorted((small, big), reverse=True)), False)


def slowest_rate(g: Gains, c_bar: float) -> float:
    """Smallest decay rate (1/s) among the linearized subsystems."""
    A1, A2, a3 = linearized_subsystems(g, c_bar)
    rates = [abs(a3)]
    for A in (A1, A2):
        rates.extend(-complex(lam).real for lam in subsystem_eigenvalues(A))
    return min(rates)


def gains_for_poles(
    desired,
    c_bar: float,
    epsilon: float = 0.1,
    c_l: float = 0.2,
    c_u: float = 0.3,
    g: float = GRAVITY,
) -> tuple[Gains, GainsReport]:
    """Gains whose linearized poles approximate ``desired = (fast, slow, eta)``.

    Uses the approximate factorization ``(lambda + k1)(lambda + ku)``, valid
    when ``c_bar`` is small. ``c_bar`` shifts the pole sum by ``-c_bar`` with
    the product unchanged, so the slow pole lands up to ``c_bar k1/(ku-k1)``
    to the right of the request and the fast one up to ``c_bar ku/(ku-k1)``
    to the left. The same pair is used for both horizontal channels.
    """
    fast, slow, eta = desired
    if not (fast < 0 and slow < 0 and eta < 0):
        raise ValueError(f"desired poles must be real and negative, got {desired}")
    gains = Gains(
        k1=-slow,
        k2=-slow,
        k3=-eta * (1.0 - epsilon**2),
        ku=-fast,
        kv=-fast,
        epsilon=epsilon,
        c_l=c_l,
        c_u=c_u,
        g=g,
    )
    return gains, validate_gains(gains)


def fit_decay_rate(t, err) -> float:
    """Least-squares slope of ``-log|err|`` against ``t``."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.abs(np.asarray(err, dtype=float)))
    slope = np.polyfit(t - t[0], y, 1)[0]
    return -float(slope)


def decade_window(err) -> int:
    """Number of leading samples until ``|err|`` first drops 10x below its start."""
    a = np.abs(np.asarray(err, dtype=float))
    below = np.nonzero(a <= a[0] / 10.0)[0]
    return int(below[0]) + 1 if below.size else a.size
