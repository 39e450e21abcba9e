"""Inertial state estimation for quadrotors using the rotor-drag accelerometer model.

The package bundles a truth simulator of the drag-enhanced rigid-body model,
an IMU corruption pipeline, the constant-gain nonlinear observer for the
in-plane velocity and the gravity direction, a generic EKF baseline, and
Lyapunov / eigenvalue diagnostics used to check the convergence theory on
simulated trajectories.
"""

from dragobs.types import (
    GRAVITY,
    DragParams,
    Gains,
    GainsReport,
    ImuSample,
    ObserverState,
    RateThrustInput,
    TruthState,
    eta_from_angles,
    validate_gains,
)

__version__ = "0.1.0"

__all__ = [
    "GRAVITY",
    "DragParams",
    "Gains",
    "GainsReport",
    "ImuSample",
    "ObserverState",
    "RateThrustInput",
    "TruthState",
    "eta_from_angles",
    "validate_gains",
]
