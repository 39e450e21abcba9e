"""CSV log schemas and writers.

Values are written with ``%.17g`` so that identical runs give identical bytes
and every float round-trips exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

IMU_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz")
ESTIMATE_COLUMNS = ("t", "u_hat", "v_hat", "eta1_hat", "eta2_hat", "eta3_hat", "phi_hat_deg", "theta_hat_deg")
EKF_COLUMNS = ESTIMATE_COLUMNS + ("cov_trace",)
DIAGNOSTIC_COLUMNS = ("t", "V", "W", "Wdot_fd", "decay_bound", "e_u", "e_v", "z1", "z2", "z3", "eta_err_norm")
TRUTH_COLUMNS = (
    "t", "u", "v", "w", "eta1", "eta2", "eta3", "phi_deg", "theta_deg",
    "p", "q", "r", "thrust", "c", "coriolis_norm", "omega1", "omega2", "omega3", "omega4",
)


def write_csv(path, columns, data) -> Path:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValueError(f"expected {len(columns)} columns, got array of shape {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(columns), comments="")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}
