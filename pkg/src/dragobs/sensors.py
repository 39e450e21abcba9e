"""IMU measurement generation: ideal rotor-drag accelerometer/gyro and corruption.

Noise model: each of the six channels gets i.i.d. Gaussian samples of
variance ``noise_power / noise_sample_time`` at rate ``1/noise_sample_time``,
passed through a first-order low-pass at ``lowpass_cutoff`` Hz discretized by
exact pole mapping ``a = exp(-2 pi fc Ts)``. The IMU reports the filter
output at the end of each simulation step. Random numbers come from numpy's
PCG64 bit generator seeded with ``SensorConfig.seed``.

Constant biases apply to the five channels the observer uses (a_x, a_y, p,
q, r); noise is added to all six.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from dragobs.types import ImuSample, TruthState


@dataclass(frozen=True)
class SensorConfig:
    accel_bias: tuple = (0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    noise_power: float = 0.0
    noise_sample_time: float = 1e-4
    lowpass_cutoff: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "accel_bias", tuple(float(x) for x in self.accel_bias))
        object.__setattr__(self, "gyro_bias", tuple(float(x) for x in self.gyro_bias))
        if len(self.accel_bias) != 2 or len(self.gyro_bias) != 3:
            raise ValueError("accel_bias needs 2 entries and gyro_bias 3")
        if self.noise_power < 0:
            raise ValueError(f"noise_power must be >= 0, got {self.noise_power}")
        if not self.noise_sample_time > 0:
            raise ValueError(f"noise_sample_time must be > 0, got {self.noise_sample_time}")
        if not self.lowpass_cutoff > 0:
            raise ValueError(f"lowpass_cutoff must be > 0, got {self.lowpass_cutoff}")

    @classmethod
    def reference(cls, seed: int = 0) -> "SensorConfig":
        """Biases and noise used for the reinitialization experiment."""
        return cls(
            accel_bias=(0.05, 0.04),
            gyro_bias=(0.02, -0.015, 0.01),
            noise_power=1e-5,
            noise_sample_time=1e-4,
            lowpass_cutoff=1000.0,
            seed=seed,
        )

    @property
    def is_ideal(self) -> bool:
        return self.noise_power == 0 and not any(self.accel_bias) and not any(self.gyro_bias)

    @property
    def bias_vector(self) -> np.ndarray:
        """Bias on ``(ax, ay, az, gx, gy, gz)``."""
        return np.array([self.accel_bias[0], self.accel_bias[1], 0.0, *self.gyro_bias])

    @property
    def pole(self) -> float:
        return math.exp(-2.0 * math.pi * self.lowpass_cutoff * self.noise_sample_time)

    def white_std(self) -> float:
        return math.sqrt(self.noise_power / self.noise_sample_time)

    def to_json(self) -> dict:
        return {
            "accel_bias": list(self.accel_bias),
            "gyro_bias": list(self.gyro_bias),
            "noise_power": self.noise_power,
            "noise_sample_time": self.noise_sample_time,
            "lowpass_cutoff": self.lowpass_cutoff,
            "seed": self.seed,
        }


def filtered_noise_variance(cfg: SensorConfig) -> float:
    """Stationary variance of the low-passed noise on one channel."""
    a = cfg.pole
    return cfg.noise_power / cfg.noise_sample_time * (1.0 - a) / (1.0 + a)


def substeps(cfg: SensorConfig, dt: float) -> int:
    return max(1, int(round(dt / cfg.noise_sample_time)))


@dataclass
class NoiseChannelState:
    """Per-channel low-pass state plus the generator; single owner."""

    filter_state: np.ndarray = field(default_factory=lambda: np.zeros(6))
    rng: np.random.Generator = field(default_factory=lambda: np.random.Generator(np.random.PCG64(0)))

    @classmethod
    def from_config(cls, cfg: SensorConfig) -> "NoiseChannelState":
        return cls(np.zeros(6), np.random.Generator(np.random.PCG64(cfg.seed)))


def ideal_sample(s: TruthState, omega_body, c: float, thrust: float, m: float, t: float) -> ImuSample:
    """Rotor-drag specific acceleration ``(-c u, -c v, -T/m)`` and exact body rates."""
    if c < 0:
        raise ValueError(f"drag coefficient must be >= 0, got {c}")
    return ImuSample(t, np.array([-c * s.u, -c * s.v, -thrust / m]), np.asarray(omega_body, dtype=float))


def corrupt(sample: ImuSample, cfg: SensorConfig, ch: NoiseChannelState, dt: float):
    """Add biases and band-limited noise; advances ``ch`` over ``dt``.

    Returns ``(corrupted_sample, ch)``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    y = cfg.bias_vector
    if cfg.noise_power > 0:
        a = cfg.pole
        w = ch.rng.standard_normal((substeps(cfg, dt), 6)) * cfg.white_std()
        state = ch.filter_state
        for row in w:
            state = a * state + (1.0 - a) * row
        ch.filter_state = state
        y = y + state
    if not y.any():
        return sample, ch
    return ImuSample(sample.t, sample.a + y[:3], sample.omega + y[3:]), ch


def noise_stream(cfg: SensorConfig, n_samples: int, dt: float) -> np.ndarray:
    """Noise added by ``n_samples`` successive :func:`corrupt` calls, shape ``(n, 6)``.

    Bit-compatible with the per-sample path started from a fresh
    :class:`NoiseChannelState`; biases are not included.
    """
    if cfg.noise_power == 0 or n_samples == 0:
        return np.zeros((n_samples, 6))
    n_sub = substeps(cfg, dt)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    w = rng.standard_normal((n_samples * n_sub, 6)) * cfg.white_std()
    a = cfg.pole
    y = lfilter([1.0 - a], [1.0, -a], w, axis=0)
    return y[n_sub - 1 :: n_sub]
