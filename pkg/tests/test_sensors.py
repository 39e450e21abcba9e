import numpy as np
import pytest

from dragobs.sensors import (
    NoiseChannelState,
    SensorConfig,
    corrupt,
    filtered_noise_variance,
    ideal_sample,
    noise_stream,
)
from dragobs.types import TruthState

HOVER = TruthState(0.0, 0.0, 0.0, [0.0, 0.0, 1.0])


def test_ideal_sample_hover():
    s = ideal_sample(HOVER, (0, 0, 0), c=0.25, thrust=9.81, m=1.0, t=0.0)
    assert np.allclose(s.a, [0, 0, -9.81]) and np.all(s.omega == 0)


def test_ideal_sample_drag_and_inversion():
    s = ideal_sample(TruthState(2.0, -1.0, 0.0, [0, 0, 1]), (0.1, 0.2, 0.3), c=0.25, thrust=9.81, m=1.0, t=1.5)
    assert s.a[0] == -0.5 and s.a[1] == 0.25
    assert s.a[0] / -0.25 == 2.0
    assert s.t == 1.5 and np.array_equal(s.omega, [0.1, 0.2, 0.3])


def test_zero_config_is_identity():
    s = ideal_sample(TruthState(2.0, -1.0, 0.0, [0, 0, 1]), (0.1, 0.2, 0.3), 0.25, 9.81, 1.0, 0.0)
    out, _ = corrupt(s, SensorConfig(), NoiseChannelState(), 1e-3)
    assert out is s


def test_config_validation():
    for bad in ({"noise_power": -1}, {"noise_sample_time": 0}, {"lowpass_cutoff": 0}, {"accel_bias": (1,)}):
        with pytest.raises(ValueError):
            SensorConfig(**bad)


def test_filtered_variance_matches_first_order_prediction():
    cfg = SensorConfig(noise_power=1e-5, noise_sample_time=1e-4, lowpass_cutoff=1000.0, seed=11)
    a = np.exp(-2 * np.pi * 1000.0 * 1e-4)
    predicted = 0.1 * (1 - a) / (1 + a)
    assert filtered_noise_variance(cfg) == pytest.approx(predicted, rel=1e-14)
    # dt equal to the noise sample time: every filtered sample is kept
    y = noise_stream(cfg, 1_000_000, 1e-4)
    var = y.var(axis=0)
    assert np.all(np.abs(var / predicted - 1.0) < 0.10)


def test_decimated_stream_keeps_the_stationary_variance():
    cfg = SensorConfig.reference(seed=3)
    y = noise_stream(cfg, 200_000, 1e-3)
    assert np.all(np.abs(y.var(axis=0) / filtered_noise_variance(cfg) - 1.0) < 0.10)


def test_bias_means_within_three_sigma():
    cfg = SensorConfig.reference(seed=5)
    n, dt = 100_000, 1e-3
    noise = noise_stream(cfg, n, dt)
    mean = (noise + cfg.bias_vector).mean(axis=0)
    # decimated samples are near-independent (pole^10 ~ 2e-3), so sigma/sqrt(n) applies
    sigma_mean = np.sqrt(filtered_noise_variance(cfg) / n)
    expected = [0.05, 0.04, 0.0, 0.02, -0.015, 0.01]
    assert np.all(np.abs(mean - expected) < 3 * sigma_mean)


def test_stream_matches_per_sample_corruption_bit_for_bit():
    cfg = SensorConfig.reference(seed=9)
    ch = NoiseChannelState.from_config(cfg)
    s = ideal_sample(HOVER, (0, 0, 0), 0.25, 9.81, 1.0, 0.0)
    rows = []
    for _ in range(200):
        out, ch = corrupt(s, cfg, ch, 1e-3)
        rows.append(np.concatenate([out.a - s.a, out.omega - s.omega]))
    stream = noise_stream(cfg, 200, 1e-3) + cfg.bias_vector
    assert np.allclose(np.array(rows), stream, rtol=0, atol=1e-15)


def test_fixed_seed_is_deterministic_and_seeds_differ():
    a = noise_stream(SensorConfig.reference(seed=1), 1000, 1e-3)
    b = noise_stream(SensorConfig.reference(seed=1), 1000, 1e-3)
    c = noise_stream(SensorConfig.reference(seed=2), 1000, 1e-3)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
