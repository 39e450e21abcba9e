import math
from dataclasses import replace

import numpy as np
import pytest

from dragobs import logs, runner
from dragobs.dynamics import DivergenceError
from dragobs.profiles import Signal
from dragobs.runner import InitSampler, SimulationAborted, monte_carlo, run_scenario, theory_check
from dragobs.scenario import BUILTINS
from dragobs.types import Gains


def builtin(name, **changes):
    """Built-in scenario with overrides; a shortened run drops reinits past its end."""
    scn = BUILTINS[name]()
    if "duration" in changes and "reinit_events" not in changes:
        changes["reinit_events"] = tuple(ev for ev in scn.reinit_events if ev.t <= changes["duration"])
    return scn.with_(**changes) if changes else scn


def test_csv_schemas_are_pinned(tmp_path):
    assert ",".join(logs.IMU_COLUMNS) == "t,ax,ay,az,gx,gy,gz"
    assert ",".join(logs.ESTIMATE_COLUMNS) == "t,u_hat,v_hat,eta1_hat,eta2_hat,eta3_hat,phi_hat_deg,theta_hat_deg"
    assert ",".join(logs.EKF_COLUMNS) == ",".join(logs.ESTIMATE_COLUMNS) + ",cov_trace"
    assert ",".join(logs.DIAGNOSTIC_COLUMNS) == "t,V,W,Wdot_fd,decay_bound,e_u,e_v,z1,z2,z3,eta_err_norm"
    assert ",".join(logs.TRUTH_COLUMNS) == (
        "t,u,v,w,eta1,eta2,eta3,phi_deg,theta_deg,p,q,r,thrust,c,coriolis_norm,omega1,omega2,omega3,omega4"
    )
    rec = run_scenario(builtin("paper-v", duration=0.5))
    paths = rec.write(tmp_path)
    names = sorted(p.name for p in paths)
    assert names == [
        "diagnostics.csv", "estimates_ekf.csv", "estimates_observer.csv", "imu.csv", "summary.json", "truth.csv",
    ]
    headers = {
        "imu.csv": logs.IMU_COLUMNS,
        "truth.csv": logs.TRUTH_COLUMNS,
        "estimates_observer.csv": logs.ESTIMATE_COLUMNS,
        "estimates_ekf.csv": logs.EKF_COLUMNS,
        "diagnostics.csv": logs.DIAGNOSTIC_COLUMNS,
    }
    for name, cols in headers.items():
        text = (tmp_path / name).read_text().splitlines()
        assert text[0] == ",".join(cols)
        assert len(text) == 1 + rec.t.size
    back = logs.read_csv(tmp_path / "imu.csv")
    assert np.array_equal(back["ax"], rec.imu[:, 0])


def test_write_csv_rejects_wrong_width(tmp_path):
    with pytest.raises(ValueError):
        logs.write_csv(tmp_path / "x.csv", ("a", "b"), np.zeros((3, 3)))


def test_run_record_shapes():
    scn = builtin("aggressive", duration=1.0)
    rec = run_scenario(scn)
    n = scn.n_steps + 1
    assert rec.t.shape == (n,) and rec.truth.shape == (n, 6) and rec.imu.shape == (n, 6)
    assert rec.motor_speeds.shape == (n, 4) and rec.rates.shape == (n, 3)
    assert set(rec.estimates) == {"observer", "ekf"}
    assert rec.t[-1] == pytest.approx(scn.duration)


def test_hover_equilibrium_is_exact():
    rec = run_scenario(builtin("hover-ideal"))
    for name, m in rec.metrics["estimators"].items():
        assert m["n_samples"] > 0
        for key in ("rmse_u", "rmse_v", "rmse_phi_deg", "rmse_theta_deg", "max_norm_dev"):
            assert m[key] < 1e-6, (name, key, m[key])


def test_metric_windows_skip_each_transient():
    scn = builtin("paper-v")
    windows, excl = runner.metric_windows(scn, [5000])
    assert excl == pytest.approx(3 / 0.1 * 0.99, rel=1e-12)
    # 60 s run: only the reinit window at 5 + 29.7 s survives
    assert windows == [(5.0 + excl, 60.0)]


def test_sphere_attraction_on_design_truth():
    rec = run_scenario(builtin("design-model"))
    est = rec.estimates["observer"]
    tail = rec.t > 10.0
    dev = np.abs(np.linalg.norm(est[tail, 2:5], axis=1) - 1.0)
    assert dev.max() < 1e-3
    assert abs(np.linalg.norm(est[0, 2:5]) - 1.0) > 0.2


def test_determinism_same_seed(tmp_path):
    scn = builtin("paper-v", duration=6.0)
    a = run_scenario(scn).write(tmp_path / "a")
    b = run_scenario(scn).write(tmp_path / "b")
    for pa, pb in zip(a, b):
        if pa.suffix == ".csv":
            assert pa.read_bytes() == pb.read_bytes(), pa.name


def test_seed_changes_noise():
    a = run_scenario(builtin("paper-v", duration=0.2))
    scn = builtin("paper-v", duration=0.2)
    b = run_scenario(scn.with_(sensors=replace(scn.sensors, seed=1)))
    assert not np.array_equal(a.imu, b.imu)
    assert np.array_equal(a.truth, b.truth)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_run_thirty_seconds_quickly(name):
    scn = builtin(name, duration=30.0, dt=1e-3)
    rec = run_scenario(scn)
    assert rec.wall_time < 10.0, rec.wall_time


def test_reinit_is_applied_at_its_timestamp():
    scn = builtin("paper-v", duration=5.5)
    rec = run_scenario(scn)
    k = 5000
    assert rec.reinit_steps == [k]
    for est in rec.estimates.values():
        assert est[k, 0] == -4.0 and est[k, 1] == -3.0
        assert est[k, 2] == pytest.approx(-math.sin(math.pi / 3))
        assert est[k - 1, 0] != -4.0


def test_aborts_carry_step_and_snapshot(monkeypatch):
    real = runner.rk4_truth
    calls = {"n": 0}

    def failing(*args):
        calls["n"] += 1
        if calls["n"] == 42:
            raise DivergenceError("truth diverged")
        return real(*args)

    monkeypatch.setattr(runner, "rk4_truth", failing)
    with pytest.raises(SimulationAborted) as info:
        run_scenario(builtin("paper-v", duration=1.0))
    assert info.value.step == 41
    assert info.value.snapshot["t"] == pytest.approx(0.041)
    assert len(info.value.snapshot["truth"]) == 6


def test_c_mode_comparison_is_paired():
    out = runner.compare_c_modes(builtin("aggressive", duration=35.0, estimators=("observer",)))
    assert set(out) == {"true", "nominal", "delta"}
    assert all(math.isfinite(v) for v in out["true"].values())
    for key, d in out["delta"].items():
        assert d == pytest.approx(out["nominal"][key] - out["true"][key])


# theory check -------------------------------------------------------------

def test_theory_check_refuses_noisy_sensors():
    rep = theory_check(builtin("paper-v"))
    assert rep.mode == "refused" and not rep.passed
    assert "ideal" in rep.reason


def test_theory_check_refuses_invalid_gains():
    scn = builtin("design-model")
    rep = theory_check(scn.with_(gains=replace(scn.gains, k3=-1.0)))
    assert rep.mode == "refused" and "invalid gains" in rep.reason


def test_theory_check_refuses_when_eta3_leaves_the_cap():
    scn = builtin("design-model")
    tilted = replace(scn.profile, phi=Signal.parse({"type": "sinusoid", "amplitude": 1.5, "frequency": 0.1}))
    rep = theory_check(scn.with_(profile=tilted, duration=10.0))
    assert rep.mode == "refused"
    assert "eta3" in rep.reason and "t = " in rep.reason
    t_hit = float(rep.reason.rsplit("t = ", 1)[1].split()[0])
    # cos(1.5 sin(2 pi 0.1 t)) cos(theta) first drops below 0.1 early in the first quarter period
    assert 0.0 < t_hit < 2.5


def test_theory_check_on_full_truth_is_robustness_mode():
    rep = theory_check(builtin("design-model", truth_model="full", duration=5.0))
    assert rep.mode == "robustness" and not rep.passed
    assert rep.reason == "robustness mode, bound not asserted"
    assert rep.n_checked > 0


def test_theory_check_perturbed_hover_satisfies_bound():
    scn = builtin("hover-ideal", observer_init={"u_hat": 1.0, "v_hat": -0.5, "eta_hat": (0.3, -0.2, 0.8)})
    rep = theory_check(scn)
    assert rep.mode == "certify"
    assert rep.max_raw_excess < 1e-6
    assert rep.passed and rep.v_monotone


# monte carlo --------------------------------------------------------------

def test_monte_carlo_refuses_invalid_gains_unless_forced():
    scn = builtin("design-model", duration=2.0)
    bad = scn.with_(gains=replace(scn.gains, k3=-0.5))
    summary = monte_carlo(bad, 5)
    assert summary.refused.startswith("invalid gains") and summary.converged == 0
    forced = monte_carlo(bad, 5, force=True)
    assert not forced.refused and len(forced.final_V) == 5


def test_monte_carlo_empty():
    s = monte_carlo(builtin("design-model"), 0)
    assert s.n == 0 and s.converged == 0 and s.final_V == [] and not s.refused
    assert list(s.rows()) == ["run,initial_V,final_V,settling_time,converged"]


def test_monte_carlo_is_seeded_and_order_independent():
    scn = builtin("design-model", duration=3.0)
    a = monte_carlo(scn, 6, seed=3)
    b = monte_carlo(scn, 6, seed=3)
    assert a.final_V == b.final_V
    # a batch of one reproduces the corresponding batched run
    rng = np.random.Generator(np.random.PCG64(3))
    x0 = InitSampler().sample(rng, 6, scn.truth0())
    single = runner._integrate(scn.with_(estimators=("observer",)), tuple(v[2] for v in x0), ekf=False)
    xo = single.observer[-1]
    xt = single.truth[-1]
    g = scn.gains
    e_u, e_v = xo[0] - xt[0], xo[1] - xt[1]
    z = (xo[2] - xt[3] - g.k1 / g.g * e_u, xo[3] - xt[4] - g.k2 / g.g * e_v, xo[4] - xt[5])
    V = 0.5 * (e_u**2 + e_v**2 + sum(zi**2 for zi in z))
    assert V == pytest.approx(a.final_V[2], rel=1e-9, abs=1e-300)


def test_init_sampler_respects_bounds():
    rng = np.random.Generator(np.random.PCG64(0))
    truth0 = builtin("design-model").truth0()
    u, v, e1, e2, e3 = InitSampler().sample(rng, 2000, truth0)
    r = np.sqrt(e1**2 + e2**2 + e3**2)
    assert r.max() <= 5.0 and r.max() > 4.9
    assert np.max(np.abs(u - truth0.u)) <= 10.0 and np.max(np.abs(v - truth0.v)) <= 10.0


def test_monte_carlo_refuses_truth_outside_cap():
    scn = builtin("design-model", duration=5.0)
    tilted = replace(scn.profile, phi=Signal.parse({"type": "sinusoid", "amplitude": 1.5, "frequency": 0.1}))
    s = monte_carlo(scn.with_(profile=tilted), 3)
    assert "eta3" in s.refused


def test_gains_type_is_reexported():
    assert isinstance(builtin("paper-v").gains, Gains)
