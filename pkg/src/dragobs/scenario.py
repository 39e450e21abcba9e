"""Scenario definitions, JSON (de)serialization and the built-in scenarios."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dragobs.profiles import InputProfile, Signal, Sinusoid
from dragobs.sensors import SensorConfig
from dragobs.types import GRAVITY, DragParams, Gains, ObserverState, TruthState, eta_from_angles

DEG = math.pi / 180.0

REFERENCE_GAINS = Gains(k1=7.0, k2=7.0, k3=0.1, ku=49.0, kv=49.0, epsilon=0.1, c_l=0.2, c_u=0.3)
# k3 = 1 shortens the slow mode to about 1 s so theory checks settle within 40 s
FAST_GAINS = Gains(k1=56.0, k2=56.0, k3=1.0, ku=52.0, kv=52.0, epsilon=0.1, c_l=0.2, c_u=0.3)

ESTIMATORS = ("observer", "ekf")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ReinitEvent:
    """Overwrite parts of the estimate at time ``t``; angles in degrees."""

    t: float
    u_hat: float | None = None
    v_hat: float | None = None
    phi_hat_deg: float | None = None
    theta_hat_deg: float | None = None
    eta_hat: tuple | None = None

    def __post_init__(self):
        if (self.phi_hat_deg is None) != (self.theta_hat_deg is None):
            raise ScenarioError("reinit needs both phi_hat_deg and theta_hat_deg or neither")
        if self.eta_hat is not None and self.phi_hat_deg is not None:
            raise ScenarioError("reinit takes eta_hat or angles, not both")

    def apply(self, x):
        """Return the 5-tuple ``x`` with the overrides applied."""
        uh, vh, n1, n2, n3 = x
        if self.u_hat is not None:
            uh = self.u_hat
        if self.v_hat is not None:
            vh = self.v_hat
        if self.phi_hat_deg is not None:
            n1, n2, n3 = eta_from_angles(self.phi_hat_deg * DEG, self.theta_hat_deg * DEG)
        elif self.eta_hat is not None:
            n1, n2, n3 = self.eta_hat
        return tuple(np.broadcast_to(np.asarray(a, dtype=float), np.shape(x[0])) if np.ndim(x[0]) else float(a)
                     for a in (uh, vh, n1, n2, n3))

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    profile: InputProfile
    drag: DragParams
    dt: float = 1e-3
    truth_model: str = "full"  # "design" drops Coriolis terms
    initial_truth: TruthState | None = None  # None: level, at rest, or the scripted attitude
    sensors: SensorConfig = field(default_factory=SensorConfig)
    gains: Gains = REFERENCE_GAINS
    c_mode: str = "true"
    integration: str = "rk4"
    measurement: str = "sampled"  # "continuous" evaluates ideal IMU at RK4 stages
    observer_init: object = "hover"  # "hover", "truth" or a dict of overrides
    reinit_events: tuple = ()
    estimators: tuple = ("observer",)
    ekf_noise: dict = field(default_factory=dict)
    compare_c_modes: bool = False
    g: float = GRAVITY
    description: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise ScenarioError(f"duration must be > 0, got {self.duration}")
        if not self.dt > 0:
            raise ScenarioError(f"dt must be > 0, got {self.dt}")
        if self.truth_model not in ("full", "design"):
            raise ScenarioError(f"truth_model must be 'full' or 'design', got {self.truth_model!r}")
        if self.c_mode not in ("true", "nominal"):
            raise ScenarioError(f"c_mode must be 'true' or 'nominal', got {self.c_mode!r}")
        if self.measurement not in ("sampled", "continuous"):
            raise ScenarioError(f"measurement must be 'sampled' or 'continuous', got {self.measurement!r}")
        if self.measurement == "continuous" and self.sensors.noise_power > 0:
            raise ScenarioError("continuous measurement coupling needs noise-free sensors")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ScenarioError(f"estimators must be a non-empty subset of {ESTIMATORS}, got {self.estimators}")
        if not (isinstance(self.observer_init, dict) or self.observer_init in ("hover", "truth")):
            raise ScenarioError(f"observer_init must be 'hover', 'truth' or a dict, got {self.observer_init!r}")
        for ev in self.reinit_events:
            if not 0 < ev.t <= self.duration:
                raise ScenarioError(f"reinit at t={ev.t} outside (0, duration]")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def c_bar(self) -> float:
        return self.drag.c_bar

    def truth0(self) -> TruthState:
        if self.initial_truth is not None:
            return self.initial_truth
        if self.profile.scripted_attitude:
            phi, theta = self.profile.attitude(0.0)
            return TruthState.from_angles(phi=phi, theta=theta)
        return TruthState.from_angles()

    def observer0(self) -> ObserverState:
        truth = self.truth0()
        if self.observer_init == "truth":
            return ObserverState.from_truth(truth)
        base = (0.0, 0.0, 0.0, 0.0, 1.0)
        if isinstance(self.observer_init, dict):
            base = ReinitEvent(t=self.dt, **self.observer_init).apply(base)
        return ObserverState.from_array(base)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    # JSON -----------------------------------------------------------------

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "duration": self.duration,
            "dt": self.dt,
            "truth_model": self.truth_model,
            "drag": {"lambda": self.drag.lam, "mass": self.drag.mass, "omega_bar": self.drag.omega_bar},
            "inputs": self.profile.to_json(),
            "sensors": self.sensors.to_json(),
            "observer": {
                "gains": {k: getattr(self.gains, k) for k in ("k1", "k2", "k3", "ku", "kv", "epsilon", "c_l", "c_u")},
                "c_mode": self.c_mode,
                "integration": self.integration,
                "init": self.observer_init,
            },
            "measurement": self.measurement,
            "reinit_events": [ev.to_json() for ev in self.reinit_events],
            "estimators": list(self.estimators),
            "ekf": dict(self.ekf_noise),
            "compare_c_modes": self.compare_c_modes,
            "g": self.g,
        }
        if self.initial_truth is not None:
            s = self.initial_truth
            out["initial_truth"] = {"u": s.u, "v": s.v, "w": s.w, "eta": list(s.eta)}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        try:
            drag_spec = data["drag"]
            drag = DragParams(drag_spec["lambda"], drag_spec["mass"], drag_spec["omega_bar"])
            obs = data.get("observer", {})
            g = float(data.get("g", GRAVITY))
            gains = Gains(g=g, **obs.get("gains", {})) if "gains" in obs else replace(REFERENCE_GAINS, g=g)
            truth = data.get("initial_truth")
            if truth is not None:
                if "eta" in truth:
                    truth = TruthState(truth.get("u", 0.0), truth.get("v", 0.0), truth.get("w", 0.0), truth["eta"])
                else:
                    truth = TruthState.from_angles(
                        truth.get("u", 0.0), truth.get("v", 0.0), truth.get("w", 0.0),
                        truth.get("phi_deg", 0.0) * DEG, truth.get("theta_deg", 0.0) * DEG,
                    )
            events = []
            for ev in data.get("reinit_events", []):
                ev = dict(ev)
                if "eta_hat" in ev:
                    ev["eta_hat"] = tuple(ev["eta_hat"])
                events.append(ReinitEvent(**ev))
            return cls(
                name=data["name"],
                description=data.get("description", ""),
                duration=float(data["duration"]),
                dt=float(data.get("dt", 1e-3)),
                truth_model=data.get("truth_model", "full"),
                drag=drag,
                profile=InputProfile.parse(data.get("inputs", {}), drag.omega_bar),
                initial_truth=truth,
                sensors=SensorConfig(**data.get("sensors", {})),
                gains=gains,
                c_mode=obs.get("c_mode", "true"),
                integration=obs.get("integration", "rk4"),
                observer_init=obs.get("init", "hover"),
                measurement=data.get("measurement", "sampled"),
                reinit_events=tuple(events),
                estimators=tuple(data.get("estimators", ["observer"])),
                ekf_noise=dict(data.get("ekf", {})),
                compare_c_modes=bool(data.get("compare_c_modes", False)),
                g=g,
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc!r}") from exc


def load_scenario(source) -> Scenario:
    """Built-in name or path to a JSON scenario file."""
    if isinstance(source, Scenario):
        return source
    if str(source) in BUILTINS:
        return BUILTINS[str(source)]()
    path = Path(source)
    if not path.exists():
        raise ScenarioError(f"no built-in scenario or file named {source!r}; built-ins: {sorted(BUILTINS)}")
    return Scenario.from_json(json.loads(path.read_text()))


def dump_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(s.to_json(), indent=2) + "\n")
    return path


# Built-ins ------------------------------------------------------------------

HOVER_SPEED = 400.0
NOMINAL_DRAG = DragParams.for_nominal(0.25, mass=1.0, omega_bar=HOVER_SPEED)


def _sin(amplitude, frequency, phase=0.0, offset=0.0):
    return Signal((Sinusoid(amplitude, frequency, phase, offset),))


def _motor_swings(differential, common, f_roll, f_pitch, f_common):
    """Opposite motor pairs swing in antiphase; a small common part moves c(t)."""
    biases = []
    for sign, f in ((1.0, f_roll), (1.0, f_pitch), (-1.0, f_roll), (-1.0, f_pitch)):
        biases.append(
            Signal(
                (
                    Sinusoid(sign * differential, f, 0.0, HOVER_SPEED),
                    Sinusoid(common, f_common, 0.5),
                )
            )
        )
    return tuple(biases)


def hover_ideal() -> Scenario:
    return Scenario(
        name="hover-ideal",
        description="Level hover, ideal sensors, observer started at the hover prior (zero error).",
        duration=30.0,
        profile=InputProfile.hover(HOVER_SPEED),
        drag=NOMINAL_DRAG,
        truth_model="design",
        measurement="continuous",
        estimators=("observer", "ekf"),
    )


def paper_v() -> Scenario:
    profile = InputProfile(
        phi=_sin(20 * DEG, 0.2),
        theta=_sin(15 * DEG, 0.15, 1.0),
        r=_sin(0.3, 0.05),
        motor_speeds=_motor_swings(60.0, 6.0, 0.2, 0.15, 0.1),
    )
    return Scenario(
        name="paper-v",
        description="Reinitialization experiment: biased noisy IMU, reference gains, nominal drag coefficient, "
        "estimate reset at t=5 s to (-4 m/s, -3 m/s, -60 deg, 60 deg).",
        duration=60.0,
        profile=profile,
        drag=NOMINAL_DRAG,
        truth_model="full",
        sensors=SensorConfig.reference(seed=2016),
        gains=REFERENCE_GAINS,
        c_mode="nominal",
        observer_init="truth",
        reinit_events=(ReinitEvent(t=5.0, u_hat=-4.0, v_hat=-3.0, phi_hat_deg=-60.0, theta_hat_deg=60.0),),
        estimators=("observer", "ekf"),
    )


def aggressive() -> Scenario:
    profile = InputProfile(
        phi=Signal((Sinusoid(35 * DEG, 0.25), Sinusoid(10 * DEG, 0.7, 0.3))),
        theta=Signal((Sinusoid(30 * DEG, 0.2, 1.0), Sinusoid(8 * DEG, 0.55, 2.0))),
        r=_sin(1.0, 0.1),
        motor_speeds=_motor_swings(150.0, 4.0, 0.25, 0.2, 0.3),
    )
    return Scenario(
        name="aggressive",
        description="Large attitude swings with yaw rate; Coriolis terms of several m/s^2, "
        "large differential motor-speed swings with small variation of c(t).",
        duration=60.0,
        profile=profile,
        drag=NOMINAL_DRAG,
        truth_model="full",
        gains=REFERENCE_GAINS,
        c_mode="true",
        observer_init="truth",
        estimators=("observer", "ekf"),
        compare_c_modes=True,
    )


def design_model() -> Scenario:
    profile = InputProfile(
        phi=_sin(25 * DEG, 0.2),
        theta=_sin(20 * DEG, 0.15, 1.0),
        r=_sin(0.5, 0.1),
        motor_speeds=_motor_swings(100.0, 30.0, 0.2, 0.15, 0.05),
    )
    return Scenario(
        name="design-model",
        description="Design-model truth (no Coriolis), ideal sensors, valid fast gains, perturbed observer start; "
        "used for the Lyapunov theory check and the Monte-Carlo convergence study.",
        duration=40.0,
        profile=profile,
        drag=NOMINAL_DRAG,
        truth_model="design",
        gains=FAST_GAINS,
        c_mode="true",
        measurement="continuous",
        observer_init={"u_hat": 1.5, "v_hat": -1.0, "eta_hat": (0.4, -0.3, 0.6)},
    )


BUILTINS = {
    "hover-ideal": hover_ideal,
    "paper-v": paper_v,
    "aggressive": aggressive,
    "design-model": design_model,
}
