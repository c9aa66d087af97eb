"""Fixed-step closed-loop simulation and the built-in campaigns."""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .controller import DEFAULT_KD, DEFAULT_KP, DEFAULT_POLES, ForceMode, PositionMode, RobustController
from .errors import DivergenceError, ScenarioError
from .model_nominal import JointParams, build_nominal_model
from .plant import Environment, Friction, LinkGeometry, PayloadEvent, Plant, World, _bodies, check_finite
from .trajectories import Constant, Sinusoid, SmoothedSteps

log = logging.getLogger(__name__)

SETTLE_BAND_POSITION = 1e-3  # rad
SETTLE_BAND_FORCE = 1e-3  # N m


@dataclass(frozen=True)
class Scenario:
    name: str
    geometry: LinkGeometry | None
    true_params: tuple[JointParams, ...]
    nominal_params: tuple[JointParams, ...]
    modes: tuple
    friction: Friction | None = None
    environment: Environment | None = None
    payloads: tuple[PayloadEvent, ...] = ()
    dob_bandwidth: tuple[float, ...] = ()
    controller_poles: tuple[tuple[float, ...], ...] = ()
    kp: float = DEFAULT_KP
    kd: float = DEFAULT_KD
    torque_limit: float | None = None
    measurement_noise: float = 0.0
    initial_state: tuple[tuple[float, ...], ...] = ()
    dt: float = 1e-4
    duration: float = 1.0
    seed: int = 0
    metrics_start: float = 1.0

    def __post_init__(self):
        setattr_ = object.__setattr__
        setattr_(self, "true_params", tuple(self.true_params))
        setattr_(self, "nominal_params", tuple(self.nominal_params))
        setattr_(self, "modes", tuple(self.modes))
        setattr_(self, "payloads", tuple(self.payloads))
        setattr_(self, "dob_bandwidth", tuple(float(g) for g in self.dob_bandwidth))
        setattr_(self, "controller_poles", tuple(tuple(float(p) for p in ps) for ps in self.controller_poles))
        setattr_(self, "initial_state", tuple(tuple(float(v) for v in row) for row in self.initial_state))
        for name in ("kp", "kd", "measurement_noise", "dt", "duration", "metrics_start"):
            setattr_(self, name, float(getattr(self, name)))
        if self.torque_limit is not None:
            setattr_(self, "torque_limit", float(self.torque_limit))
        setattr_(self, "seed", int(self.seed))

    @property
    def n(self) -> int:
        return len(self.true_params)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def world(self) -> World:
        return World(
            true_params=self.true_params,
            geometry=self.geometry,
            environment=self.environment,
            payloads=self.payloads,
            friction=self.friction,
        )

    def x0(self) -> np.ndarray:
        if not self.initial_state:
            return np.zeros((self.n, 4))
        return np.array(self.initial_state, dtype=float)

    def validate(self) -> "Scenario":
        n = self.n
        if not self.dt > 0:
            raise ScenarioError("dt must be > 0")
        if not self.duration >= self.dt:
            raise ScenarioError("duration must be >= dt")
        if n == 0:
            raise ScenarioError("scenario needs at least one joint")
        for name in ("nominal_params", "modes", "dob_bandwidth", "controller_poles"):
            if len(getattr(self, name)) != n:
                raise ScenarioError(f"{name} must have one entry per joint ({n})")
        if any(len(p) != 4 for p in self.controller_poles):
            raise ScenarioError("controller_poles needs four poles per joint")
        if any(g <= 0 for g in self.dob_bandwidth):
            raise ScenarioError("dob_bandwidth must be > 0")
        if self.initial_state and np.shape(self.initial_state) != (n, 4):
            raise ScenarioError(f"initial_state must have shape ({n}, 4)")
        if self.measurement_noise < 0:
            raise ScenarioError("measurement_noise must be >= 0")
        if self.torque_limit is not None and self.torque_limit <= 0:
            raise ScenarioError("torque_limit must be > 0")
        for arr_name in ("environment", "friction"):
            obj = getattr(self, arr_name)
            if obj is None:
                continue
            for f in obj.__dataclass_fields__:
                value = getattr(obj, f)
                if isinstance(value, tuple) and len(value) != n:
                    raise ScenarioError(f"{arr_name}.{f} must have one entry per joint ({n})")
        for p in self.true_params + self.nominal_params:
            p.validate()
        self.world()
        return self

    def controller(self) -> RobustController:
        return RobustController(
            self.nominal_params,
            self.modes,
            self.dob_bandwidth,
            self.controller_poles,
            self.kp,
            self.kd,
            self.torque_limit,
        )


@dataclass
class Telemetry:
    """Per-step record; row ``k`` is time ``k * dt``.

    ``X`` holds ``[q_J, dq_J, q_m, dq_m]`` per joint. ``tau_hat`` and
    ``tau_true`` are the estimated and true lumped disturbance vectors of the
    nominal joint models.
    """

    t: np.ndarray
    X: np.ndarray
    u: np.ndarray
    ref: np.ndarray
    tau_hat: np.ndarray
    tau_true: np.ndarray
    contact: np.ndarray
    spring: np.ndarray


@dataclass
class RunResult:
    scenario: Scenario
    telemetry: Telemetry
    metrics: dict
    certificates: list


def _payload_steps(payloads, dt):
    # first grid index at or after each event time
    return [int(math.ceil(ev.time / dt - 1e-9)) for ev in payloads]


def run(scenario: Scenario) -> RunResult:
    """Simulate the closed loop with classical RK4 at fixed step ``dt``.

    Plant, observers and control law form one ODE, so the torque is
    re-evaluated at every RK4 stage. Measurement noise is drawn once per step
    and held. Payload events take effect at the first grid point at or after
    their time.
    """
    scenario.validate()
    started = _time.perf_counter()
    world = scenario.world()
    plant = Plant(world)
    ctrl = scenario.controller()
    n, dt, N = scenario.n, scenario.dt, scenario.n_steps
    rng = np.random.default_rng(scenario.seed)
    noise = scenario.measurement_noise

    event_steps = _payload_steps(world.payloads, dt)
    bank = ctrl.bank
    A, b, L = bank.A, bank.b, bank.L
    G = ctrl.gain_matrix()
    limit = np.inf if scenario.torque_limit is None else float(scenario.torque_limit)
    k_n = np.array([p.k for p in scenario.nominal_params])
    # references on the half-step grid: row 2k is t_k, row 2k+1 the midpoint
    half = np.arange(2 * N + 1) * (0.5 * dt)
    R = np.stack([j.mode.trajectory.sample(half) for j in ctrl.joints], axis=1)

    tel = Telemetry(
        t=np.arange(N + 1) * dt,
        X=np.empty((N + 1, n, 4)),
        u=np.empty((N + 1, n)),
        ref=R[::2, :, 0].copy(),
        tau_hat=np.empty((N + 1, n, 4)),
        tau_true=np.empty((N + 1, n, 4)),
        contact=np.zeros((N + 1, n), dtype=bool),
        spring=np.empty((N + 1, n)),
    )

    X = scenario.x0()
    offset = np.zeros_like(X)
    bodies_cache = {}
    for k in range(N + 1):
        t = k * dt
        if noise:
            offset = noise * rng.standard_normal(X.shape)
        if k == 0:
            ctrl.reset(X + offset)
        active = tuple(ev for ev, ke in zip(world.payloads, event_steps) if ke <= k)
        bodies = bodies_cache.get(active)
        if bodies is None:
            bodies = bodies_cache[active] = plant.bodies(active)
        args = plant.kernel_args(bodies)

        Z = ctrl.Z
        if k < N:
            try:
                X_next, Z_next, u, k1 = _kernels.rk4_step(
                    X, Z, R[2 * k], R[2 * k + 1], R[2 * k + 2], offset, dt, *args, A, b, L, G, limit
                )
            except np.linalg.LinAlgError:
                raise DivergenceError(f"state diverged at t={t:.6g}", time=t) from None
        else:
            k1, _, u = _kernels.closed_loop_rhs(X, Z, R[2 * k], offset, *args, A, b, L, G, limit)
        if not np.all(np.isfinite(u)):
            joint = int(np.argwhere(~np.isfinite(u))[0, 0])
            raise DivergenceError(f"non-finite command at joint {joint}, t={t:.6g}", joint=joint, time=t)
        check_finite(k1, t)
        tel.X[k] = X
        tel.u[k] = u
        tel.tau_hat[k] = Z[:, 0] - L[:, :1] * (X + offset)
        tel.tau_true[k] = np.einsum("nij,nj->ni", A, X) + b * u[:, None] - k1
        tel.spring[k] = k_n * (X[:, 0] - X[:, 2])
        if world.environment is not None:
            tel.contact[k] = plant.contact(X[:, 2], X[:, 3])[0]
        if k == N:
            break
        if not (np.all(np.isfinite(X_next)) and np.all(np.isfinite(Z_next))):
            bad = np.argwhere(~np.isfinite(X_next))
            joint = int(bad[0, 0]) if len(bad) else None
            raise DivergenceError(f"state diverged at t={t + dt:.6g}", joint=joint, time=t + dt)
        X, ctrl.Z = X_next, Z_next

    ctrl.u = tel.u[-1].copy()
    metrics = compute_metrics(scenario, tel, ctrl)
    metrics["runtime_s"] = _time.perf_counter() - started
    return RunResult(scenario, tel, metrics, ctrl.certificates)


def event_times(scenario: Scenario) -> list[float]:
    """Reference steps and payload events, snapped to the grid, plus t=0."""
    dt = scenario.dt
    times = {0.0}
    for mode in scenario.modes:
        times.update(mode.trajectory.event_times())
    times.update(ev.time for ev in scenario.payloads)
    snapped = sorted({math.ceil(t / dt - 1e-9) * dt for t in times if t <= scenario.duration})
    return snapped


def tracking_error(scenario: Scenario, tel: Telemetry) -> np.ndarray:
    err = np.empty_like(tel.ref)
    for i, mode in enumerate(scenario.modes):
        if mode.kind == "position":
            err[:, i] = tel.X[:, i, 2] - tel.ref[:, i]
        else:
            err[:, i] = tel.spring[:, i] - tel.ref[:, i]
    return err


def settling_after(t, err, start, stop, band):
    """Seconds after ``start`` until ``|err|`` stays inside ``band`` up to ``stop``.

    ``None`` if it is still outside at ``stop``.
    """
    mask = (t >= start - 1e-12) & (t < stop - 1e-12)
    seg_t, seg_e = t[mask], np.abs(err[mask])
    outside = np.nonzero(seg_e > band)[0]
    if len(outside) == 0:
        return 0.0
    last = outside[-1]
    if last == len(seg_e) - 1:
        return None
    return float(seg_t[last + 1] - start)


def compute_metrics(scenario: Scenario, tel: Telemetry, ctrl=None) -> dict:
    err = tracking_error(scenario, tel)
    t = tel.t
    window = t >= min(scenario.metrics_start, t[-1])
    tail = t >= t[-1] - min(0.5, 0.25 * t[-1])
    events = event_times(scenario)
    bounds = events + [t[-1] + scenario.dt]

    per_joint: dict[str, list] = {
        "mode": [],
        "rms_error": [],
        "max_abs_error": [],
        "steady_state_error": [],
        "final_error": [],
        "settling_time": [],
        "event_settling": [],
        "post_settling_peak_to_peak": [],
    }
    for i, mode in enumerate(scenario.modes):
        band = SETTLE_BAND_POSITION if mode.kind == "position" else SETTLE_BAND_FORCE
        e = err[:, i]
        per_joint["mode"].append(mode.kind)
        per_joint["rms_error"].append(float(np.sqrt(np.mean(e[window] ** 2))))
        per_joint["max_abs_error"].append(float(np.max(np.abs(e[window]))))
        per_joint["steady_state_error"].append(float(np.max(np.abs(e[tail]))))
        per_joint["final_error"].append(float(e[-1]))
        settle = [
            {"event_time": float(start), "settling_time": settling_after(t, e, start, stop, band)}
            for start, stop in zip(bounds[:-1], bounds[1:])
        ]
        per_joint["event_settling"].append(settle)
        last = settle[-1]["settling_time"]
        per_joint["settling_time"].append(last)
        if last is None:
            per_joint["post_settling_peak_to_peak"].append(None)
        else:
            after = t >= settle[-1]["event_time"] + last
            per_joint["post_settling_peak_to_peak"].append(float(np.ptp(e[after])))

    metrics = {
        "scenario": scenario.name,
        "n_joints": scenario.n,
        "dt": scenario.dt,
        "duration": scenario.duration,
        "n_rows": len(t),
        "settle_band": {"position_rad": SETTLE_BAND_POSITION, "force_Nm": SETTLE_BAND_FORCE},
        "events": events,
        "per_joint": per_joint,
    }
    if ctrl is not None:
        metrics["certificates"] = {
            "residual_norm": [c.residual_norm for c in ctrl.certificates],
            "p_min_eig": [c.p_min_eig for c in ctrl.certificates],
            "valid": [c.valid for c in ctrl.certificates],
        }
    return metrics


# ---------------------------------------------------------------------------
# defaults and built-in campaigns

DEFAULT_LENGTHS = (0.3, 0.3, 0.2)
DEFAULT_MASSES = (2.0, 1.5, 1.0)
DEFAULT_STIFFNESS = 500.0
DEFAULT_MOTOR_INERTIA = 0.05
INERTIA_MISMATCH = 1.2
DEFAULT_COULOMB = 0.5
DEFAULT_DOB_BANDWIDTH = 8000.0
# decentralised link inertia as a multiple of the effective inertia
# 1 / (M^-1)_ii; coupling and the tip payload both raise the inertia a joint
# actually sees, and the observer tolerates underestimates far better than
# overestimates
NOMINAL_INERTIA_SCALE = 3.5


def default_geometry(gravity: float = 0.0) -> LinkGeometry:
    return LinkGeometry.uniform_rods(DEFAULT_LENGTHS, DEFAULT_MASSES, gravity=gravity)


def link_inertia_diagonal(geometry: LinkGeometry, q=None) -> np.ndarray:
    """Diagonal of the unloaded link inertia matrix at ``q`` (default: stretched)."""
    q = np.zeros(geometry.n) if q is None else np.asarray(q, dtype=float)
    return np.diag(_bodies(geometry, ()).mass_matrix(q)).copy()


def effective_link_inertia(geometry: LinkGeometry, q=None) -> np.ndarray:
    """Inertia each joint sees with the other joint torques held: 1 / (M^-1)_ii."""
    q = np.zeros(geometry.n) if q is None else np.asarray(q, dtype=float)
    M = _bodies(geometry, ()).mass_matrix(q)
    return 1.0 / np.diag(np.linalg.inv(M))


def nominal_geometry(geometry: LinkGeometry) -> LinkGeometry:
    """The arm the controller believes in: every inertial parameter scaled down."""
    return replace(
        geometry,
        masses=tuple(m / INERTIA_MISMATCH for m in geometry.masses),
        link_inertias=tuple(I / INERTIA_MISMATCH for I in geometry.link_inertias),
    )


def default_nominal_params(geometry: LinkGeometry) -> tuple[JointParams, ...]:
    m_n = NOMINAL_INERTIA_SCALE * effective_link_inertia(nominal_geometry(geometry))
    return tuple(
        JointParams(J=DEFAULT_MOTOR_INERTIA, m=float(m), b_J=0.0, b_m=0.0, k=DEFAULT_STIFFNESS)
        for m in m_n
    )


def default_true_params(geometry: LinkGeometry) -> tuple[JointParams, ...]:
    m_true = link_inertia_diagonal(geometry)
    return tuple(
        JointParams(
            J=DEFAULT_MOTOR_INERTIA * INERTIA_MISMATCH,
            m=float(m),
            b_J=0.01,
            b_m=0.02,
            k=DEFAULT_STIFFNESS,
        )
        for m in m_true
    )


def default_friction(n: int) -> Friction:
    zeros = (0.0,) * n
    return Friction(
        coulomb_J=(DEFAULT_COULOMB,) * n,
        coulomb_m=zeros,
        ripple_amplitude=zeros,
        ripple_periods=zeros,
    )


def default_scenario(name: str = "default", **overrides) -> Scenario:
    """Three-joint arm at rest holding zero references, with model mismatch."""
    geometry = overrides.pop("geometry", None) or default_geometry()
    n = geometry.n
    fields = dict(
        name=name,
        geometry=geometry,
        true_params=default_true_params(geometry),
        nominal_params=default_nominal_params(geometry),
        modes=tuple(PositionMode(Constant(0.0)) for _ in range(n)),
        friction=default_friction(n),
        environment=None,
        payloads=(),
        dob_bandwidth=(DEFAULT_DOB_BANDWIDTH,) * n,
        controller_poles=(DEFAULT_POLES,) * n,
        dt=1e-4,
        duration=1.0,
    )
    fields.update(overrides)
    return Scenario(**fields)


PAYLOADS = (
    PayloadEvent(time=0.0, location="link_midspan", mass=1.0, joint=1),
    PayloadEvent(time=3.0, location="tip", mass=2.5),
)

RISE = 0.2
FORCE_STEPS = ((0.5, (4.0, 2.0, 1.0)), (2.5, (8.0, 4.0, 2.0)))


def _force_campaign(name, K_e, D_e) -> Scenario:
    n = 3
    modes = tuple(
        ForceMode(SmoothedSteps(0.0, tuple((t, lv[i]) for t, lv in FORCE_STEPS), RISE))
        for i in range(n)
    )
    env = Environment(
        M_e=(0.0,) * n, D_e=(D_e,) * n, K_e=(K_e,) * n, q_e=(0.0,) * n, active=(True,) * n
    )
    return default_scenario(name, modes=modes, environment=env, duration=4.5, metrics_start=1.0)


def builtin_campaigns() -> list[Scenario]:
    """The four simulation campaigns: step, sinusoid, soft contact, stiff contact."""
    steps = (
        SmoothedSteps(0.0, ((0.5, 0.5), (4.5, -0.3)), RISE),
        SmoothedSteps(0.0, ((0.5, -0.6), (4.5, 0.4)), RISE),
        SmoothedSteps(0.0, ((0.5, 0.8), (4.5, 0.2)), RISE),
    )
    sines = (
        Sinusoid(0.0, 0.4, 0.5),
        Sinusoid(0.0, 0.5, 0.4),
        Sinusoid(0.0, 0.6, 0.6),
    )
    return [
        default_scenario(
            "position_regulation",
            modes=tuple(PositionMode(s) for s in steps),
            payloads=PAYLOADS,
            duration=6.0,
        ),
        default_scenario(
            "trajectory_tracking",
            modes=tuple(PositionMode(s) for s in sines),
            payloads=PAYLOADS,
            duration=6.0,
            metrics_start=1.0,
        ),
        _force_campaign("force_soft_contact", K_e=100.0, D_e=5.0),
        _force_campaign("force_stiff_contact", K_e=10000.0, D_e=50.0),
    ]


def campaign(name: str) -> Scenario:
    for sc in builtin_campaigns():
        if sc.name == name:
            return sc
    raise ScenarioError(f"unknown campaign {name!r}")
