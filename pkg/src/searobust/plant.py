"""Ground-truth nonlinear dynamics of a planar serial robot driven by SEAs.

Motor side, per joint::

    J q_J'' = u - k (q_J - q_m) - b_J q_J' - tau_fric

Link side, coupled through the configuration-dependent inertia matrix::

    M(q_m) q_m'' + C(q_m, q_m') q_m' + b_m q_m' + G(q_m) = k (q_J - q_m) - tau_env

Joint states are stored row-wise as ``X[i] = [q_J, dq_J, q_m, dq_m]`` so that a
row is directly the state of the nominal per-joint model.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DivergenceError, ParameterError
from .model_nominal import JointParams, build_nominal_model

log = logging.getLogger(__name__)

COND_WARNING = 1e8


def _tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class LinkGeometry:
    """Planar serial chain; link ``i`` rotates about joint ``i``.

    ``com_offsets`` is the distance from joint ``i`` to the link's centre of
    mass and ``link_inertias`` the inertia about that centre of mass.
    ``gravity`` acts along -y; 0 means the arm moves in a horizontal plane.
    """

    lengths: tuple[float, ...]
    masses: tuple[float, ...]
    com_offsets: tuple[float, ...]
    link_inertias: tuple[float, ...]
    gravity: float = 0.0

    def __post_init__(self):
        for name in ("lengths", "masses", "com_offsets", "link_inertias"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        n = len(self.lengths)
        if not all(len(getattr(self, f)) == n for f in ("masses", "com_offsets", "link_inertias")):
            raise ParameterError("geometry arrays must all have the same length")
        if any(v <= 0 for v in self.lengths):
            raise ParameterError("link lengths must be > 0")
        if any(v <= 0 for v in self.masses):
            raise ParameterError("link masses must be > 0")
        if any(v < 0 for v in self.link_inertias):
            raise ParameterError("link inertias must be >= 0")

    @property
    def n(self) -> int:
        return len(self.lengths)

    @classmethod
    def uniform_rods(cls, lengths, masses, gravity=0.0) -> "LinkGeometry":
        lengths = _tuple(lengths)
        masses = _tuple(masses)
        return cls(
            lengths=lengths,
            masses=masses,
            com_offsets=tuple(0.5 * l for l in lengths),
            link_inertias=tuple(m * l * l / 12.0 for m, l in zip(masses, lengths)),
            gravity=gravity,
        )


@dataclass(frozen=True)
class Environment:
    """Per-joint Kelvin-Voigt wall engaged while ``q_m >= q_e``."""

    M_e: tuple[float, ...]
    D_e: tuple[float, ...]
    K_e: tuple[float, ...]
    q_e: tuple[float, ...]
    active: tuple[bool, ...]

    def __post_init__(self):
        for name in ("M_e", "D_e", "K_e", "q_e"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        object.__setattr__(self, "active", tuple(bool(a) for a in self.active))
        for name in ("M_e", "D_e", "K_e"):
            if any(v < 0 for v in getattr(self, name)):
                raise ParameterError(f"environment {name} must be >= 0")


@dataclass(frozen=True)
class PayloadEvent:
    """Point mass attached at ``time``.

    ``location`` is ``"tip"`` (end of the last link) or ``"link_midspan"``
    (halfway along link ``joint``, zero-based).
    """

    time: float
    location: str
    mass: float
    joint: int | None = None

    def __post_init__(self):
        if self.time < 0:
            raise ParameterError("payload time must be >= 0")
        if self.mass < 0:
            raise ParameterError("payload mass must be >= 0")
        if self.location not in ("tip", "link_midspan"):
            raise ParameterError(f"unknown payload location {self.location!r}")
        if self.location == "link_midspan" and self.joint is None:
            raise ParameterError("link_midspan payload needs a joint index")


@dataclass(frozen=True)
class Friction:
    """Unmodelled joint torques: smoothed Coulomb friction and position ripple.

    Coulomb friction is ``c * tanh(dq / epsilon)``; ripple is
    ``a * sin(periods * q_J)`` on the motor side.
    """

    coulomb_J: tuple[float, ...]
    coulomb_m: tuple[float, ...]
    ripple_amplitude: tuple[float, ...]
    ripple_periods: tuple[float, ...]
    epsilon: float = 1e-2

    def __post_init__(self):
        for name in ("coulomb_J", "coulomb_m", "ripple_amplitude", "ripple_periods"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        if self.epsilon <= 0:
            raise ParameterError("friction epsilon must be > 0")

    @classmethod
    def none(cls, n: int) -> "Friction":
        zeros = (0.0,) * n
        return cls(zeros, zeros, zeros, zeros)


@dataclass(frozen=True)
class World:
    """Everything the plant needs besides state and input.

    With ``geometry=None`` the links are decoupled and link ``i`` has the
    constant inertia ``true_params[i].m`` (no Coriolis, gravity or payloads).
    """

    true_params: tuple[JointParams, ...]
    geometry: LinkGeometry | None = None
    environment: Environment | None = None
    payloads: tuple[PayloadEvent, ...] = ()
    friction: Friction | None = None

    def __post_init__(self):
        object.__setattr__(self, "true_params", tuple(self.true_params))
        object.__setattr__(self, "payloads", tuple(self.payloads))
        for p in self.true_params:
            p.validate()
        n = len(self.true_params)
        if self.geometry is not None and self.geometry.n != n:
            raise ParameterError("geometry and joint parameter counts differ")
        if self.geometry is None and self.payloads:
            raise ParameterError("payload events require link geometry")
        for ev in self.payloads:
            if ev.joint is not None and not 0 <= ev.joint < n:
                raise ParameterError(f"payload joint {ev.joint} does not exist")

    @property
    def n(self) -> int:
        return len(self.true_params)

    def payloads_at(self, t: float) -> tuple[PayloadEvent, ...]:
        return tuple(ev for ev in self.payloads if ev.time <= t)


@dataclass
class RobotState:
    q_J: np.ndarray
    dq_J: np.ndarray
    q_m: np.ndarray
    dq_m: np.ndarray
    t: float = 0.0

    @classmethod
    def from_joint_states(cls, X, t=0.0) -> "RobotState":
        X = np.asarray(X, dtype=float)
        return cls(X[:, 0].copy(), X[:, 1].copy(), X[:, 2].copy(), X[:, 3].copy(), t)

    @classmethod
    def zeros(cls, n: int) -> "RobotState":
        return cls.from_joint_states(np.zeros((n, 4)))

    def joint_states(self) -> np.ndarray:
        return np.column_stack([self.q_J, self.dq_J, self.q_m, self.dq_m])


class _Bodies:
    """Mass elements of the chain, preprocessed for fast kinematics.

    Row ``b`` of ``seg`` holds the lever arm that body ``b`` sees along each
    link: full length for links before its own, its offset on its own link,
    zero afterwards.
    """

    def __init__(self, geometry: LinkGeometry, payloads: Sequence[PayloadEvent]):
        n = geometry.n
        links, offsets, masses, inertias = [], [], [], []
        for i in range(n):
            links.append(i)
            offsets.append(geometry.com_offsets[i])
            masses.append(geometry.masses[i])
            inertias.append(geometry.link_inertias[i])
        for ev in payloads:
            if ev.location == "tip":
                links.append(n - 1)
                offsets.append(geometry.lengths[-1])
            else:
                links.append(ev.joint)
                offsets.append(0.5 * geometry.lengths[ev.joint])
            masses.append(ev.mass)
            inertias.append(0.0)
        nb = len(links)
        seg = np.zeros((nb, n))
        ang = np.zeros((nb, n))
        for b, (i, r) in enumerate(zip(links, offsets)):
            seg[b, :i] = geometry.lengths[:i]
            seg[b, i] = r
            ang[b, : i + 1] = 1.0
        self.n = n
        self.seg = seg
        self.ang = ang
        self.mass = np.asarray(masses)
        self.inertia = np.asarray(inertias)
        self.gravity = geometry.gravity
        self.rot = (ang.T * self.inertia) @ ang

    def jacobians(self, q):
        theta = np.cumsum(q)
        c, s = np.cos(theta), np.sin(theta)
        # reverse cumulative sums: column k collects links k..n-1
        rc = np.cumsum((self.seg * c)[:, ::-1], axis=1)[:, ::-1]
        rs = np.cumsum((self.seg * s)[:, ::-1], axis=1)[:, ::-1]
        return -rs, rc, c, s, rc, rs

    def mass_matrix(self, q):
        return self.dynamics_terms(q, np.zeros(self.n))[0]

    def dynamics_terms(self, q, dq):
        """Return ``(M, h, G)`` with ``h = C(q, dq) dq``."""
        return _kernels.link_terms(
            np.asarray(q, dtype=float), np.asarray(dq, dtype=float),
            self.seg, self.mass, self.rot, self.gravity,
        )

    def mass_matrix_gradient(self, q):
        """``dM[k] = dM/dq_k``."""
        Jx, Jy, _, _, rc, rs = self.jacobians(q)
        n = self.n
        idx = np.maximum.outer(np.arange(n), np.arange(n))
        dM = np.empty((n, n, n))
        for k in range(n):
            cols = np.maximum(idx[k], k)
            dJx = -rc[:, cols]
            dJy = -rs[:, cols]
            t = (dJx.T * self.mass) @ Jx + (dJy.T * self.mass) @ Jy
            dM[k] = t + t.T
        return dM

    def potential(self, q):
        theta = np.cumsum(q)
        y = (self.seg * np.sin(theta)).sum(axis=1)
        return float(self.gravity * self.mass @ y)


@functools.lru_cache(maxsize=64)
def _bodies(geometry: LinkGeometry, payloads: tuple[PayloadEvent, ...]) -> _Bodies:
    return _Bodies(geometry, payloads)


def compute_link_dynamics(q_m, dq_m, geometry: LinkGeometry, payloads_active=()):
    """Inertia, Coriolis and gravity terms of the link chain.

    ``C`` is built from Christoffel symbols of ``M`` so that ``dM/dt - 2C`` is
    skew-symmetric.
    """
    q_m = np.asarray(q_m, dtype=float)
    dq_m = np.asarray(dq_m, dtype=float)
    bodies = _bodies(geometry, tuple(payloads_active))
    M, _, G = bodies.dynamics_terms(q_m, dq_m)
    dM = bodies.mass_matrix_gradient(q_m)
    # c_ijk = 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i); dM[k, i, j] = dM_ij/dq_k
    christoffel = 0.5 * (
        np.transpose(dM, (1, 2, 0)) + np.transpose(dM, (1, 0, 2)) - dM
    )
    C = christoffel @ dq_m
    cond = np.linalg.cond(M)
    if cond > COND_WARNING:
        log.warning("link inertia matrix is near singular (cond=%.3g)", cond)
    return M, C, G


class Plant:
    """Evaluator of the plant ODE for a fixed world.

    Packs the per-joint parameters once into the array layout used by the
    compiled kernels.
    """

    def __init__(self, world: World):
        self.world = world
        n = self.n = world.n
        friction = world.friction or Friction.none(n)
        env = world.environment
        self.eps = float(friction.epsilon)
        self.has_env = env is not None
        cols = {
            "J": [p.J for p in world.true_params],
            "b_J": [p.b_J for p in world.true_params],
            "k": [p.k for p in world.true_params],
            "b_m": [p.b_m for p in world.true_params],
            "m": [p.m for p in world.true_params],
            "coulomb_J": friction.coulomb_J,
            "coulomb_m": friction.coulomb_m,
            "ripple_a": friction.ripple_amplitude,
            "ripple_p": friction.ripple_periods,
        }
        if env is not None:
            cols.update(
                env_active=[float(a) for a in env.active],
                M_e=env.M_e, D_e=env.D_e, K_e=env.K_e, q_e=env.q_e,
            )
        self.jp = np.zeros((n, len(_kernels.JP_FIELDS)))
        for j, name in enumerate(_kernels.JP_FIELDS):
            if name in cols:
                self.jp[:, j] = cols[name]
        self.J, self.b_J, self.k, self.b_m, self.m = (self.jp[:, j].copy() for j in range(5))
        self._empty_seg = np.zeros((0, n))
        self._empty = np.zeros(0)
        self._eye = np.zeros((n, n))

    def bodies(self, payloads):
        if self.world.geometry is None:
            return None
        return _bodies(self.world.geometry, tuple(payloads))

    def kernel_args(self, bodies):
        """Positional arguments shared by the compiled plant kernels."""
        if bodies is None:
            return (self.jp, self.eps, self.has_env, False,
                    self._empty_seg, self._empty, self._eye, 0.0)
        return (self.jp, self.eps, self.has_env, True,
                bodies.seg, bodies.mass, bodies.rot, float(bodies.gravity))

    def link_terms(self, q_m, dq_m, bodies):
        if bodies is None:
            zeros = np.zeros(self.n)
            return np.diag(self.m), zeros, zeros.copy()
        return bodies.dynamics_terms(q_m, dq_m)

    def contact(self, q_m, dq_m):
        """Return ``(engaged, stiffness/damping torque, added inertia)``."""
        return _kernels.contact_terms(
            np.asarray(q_m, dtype=float), np.asarray(dq_m, dtype=float), self.jp, self.has_env
        )

    def friction(self, X):
        """Unmodelled motor-side and link-side friction torques."""
        return _kernels.friction_terms(np.asarray(X, dtype=float), self.jp, self.eps)

    def derivative(self, X, u, bodies, t=0.0):
        try:
            dX = _kernels.plant_rhs(
                np.ascontiguousarray(X, dtype=float), np.asarray(u, dtype=float),
                *self.kernel_args(bodies),
            )
        except np.linalg.LinAlgError:
            raise DivergenceError(f"singular or non-finite link dynamics at t={t:.6g}", time=t) from None
        check_finite(dX, t)
        return dX


def check_finite(dX, t):
    if not np.all(np.isfinite(dX)):
        bad = int(np.argwhere(~np.isfinite(dX))[0, 0])
        raise DivergenceError(
            f"non-finite plant derivative at joint {bad}, t={t:.6g}", joint=bad, time=t
        )


def _resolve_payloads(world, state, payloads_active):
    if payloads_active is None:
        return world.payloads_at(state.t)
    return tuple(payloads_active)


def plant_derivative(state: RobotState, u, world: World, payloads_active=None) -> np.ndarray:
    """Time derivative of the joint states, shape ``(n, 4)``."""
    plant = Plant(world)
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite input torque", time=state.t)
    bodies = plant.bodies(_resolve_payloads(world, state, payloads_active))
    return plant.derivative(state.joint_states(), u, bodies, state.t)


def true_disturbance(
    state: RobotState, u, world: World, nominal: Sequence[JointParams], payloads_active=None
) -> np.ndarray:
    """Lumped disturbance of each joint relative to its nominal model.

    Row ``i`` satisfies ``dx_i/dt = A_i x_i + b_i u_i - tau_i`` exactly.
    Used as a test oracle only.
    """
    dX = plant_derivative(state, u, world, payloads_active)
    return nominal_residual(state.joint_states(), u, dX, nominal)


def nominal_residual(X, u, dX, nominal: Sequence[JointParams]) -> np.ndarray:
    tau = np.empty_like(dX)
    for i, params in enumerate(nominal):
        model = build_nominal_model(params, i)
        tau[i] = model.A @ X[i] + model.b * u[i] - dX[i]
    return tau


def disturbance_breakdown(
    state: RobotState, u, world: World, nominal: Sequence[JointParams], payloads_active=None
) -> dict[str, np.ndarray]:
    """Physical disturbance torques split into their sources.

    Keys starting with ``matched_`` sum to the motor-side disturbance ``d_J``
    and keys starting with ``mismatched_`` to the link-side ``d_m``.
    """
    plant = Plant(world)
    u = np.asarray(u, dtype=float)
    bodies = plant.bodies(_resolve_payloads(world, state, payloads_active))
    X = state.joint_states()
    dX = plant.derivative(X, u, bodies, state.t)
    q_J, dq_J, q_m, dq_m = X.T
    ddq_J, ddq_m = dX[:, 1], dX[:, 3]
    J_n = np.array([p.J for p in nominal])
    m_n = np.array([p.m for p in nominal])
    bJ_n = np.array([p.b_J for p in nominal])
    bm_n = np.array([p.b_m for p in nominal])
    k_n = np.array([p.k for p in nominal])
    M, h, G = plant.link_terms(q_m, dq_m, bodies)
    engaged, tau_env, M_e = plant.contact(q_m, dq_m)
    fric_J, fric_m = plant.friction(X)
    diag = np.diag(M)
    deflection = q_J - q_m
    return {
        "matched_inertia": (plant.J - J_n) * ddq_J,
        "matched_viscous": (plant.b_J - bJ_n) * dq_J,
        "matched_stiffness": (plant.k - k_n) * deflection,
        "matched_unmodelled": fric_J,
        "mismatched_inertia": (diag - m_n) * ddq_m,
        "mismatched_coupling": M @ ddq_m - diag * ddq_m,
        "mismatched_coriolis": h,
        "mismatched_gravity": G,
        "mismatched_viscous": (plant.b_m - bm_n) * dq_m,
        # spring appears on the right-hand side of the link equation
        "mismatched_stiffness": (k_n - plant.k) * deflection,
        "mismatched_unmodelled": fric_m,
        "mismatched_contact": tau_env + M_e * ddq_m,
    }


def total_energy(state: RobotState, world: World, payloads_active=None) -> float:
    """Kinetic + spring + gravitational energy (contact energy excluded)."""
    plant = Plant(world)
    bodies = plant.bodies(_resolve_payloads(world, state, payloads_active))
    if bodies is None:
        M = np.diag(plant.m)
        potential = 0.0
    else:
        M = bodies.mass_matrix(state.q_m)
        potential = bodies.potential(state.q_m)
    kinetic = 0.5 * state.dq_m @ M @ state.dq_m + 0.5 * np.sum(plant.J * state.dq_J**2)
    spring = 0.5 * np.sum(plant.k * (state.q_J - state.q_m) ** 2)
    return float(kinetic + spring + potential)
