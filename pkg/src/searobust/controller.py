"""Decentralised robust position / force controller.

Each joint runs its own second-order disturbance observer. In position mode
the estimates are pushed through the Brunovsky transformation to build a
disturbance-corrected canonical reference and a state-feedback law; in force
mode the motor is made to track ``q_m + tau_des / k_n`` with the matched
disturbance cancelled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .brunovsky import (
    CanonicalModel,
    build_canonical,
    control_law,
    generate_references,
    map_input_to_torque,
    place_poles,
    transform_disturbance,
)
from .dob2 import DobBank, DobGains, place_dob_poles
from .errors import DivergenceError
from .lyapunov import LyapunovCertificate, certify_gains, solve_lyapunov
from .model_nominal import JointParams, NominalModel, build_nominal_model

DEFAULT_POLES = (-20.0, -25.0, -30.0, -35.0)
DEFAULT_KP = 400.0
DEFAULT_KD = 40.0
GAIN_SIZE = 21


@dataclass(frozen=True)
class PositionMode:
    """Track a link trajectory ``q_m_des(t)``."""

    trajectory: object

    kind = "position"


@dataclass(frozen=True)
class ForceMode:
    """Track a spring-torque trajectory ``tau_des(t)``."""

    trajectory: object

    kind = "force"


class JointController:
    def __init__(
        self,
        index: int,
        params: JointParams,
        mode,
        dob_gains: DobGains,
        poles=DEFAULT_POLES,
        kp: float = DEFAULT_KP,
        kd: float = DEFAULT_KD,
    ):
        self.index = index
        self.params = params
        self.mode = mode
        self.gains = dob_gains.validate()
        self.model: NominalModel = build_nominal_model(params, index)
        self.canon: CanonicalModel = build_canonical(self.model)
        self.K = place_poles(self.canon, poles)
        self.kp = kp
        self.kd = kd
        if mode.kind == "position":
            self.certificate: LyapunovCertificate = certify_gains(
                self.canon.Lambda, self.canon.beta, self.K
            )
        else:
            self.certificate = solve_lyapunov(np.array([[0.0, 1.0], [-kp, -kd]]))
        # xi_1 = output_scale * q_m
        self.output_scale = float(self.canon.output_row[2])

    def reference(self, t: float) -> float:
        return float(self.mode.trajectory.derivatives(t)[0])

    def step_position(self, x, estimates, ref) -> float:
        """Torque from the canonical tracking law.

        ``estimates`` is ``(tau_hat, dtau_hat, ddtau_hat)`` from this joint's
        observer and ``ref`` holds the link reference and its first four
        derivatives.
        """
        Gamma, dGamma, ddGamma = transform_disturbance(*estimates, self.canon)
        y_ref = self.output_scale * np.asarray(ref, dtype=float)
        refs = generate_references(y_ref, Gamma, dGamma, ddGamma)
        v = control_law(self.canon.T @ x, refs, self.K, self.canon)
        return map_input_to_torque(v, self.canon, self.model)

    def step_force(self, x, estimates, ref) -> float:
        tau_hat = estimates[0]
        p = self.params
        drift = self.model.A @ x
        tau_des = ref
        # link acceleration of the nominal model, corrected by the estimate
        ddq_m = drift[3] - tau_hat[3]
        qJ_ref = x[2] + tau_des[0] / p.k
        dqJ_ref = x[3] + tau_des[1] / p.k
        ddqJ_ref = ddq_m + tau_des[2] / p.k
        accel = ddqJ_ref + self.kd * (dqJ_ref - x[1]) + self.kp * (qJ_ref - x[0])
        return float(p.J * (accel - drift[1] + tau_hat[1]))

    def law(self, x, estimates, ref) -> float:
        if self.mode.kind == "position":
            return self.step_position(x, estimates, ref)
        return self.step_force(x, estimates, ref)

    def command(self, x, estimates, t: float) -> float:
        return self.law(x, estimates, self.mode.trajectory.derivatives(t))

    def gain_vector(self) -> np.ndarray:
        """Coefficients ``g`` with ``u = g . [x, tau, dtau, ddtau, ref]`` (21 entries).

        Both laws are linear in their arguments, so probing with unit vectors
        recovers them exactly.
        """
        g = np.empty(GAIN_SIZE)
        for i in range(GAIN_SIZE):
            e = np.zeros(GAIN_SIZE)
            e[i] = 1.0
            g[i] = self.law(e[:4], (e[4:8], e[8:12], e[12:16]), e[16:])
        return g


class RobustController:
    """All joint controllers plus their stacked observer state ``Z`` (n, 3, 4)."""

    def __init__(
        self,
        nominal: Sequence[JointParams],
        modes: Sequence,
        dob_bandwidth: Sequence[float],
        poles=None,
        kp: float = DEFAULT_KP,
        kd: float = DEFAULT_KD,
        torque_limit: float | None = None,
    ):
        n = len(nominal)
        if poles is None:
            poles = [DEFAULT_POLES] * n
        self.joints = [
            JointController(i, nominal[i], modes[i], place_dob_poles(dob_bandwidth[i]),
                            poles[i], kp, kd)
            for i in range(n)
        ]
        self.bank = DobBank([j.model for j in self.joints], [j.gains for j in self.joints])
        self.torque_limit = torque_limit
        self.Z: np.ndarray | None = None
        self.u: np.ndarray = np.zeros(n)

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def certificates(self) -> list[LyapunovCertificate]:
        return [j.certificate for j in self.joints]

    def reset(self, X) -> None:
        X = np.asarray(X, dtype=float)
        self.Z = self.bank.cold_start(X)
        self.u = np.zeros(self.n)

    def estimates(self, X):
        return self.bank.estimates(self.Z, X)

    def command(self, X, t: float) -> np.ndarray:
        """Evaluate every joint's law with the current observer state."""
        X = np.asarray(X, dtype=float)
        tau, dtau, ddtau = self.estimates(X)
        u = np.empty(self.n)
        for i, joint in enumerate(self.joints):
            try:
                u[i] = joint.command(X[i], (tau[i], dtau[i], ddtau[i]), t)
            except DivergenceError as exc:
                raise DivergenceError(f"joint {i}: {exc}", joint=i, time=t) from exc
        if not np.all(np.isfinite(u)):
            bad = int(np.argwhere(~np.isfinite(u))[0, 0])
            raise DivergenceError(f"non-finite command at joint {bad}, t={t:.6g}",
                                  joint=bad, time=t)
        if self.torque_limit is not None:
            u = np.clip(u, -self.torque_limit, self.torque_limit)
        self.u = u
        return u

    def gain_matrix(self) -> np.ndarray:
        return np.stack([j.gain_vector() for j in self.joints])
