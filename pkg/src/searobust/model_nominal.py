"""Decentralized per-joint linear model of an SEA joint.

Each joint is described by the state ``x = [q_J, dq_J, q_m, dq_m]`` and

    dx/dt = A x + b u - tau_dis

where ``u`` is the motor torque and ``tau_dis = [0, d_J/J, 0, d_m/m]`` lumps
everything the nominal model does not capture (matched motor-side torque
``d_J`` and mismatched link-side torque ``d_m``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructureError


@dataclass(frozen=True)
class JointParams:
    """Physical parameters of one SEA joint.

    Attributes:
        J: motor inertia (kg m^2).
        m: link inertia (kg m^2).
        b_J: motor viscous friction (N m s/rad).
        b_m: link viscous friction (N m s/rad).
        k: spring stiffness (N m/rad).
    """

    J: float
    m: float
    b_J: float = 0.0
    b_m: float = 0.0
    k: float = 1.0

    def validate(self) -> "JointParams":
        for name in ("J", "m", "k"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{name} must be > 0, got {value}")
        for name in ("b_J", "b_m"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be >= 0, got {value}")
        return self


@dataclass(frozen=True)
class NominalModel:
    A: np.ndarray
    b: np.ndarray
    joint_index: int = 0
    params: JointParams | None = None


def build_nominal_model(params: JointParams, joint_index: int = 0) -> NominalModel:
    """Return the (A, b) pair of the nominal linear joint model."""
    params.validate()
    J, m, k = params.J, params.m, params.k
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-k / J, -params.b_J / J, k / J, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [k / m, 0.0, -k / m, -params.b_m / m],
        ]
    )
    b = np.array([0.0, 1.0 / J, 0.0, 0.0])
    A.flags.writeable = False
    b.flags.writeable = False
    return NominalModel(A=A, b=b, joint_index=joint_index, params=params)


def controllability_matrix(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    cols = [b]
    for _ in range(A.shape[0] - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def matched_mismatched_split(dist, params: JointParams) -> tuple[float, float]:
    """Split a lumped disturbance vector into physical torques.

    Returns ``(J * dist[1], m * dist[3])``: the motor-side (matched) and
    link-side (mismatched) disturbance torques in N m.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (4,):
        raise StructureError(f"disturbance must be a 4-vector, got shape {dist.shape}")
    if dist[0] != 0.0 or dist[2] != 0.0:
        raise StructureError(
            "disturbance must vanish on the kinematic rows (components 1 and 3)"
        )
    return float(params.J * dist[1]), float(params.m * dist[3])
