"""Second-order disturbance observer for one SEA joint.

The observer tracks the auxiliary variables

    z1 = tau + L1 x,   z2 = dtau + L2 x,   z3 = ddtau + L3 x

and recovers the disturbance and its first two derivatives from them. The
estimation error ``e = z - z_hat`` obeys, channel by channel,

    de/dt = E e + [0, 0, 1]^T dddtau,   E = [[-L1, 1, 0], [-L2, 0, 1], [-L3, 0, 0]]

so it converges exactly whenever the disturbance is a quadratic in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceError, ParameterError
from .model_nominal import NominalModel


@dataclass(frozen=True)
class DobGains:
    L1: float
    L2: float
    L3: float

    def is_hurwitz(self) -> bool:
        return self.L1 > 0 and self.L3 > 0 and self.L1 * self.L2 > self.L3

    def validate(self) -> "DobGains":
        if not self.is_hurwitz():
            raise ParameterError(
                f"observer polynomial s^3 + {self.L1} s^2 + {self.L2} s + {self.L3} is not Hurwitz"
            )
        return self

    def error_matrix(self) -> np.ndarray:
        """Per-channel estimation error matrix ``E``."""
        return np.array([[-self.L1, 1.0, 0.0], [-self.L2, 0.0, 1.0], [-self.L3, 0.0, 0.0]])

    def error_response(self, omega: float) -> complex:
        """Transfer function from disturbance to estimation error at ``j omega``.

        ``tau - tau_hat = s^3 / (s^3 + L1 s^2 + L2 s + L3) * tau``.
        """
        s = 1j * omega
        return s**3 / (s**3 + self.L1 * s**2 + self.L2 * s + self.L3)

    def as_tuple(self):
        return (self.L1, self.L2, self.L3)


@dataclass
class DobState:
    z1_hat: np.ndarray
    z2_hat: np.ndarray
    z3_hat: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.z1_hat, self.z2_hat, self.z3_hat])

    @classmethod
    def from_array(cls, Z) -> "DobState":
        Z = np.asarray(Z, dtype=float)
        return cls(Z[0].copy(), Z[1].copy(), Z[2].copy())

    @classmethod
    def cold_start(cls, x, gains: DobGains) -> "DobState":
        """Observer state whose disturbance estimates are all zero."""
        x = np.asarray(x, dtype=float)
        return cls(gains.L1 * x, gains.L2 * x, gains.L3 * x)


def place_dob_poles(bandwidth: float) -> DobGains:
    """Gains giving a triple observer pole at ``-bandwidth``."""
    if not np.isfinite(bandwidth) or bandwidth <= 0:
        raise ParameterError(f"observer bandwidth must be > 0, got {bandwidth}")
    g = float(bandwidth)
    return DobGains(3.0 * g, 3.0 * g * g, g**3)


def dob_derivative(dob: DobState, x, u: float, model: NominalModel, gains: DobGains) -> DobState:
    x = np.asarray(x, dtype=float)
    dZ = _kernels.dob_rhs(
        dob.as_array()[None], x[None], np.array([float(u)]),
        model.A[None], model.b[None], np.array([gains.as_tuple()]),
    )[0]
    if not np.all(np.isfinite(dZ)):
        raise DivergenceError(f"non-finite observer derivative (joint {model.joint_index})",
                              joint=model.joint_index)
    return DobState.from_array(dZ)


def extract_estimates(dob: DobState, x, gains: DobGains):
    """Return ``(tau_hat, dtau_hat, ddtau_hat)``."""
    x = np.asarray(x, dtype=float)
    return (
        dob.z1_hat - gains.L1 * x,
        dob.z2_hat - gains.L2 * x,
        dob.z3_hat - gains.L3 * x,
    )


def auxiliary_variables(tau, dtau, ddtau, x, gains: DobGains) -> DobState:
    """Map a disturbance and its derivatives to the auxiliary variables."""
    x = np.asarray(x, dtype=float)
    return DobState(
        np.asarray(tau, dtype=float) + gains.L1 * x,
        np.asarray(dtau, dtype=float) + gains.L2 * x,
        np.asarray(ddtau, dtype=float) + gains.L3 * x,
    )


class DobBank:
    """Observers for all joints advanced together.

    Gains may differ per joint; ``rhs`` operates on the stacked auxiliary
    state of shape ``(n, 3, 4)``.
    """

    def __init__(self, models, gains):
        self.models = list(models)
        self.gains = list(gains)
        for g in self.gains:
            g.validate()
        self.A = np.stack([m.A for m in self.models])
        self.b = np.stack([m.b for m in self.models])
        self.L = np.array([g.as_tuple() for g in self.gains])
        self.L1, self.L2, self.L3 = (self.L[:, i, None] for i in range(3))

    def cold_start(self, X) -> np.ndarray:
        return np.stack([self.L1 * X, self.L2 * X, self.L3 * X], axis=1)

    def rhs(self, Z, X, u):
        return _kernels.dob_rhs(Z, np.asarray(X, dtype=float), np.asarray(u, dtype=float),
                                self.A, self.b, self.L)

    def estimates(self, Z, X):
        return (Z[:, 0] - self.L1 * X, Z[:, 1] - self.L2 * X, Z[:, 2] - self.L3 * X)
