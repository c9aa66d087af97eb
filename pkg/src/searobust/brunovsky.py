"""Brunovsky canonical form of the per-joint model and reference generation.

With ``xi = T x`` the nominal joint model becomes an integrator chain

    dxi/dt = Lambda xi + beta v - Gamma,   Gamma = T tau_dis

where ``beta = e4`` and the bottom row of ``Lambda`` holds the negated
characteristic-polynomial coefficients ``a``. For an SEA joint the first
canonical coordinate is ``xi_1 = (m J / k) q_m``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import SynthesisError
from .model_nominal import NominalModel, controllability_matrix

COND_LIMIT = 1e12


@dataclass(frozen=True)
class CanonicalModel:
    T: np.ndarray
    T_inv: np.ndarray
    Lambda: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    input_gain: float = 1.0

    @property
    def output_row(self) -> np.ndarray:
        return self.T[0]


@dataclass(frozen=True)
class CanonicalRefs:
    """Canonical state reference plus the data the control law consumes.

    ``snap`` is the fourth derivative of the canonical output reference;
    ``Gamma``, ``dGamma`` and ``ddGamma`` are the transformed disturbance
    estimate and its first two derivative estimates.
    """

    xi_ref: np.ndarray
    snap: float
    Gamma: np.ndarray
    dGamma: np.ndarray
    ddGamma: np.ndarray


def _exact_inverse(M: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gauss-Jordan inverse in rational arithmetic."""
    n = len(M)
    aug = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise SynthesisError("transformation matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * w for v, w in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _row_times(row, M):
    return [sum(row[k] * M[k][j] for k in range(len(row))) for j in range(len(M[0]))]


def build_canonical(model: NominalModel) -> CanonicalModel:
    """Transformation ``T`` with rows ``q, qA, qA^2, qA^3`` and ``q^T C = e4^T``.

    The float ``A`` and ``b`` are converted exactly to rationals, so ``T``,
    ``T^-1`` and the companion row are each correctly rounded; a float
    construction loses up to ``eps * cond(T)`` to cancellation.
    """
    A, b = model.A, model.b
    n = A.shape[0]
    cond = np.linalg.cond(controllability_matrix(A, b))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SynthesisError(
            f"controllability matrix of joint {model.joint_index} is ill-conditioned "
            f"(cond={cond:.3g}); rescale the joint parameters"
        )
    Af = [[Fraction(float(v)) for v in row] for row in A]
    cols = [[Fraction(float(v)) for v in b]]
    for _ in range(n - 1):
        cols.append([sum(Af[i][k] * cols[-1][k] for k in range(n)) for i in range(n)])
    # q^T C = e4^T  <=>  q^T = e4^T C^-1, the last row of C^-1
    C = [[cols[j][i] for j in range(n)] for i in range(n)]
    q = _exact_inverse(C)[-1]
    rows = [q]
    for _ in range(n - 1):
        rows.append(_row_times(rows[-1], Af))
    T_inv_f = _exact_inverse(rows)
    a_f = _row_times(_row_times(rows[-1], Af), T_inv_f)
    input_gain = sum(rows[-1][k] * cols[0][k] for k in range(n))

    T = np.array(rows, dtype=float)
    T_inv = np.array(T_inv_f, dtype=float)
    a = np.array(a_f, dtype=float)
    Lambda = np.zeros((n, n))
    Lambda[:-1, 1:] = np.eye(n - 1)
    Lambda[-1] = a
    beta = np.zeros(n)
    beta[-1] = 1.0
    return CanonicalModel(
        T=T, T_inv=T_inv, Lambda=Lambda, beta=beta, a=a, input_gain=float(input_gain)
    )


def place_poles(canon: CanonicalModel, poles) -> np.ndarray:
    """Gain ``K`` such that ``Lambda - beta K`` has the requested poles."""
    poles = np.asarray(poles)
    if poles.shape != (len(canon.a),):
        raise ValueError(f"need {len(canon.a)} poles, got {poles.shape}")
    coeffs = np.real(np.poly(poles))
    return canon.a + coeffs[::-1][:-1]


def transform_disturbance(tau_hat, dtau_hat, ddtau_hat, canon: CanonicalModel):
    T = canon.T
    return T @ tau_hat, T @ dtau_hat, T @ ddtau_hat


def generate_references(y_ref, Gamma, dGamma, ddGamma) -> CanonicalRefs:
    """Canonical state reference corrected by the disturbance estimates.

    ``y_ref`` holds the canonical output reference and its derivatives up to
    order four.
    """
    y0, y1, y2, y3, y4 = (float(v) for v in y_ref)
    xi_ref = np.array(
        [
            y0,
            y1 + Gamma[0],
            y2 + dGamma[0] + Gamma[1],
            y3 + ddGamma[0] + dGamma[1] + Gamma[2],
        ]
    )
    return CanonicalRefs(
        xi_ref=xi_ref,
        snap=y4,
        Gamma=np.asarray(Gamma),
        dGamma=np.asarray(dGamma),
        ddGamma=np.asarray(ddGamma),
    )


def control_law(xi, refs: CanonicalRefs, K, canon: CanonicalModel) -> float:
    """Canonical input for the disturbance-corrected tracking law.

    The disturbance feedforward needs ``Gamma_1'''``, which a second-order
    observer cannot supply; it is dropped. For an SEA joint ``Gamma_1`` is
    identically zero, so nothing is lost there.
    """
    G, dG, ddG = refs.Gamma, refs.dGamma, refs.ddGamma
    feedforward = ddG[1] + dG[2] + G[3]
    return float(
        refs.snap
        + np.dot(K, refs.xi_ref - np.asarray(xi))
        + feedforward
        - np.dot(canon.a, refs.xi_ref)
    )


def map_input_to_torque(v: float, canon: CanonicalModel, model: NominalModel | None = None) -> float:
    """Motor torque realising canonical input ``v`` (``T b = input_gain * e4``)."""
    return v / canon.input_gain
