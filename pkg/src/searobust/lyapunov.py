"""Lyapunov certification of closed-loop tracking gains.

For ``A_cl = Lambda - beta K`` and ``Q > 0`` the solution ``P`` of

    A_cl^T P + P A_cl = -Q

gives ``V = e^T P e`` with ``dV/dt = -e^T Q e + 2 e^T P (Gamma_hat - Gamma)``
along the canonical tracking error, so the error is ultimately bounded by a
ball that shrinks with the disturbance-estimation error.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import CertificationError, ParameterError

RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class LyapunovCertificate:
    P: np.ndarray
    Q: np.ndarray
    residual_norm: float
    p_min_eig: float
    q_min_eig: float
    closed_loop_eigs: np.ndarray | None = None

    @property
    def valid(self) -> bool:
        return self.p_min_eig > 0 and self.q_min_eig > 0 and self.residual_norm < RESIDUAL_TOL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["P"] = self.P.tolist()
        d["Q"] = self.Q.tolist()
        eigs = self.closed_loop_eigs
        d["closed_loop_eigs"] = (
            None if eigs is None else [[float(z.real), float(z.imag)] for z in eigs]
        )
        d["valid"] = self.valid
        return d


def _check_spd(Q: np.ndarray) -> float:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ParameterError("Q must be square")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ParameterError("Q must be symmetric")
    q_min = float(np.linalg.eigvalsh(Q).min())
    if q_min <= 0:
        raise ParameterError(f"Q must be positive definite (min eigenvalue {q_min:.3g})")
    return q_min


def lyapunov_residual(A_cl, P, Q) -> float:
    return float(np.linalg.norm(A_cl.T @ P + P @ A_cl + Q, "fro"))


def solve_lyapunov(A_cl, Q=None) -> LyapunovCertificate:
    """Solve the continuous Lyapunov equation by Kronecker vectorisation.

    Raises ``CertificationError`` if ``A_cl`` is not Hurwitz or the
    resulting certificate does not meet the residual tolerance.
    """
    A_cl = np.asarray(A_cl, dtype=float)
    n = A_cl.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    q_min = _check_spd(Q)
    eigs = np.linalg.eigvals(A_cl)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real >= 0:
        raise CertificationError(
            f"closed loop is not Hurwitz: eigenvalue {worst.real:.6g}{worst.imag:+.6g}j"
        )
    I = np.eye(n)
    # vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P), column-major vec
    L = np.kron(I, A_cl.T) + np.kron(A_cl.T, I)
    P = np.linalg.solve(L, -Q.reshape(-1, order="F")).reshape((n, n), order="F")
    P = 0.5 * (P + P.T)
    cert = LyapunovCertificate(
        P=P,
        Q=Q,
        residual_norm=lyapunov_residual(A_cl, P, Q),
        p_min_eig=float(np.linalg.eigvalsh(P).min()),
        q_min_eig=q_min,
        closed_loop_eigs=eigs,
    )
    if not cert.valid:
        raise CertificationError(
            f"certificate rejected: residual={cert.residual_norm:.3g}, "
            f"min eig(P)={cert.p_min_eig:.3g}"
        )
    return cert


def certify_gains(Lambda, beta, K, Q=None) -> LyapunovCertificate:
    A_cl = np.asarray(Lambda) - np.outer(beta, K)
    return solve_lyapunov(A_cl, Q)


def ultimate_bound_estimate(cert: LyapunovCertificate, est_error_bound: float) -> float:
    """Radius outside which ``V`` strictly decreases.

    ``dV/dt < 0`` whenever ``|e| > 2 |P| eps / lambda_min(Q)`` for
    ``|Gamma_hat - Gamma| <= eps``.
    """
    if est_error_bound < 0:
        raise ParameterError("estimation error bound must be >= 0")
    if est_error_bound == 0:
        return 0.0
    return 2.0 * np.linalg.norm(cert.P, 2) * est_error_bound / cert.q_min_eig
