"""Shared test oracles."""

import mpmath
import numpy as np

from searobust.brunovsky import build_canonical
from searobust.model_nominal import build_nominal_model


def exact_product(*mats, dps: int = 50) -> np.ndarray:
    """Product of float matrices evaluated in extended precision, then rounded.

    Removes the evaluation round-off (about eps * cond) so the residual
    reflects the matrices themselves.
    """
    with mpmath.workdps(dps):
        acc = mpmath.matrix(np.asarray(mats[0], dtype=float).tolist())
        for M in mats[1:]:
            acc = acc * mpmath.matrix(np.asarray(M, dtype=float).tolist())
        return np.array(acc.tolist(), dtype=float)


def companion_residuals(params) -> dict:
    """Brunovsky exactness measures for one joint."""
    model = build_nominal_model(params)
    canon = build_canonical(model)
    S = exact_product(canon.T, model.A, canon.T_inv)
    S_double = canon.T @ model.A @ canon.T_inv
    char = np.poly(model.A)
    q_expected = np.array([0.0, 0.0, params.m * params.J / params.k, 0.0])
    # the shift rows hold 0/1 entries and are compared absolutely; the
    # companion row can reach 1e7, so it is compared relative to its size
    scale = max(1.0, float(np.abs(canon.a).max()))
    return {
        "shift_rows": float(np.abs(S[:3] - np.eye(4)[1:]).max()),
        "companion_row": float(np.abs(S[3] - canon.a).max() / scale),
        "companion_double": float(np.abs(S_double[:3] - np.eye(4)[1:]).max()),
        "a_vs_charpoly": float(np.abs(canon.a + char[:0:-1]).max() / np.abs(char).max()),
        "Tb": float(np.abs(canon.T @ model.b - np.eye(4)[3]).max()),
        "q": float(np.abs(canon.T[0] - q_expected).max()),
    }


def log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
