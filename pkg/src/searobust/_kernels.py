"""Compiled right-hand sides for the plant and the observer bank.

Everything here works on plain arrays so it can be jitted; the classes in
``plant`` and ``dob2`` pack their parameters into the layouts below.

Joint parameter block ``jp`` has one row per joint::

    [J, b_J, k, b_m, m_decoupled, coulomb_J, coulomb_m, ripple_a, ripple_p,
     env_active, M_e, D_e, K_e, q_e]
"""

import numpy as np
from numba import njit

JP_FIELDS = (
    "J", "b_J", "k", "b_m", "m", "coulomb_J", "coulomb_m", "ripple_a", "ripple_p",
    "env_active", "M_e", "D_e", "K_e", "q_e",
)  # fmt: skip
(J_, BJ_, K_, BM_, M_, CJ_, CM_, RA_, RP_, EA_, ME_, DE_, KE_, QE_) = range(len(JP_FIELDS))


@njit(cache=True)
def link_terms(q, dq, seg, mass, rot, gravity):
    """Inertia matrix, Coriolis/centripetal vector and gravity vector."""
    nb, n = seg.shape
    theta = np.cumsum(q)
    omega2 = np.cumsum(dq) ** 2
    c = np.cos(theta)
    s = np.sin(theta)
    M = rot.copy()
    h = np.zeros(n)
    G = np.zeros(n)
    Jx = np.empty(n)
    Jy = np.empty(n)
    for b in range(nb):
        accx = 0.0
        accy = 0.0
        acx = 0.0
        acy = 0.0
        for j in range(n - 1, -1, -1):
            accx -= seg[b, j] * s[j]
            accy += seg[b, j] * c[j]
            Jx[j] = accx
            Jy[j] = accy
            acx -= seg[b, j] * omega2[j] * c[j]
            acy -= seg[b, j] * omega2[j] * s[j]
        mb = mass[b]
        for i in range(n):
            h[i] += mb * (Jx[i] * acx + Jy[i] * acy)
            G[i] += gravity * mb * Jy[i]
            for j in range(n):
                M[i, j] += mb * (Jx[i] * Jx[j] + Jy[i] * Jy[j])
    return M, h, G


@njit(cache=True)
def contact_terms(q_m, dq_m, jp, has_env):
    n = q_m.shape[0]
    engaged = np.zeros(n, dtype=np.bool_)
    tau = np.zeros(n)
    added = np.zeros(n)
    if has_env:
        for i in range(n):
            if jp[i, EA_] > 0.5 and q_m[i] >= jp[i, QE_]:
                engaged[i] = True
                tau[i] = jp[i, KE_] * (q_m[i] - jp[i, QE_]) + jp[i, DE_] * dq_m[i]
                added[i] = jp[i, ME_]
    return engaged, tau, added


@njit(cache=True)
def friction_terms(X, jp, eps):
    n = X.shape[0]
    motor = np.empty(n)
    link = np.empty(n)
    for i in range(n):
        motor[i] = jp[i, CJ_] * np.tanh(X[i, 1] / eps) + jp[i, RA_] * np.sin(jp[i, RP_] * X[i, 0])
        link[i] = jp[i, CM_] * np.tanh(X[i, 3] / eps)
    return motor, link


@njit(cache=True)
def plant_rhs(X, u, jp, eps, has_env, coupled, seg, mass, rot, gravity):
    n = X.shape[0]
    q_m = X[:, 2].copy()
    dq_m = X[:, 3].copy()
    if coupled:
        M, h, G = link_terms(q_m, dq_m, seg, mass, rot, gravity)
    else:
        M = np.diag(jp[:, M_].copy())
        h = np.zeros(n)
        G = np.zeros(n)
    engaged, tau_env, added = contact_terms(q_m, dq_m, jp, has_env)
    fric_J, fric_m = friction_terms(X, jp, eps)
    dX = np.empty((n, 4))
    rhs = np.empty(n)
    for i in range(n):
        spring = jp[i, K_] * (X[i, 0] - X[i, 2])
        dX[i, 0] = X[i, 1]
        dX[i, 1] = (u[i] - spring - jp[i, BJ_] * X[i, 1] - fric_J[i]) / jp[i, J_]
        dX[i, 2] = X[i, 3]
        rhs[i] = spring - h[i] - jp[i, BM_] * X[i, 3] - G[i] - tau_env[i] - fric_m[i]
        M[i, i] += added[i]
    ddq = np.linalg.solve(M, rhs)
    for i in range(n):
        dX[i, 3] = ddq[i]
    return dX


@njit(cache=True)
def dob_rhs(Z, X, u, A, b, L):
    """Observer bank derivative. ``Z`` is (n, 3, 4), ``L`` is (n, 3)."""
    n = X.shape[0]
    dZ = np.empty_like(Z)
    for i in range(n):
        L1 = L[i, 0]
        L2 = L[i, 1]
        L3 = L[i, 2]
        for r in range(4):
            f = b[i, r] * u[i]
            for c in range(4):
                f += A[i, r, c] * X[i, c]
            x = X[i, r]
            z1 = Z[i, 0, r]
            dZ[i, 0, r] = -L1 * z1 + Z[i, 1, r] + L1 * f + (L1 * L1 - L2) * x
            dZ[i, 1, r] = -L2 * z1 + Z[i, 2, r] + L2 * f + (L1 * L2 - L3) * x
            dZ[i, 2, r] = -L3 * z1 + L3 * f + L3 * L1 * x
    return dZ


@njit(cache=True)
def control(X, Z, R, G, L, limit):
    """Per-joint torque ``u_i = G_i . [x_i, tau_hat_i, dtau_hat_i, ddtau_hat_i, r_i]``."""
    n = X.shape[0]
    u = np.empty(n)
    for i in range(n):
        acc = 0.0
        for c in range(4):
            x = X[i, c]
            acc += G[i, c] * x
            acc += G[i, 4 + c] * (Z[i, 0, c] - L[i, 0] * x)
            acc += G[i, 8 + c] * (Z[i, 1, c] - L[i, 1] * x)
            acc += G[i, 12 + c] * (Z[i, 2, c] - L[i, 2] * x)
        for c in range(5):
            acc += G[i, 16 + c] * R[i, c]
        if acc > limit:
            acc = limit
        elif acc < -limit:
            acc = -limit
        u[i] = acc
    return u


@njit(cache=True)
def closed_loop_rhs(X, Z, R, offset, jp, eps, has_env, coupled, seg, mass, rot, gravity, A, b, L, G, limit):
    Xm = X + offset
    u = control(Xm, Z, R, G, L, limit)
    dX = plant_rhs(X, u, jp, eps, has_env, coupled, seg, mass, rot, gravity)
    dZ = dob_rhs(Z, Xm, u, A, b, L)
    return dX, dZ, u


@njit(cache=True)
def rk4_step(X, Z, R0, R1, R2, offset, dt, jp, eps, has_env, coupled, seg, mass, rot, gravity,
             A, b, L, G, limit):
    """One classical RK4 step of plant, observers and control law together.

    ``R0``, ``R1``, ``R2`` are the references at the start, middle and end of
    the step; the observers and the law see the plant state shifted by the
    measurement ``offset``. Returns the new plant and observer states plus the
    torque and plant derivative at the start of the step.
    """
    h2 = 0.5 * dt
    k1, l1, u0 = closed_loop_rhs(X, Z, R0, offset, jp, eps, has_env, coupled, seg, mass, rot, gravity, A, b, L, G, limit)
    k2, l2, _ = closed_loop_rhs(X + h2 * k1, Z + h2 * l1, R1, offset, jp, eps, has_env, coupled, seg, mass, rot, gravity, A, b, L, G, limit)
    k3, l3, _ = closed_loop_rhs(X + h2 * k2, Z + h2 * l2, R1, offset, jp, eps, has_env, coupled, seg, mass, rot, gravity, A, b, L, G, limit)
    k4, l4, _ = closed_loop_rhs(X + dt * k3, Z + dt * l3, R2, offset, jp, eps, has_env, coupled, seg, mass, rot, gravity, A, b, L, G, limit)
    X_new = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Z_new = Z + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    return X_new, Z_new, u0, k1
