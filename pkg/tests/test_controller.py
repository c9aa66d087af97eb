import numpy as np
import pytest
from scipy.linalg import expm

from searobust import _kernels
from searobust.brunovsky import generate_references, transform_disturbance
from searobust.controller import (
    DEFAULT_POLES,
    ForceMode,
    JointController,
    PositionMode,
    RobustController,
)
from searobust.dob2 import place_dob_poles
from searobust.model_nominal import JointParams
from searobust.trajectories import Constant, Sinusoid, SmoothedSteps

SEA = JointParams(J=0.05, m=0.3, b_J=0.01, b_m=0.02, k=500.0)
GAINS = place_dob_poles(300.0)


def joint(mode, params=SEA, **kw):
    return JointController(0, params, mode, GAINS, **kw)


@pytest.mark.parametrize("mode", [PositionMode(Sinusoid(0.1, 0.4, 0.5)), ForceMode(Sinusoid(1.0, 2.0, 0.3))])
def test_gain_vector_reproduces_law(mode):
    jc = joint(mode)
    g = jc.gain_vector()
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=4)
        est = rng.normal(size=(3, 4))
        ref = rng.normal(size=5)
        u = jc.law(x, tuple(est), ref)
        assert g @ np.concatenate([x, est.ravel(), ref]) == pytest.approx(u, rel=1e-12, abs=1e-9)


def test_kernel_control_matches_python_path():
    nominal = [SEA, JointParams(J=0.06, m=0.1, k=300.0), JointParams(J=0.04, m=0.02, k=800.0)]
    modes = [PositionMode(SmoothedSteps(0.0, ((0.1, 0.5),), 0.2)), ForceMode(Sinusoid(2.0, 1.0, 1.0)),
             PositionMode(Sinusoid(0.0, 0.3, 0.7))]
    ctrl = RobustController(nominal, modes, [300.0, 500.0, 800.0], torque_limit=50.0)
    rng = np.random.default_rng(4)
    X = rng.normal(size=(3, 4)) * 0.1
    ctrl.reset(X)
    ctrl.Z = ctrl.Z + rng.normal(size=ctrl.Z.shape)
    G = ctrl.gain_matrix()
    for t in (0.0, 0.17, 0.9):
        u_py = ctrl.command(X, t)
        R = np.stack([j.mode.trajectory.derivatives(t) for j in ctrl.joints])
        u_k = _kernels.control(X, ctrl.Z, R, G, ctrl.bank.L, 50.0)
        np.testing.assert_allclose(u_k, u_py, rtol=1e-10, atol=1e-9)


def test_zero_inputs_give_zero_torque():
    for mode in (PositionMode(Constant(0.0)), ForceMode(Constant(0.0))):
        jc = joint(mode)
        zero = np.zeros(4)
        assert jc.command(zero, (zero, zero, zero), 0.0) == 0.0


def test_position_equilibrium():
    unit = JointParams(J=1.0, m=1.0, k=1.0)
    jc = joint(PositionMode(Constant(0.3)), params=unit)
    zero = np.zeros(4)
    u = jc.command(np.array([0.3, 0.0, 0.3, 0.0]), (zero, zero, zero), 1.0)
    assert u == pytest.approx(0.0, abs=1e-12)


def test_force_target_deflection():
    p = JointParams(J=0.05, m=0.3, k=100.0)
    zero = np.zeros(4)
    x = np.array([0.25, 0.0, 0.2, 0.0])  # deflection 0.05 rad = 5 N m / k_n
    u = [joint(ForceMode(Constant(5.0)), params=p, kp=kp).command(x, (zero, zero, zero), 0.0)
         for kp in (100.0, 400.0, 1600.0)]
    # the proportional term vanishes at the target deflection
    assert u[0] == pytest.approx(u[1], rel=1e-12) and u[1] == pytest.approx(u[2], rel=1e-12)
    at_rest = joint(ForceMode(Constant(0.0)), params=p).command(
        np.array([0.1, 0.0, 0.1, 0.0]), (zero, zero, zero), 0.0
    )
    assert at_rest == pytest.approx(0.0, abs=1e-12)


def test_certificates():
    jc = joint(PositionMode(Constant(0.0)))
    assert jc.certificate.valid
    eigs = np.sort(np.linalg.eigvals(jc.canon.Lambda - np.outer(jc.canon.beta, jc.K)).real)
    np.testing.assert_allclose(eigs, sorted(DEFAULT_POLES), rtol=1e-8)
    assert joint(ForceMode(Constant(0.0))).certificate.valid


def _simulate_nominal(jc, x0, tau, duration, dt=1e-4, perfect=True):
    """Nominal linear joint with constant disturbance ``tau``; RK4."""
    A, b = jc.model.A, jc.model.b
    x = np.array(x0, dtype=float)
    z = np.stack([jc.gains.L1 * x, jc.gains.L2 * x, jc.gains.L3 * x])
    L = np.array(jc.gains.as_tuple())[:, None]

    def rhs(t, x, z):
        if perfect:
            est = (tau, np.zeros(4), np.zeros(4))
        else:
            est = tuple(z - L * x)
        u = jc.command(x, est, t)
        dx = A @ x + b * u - tau
        f = A @ x + b * u
        dz = np.stack([
            -jc.gains.L1 * z[0] + z[1] + jc.gains.L1 * f + (jc.gains.L1**2 - jc.gains.L2) * x,
            -jc.gains.L2 * z[0] + z[2] + jc.gains.L2 * f + (jc.gains.L1 * jc.gains.L2 - jc.gains.L3) * x,
            -jc.gains.L3 * z[0] + jc.gains.L3 * f + jc.gains.L3 * jc.gains.L1 * x,
        ])
        return dx, dz

    xs = [x.copy()]
    for k in range(int(round(duration / dt))):
        t = k * dt
        k1 = rhs(t, x, z)
        k2 = rhs(t + dt / 2, x + dt / 2 * k1[0], z + dt / 2 * k1[1])
        k3 = rhs(t + dt / 2, x + dt / 2 * k2[0], z + dt / 2 * k2[1])
        k4 = rhs(t + dt, x + dt * k3[0], z + dt * k3[1])
        x = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        z = z + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        xs.append(x.copy())
    return np.array(xs)


def test_tracking_error_follows_expm():
    jc = joint(PositionMode(Constant(0.2)))
    tau = np.array([0.0, 3.0, 0.0, -1.5])
    x0 = np.array([0.05, 0.0, -0.1, 0.3])
    dt = 1e-4
    xs = _simulate_nominal(jc, x0, tau, 0.3, dt=dt)
    T = jc.canon.T
    zero = np.zeros(4)
    Gamma = transform_disturbance(tau, zero, zero, jc.canon)
    xi_ref = generate_references(jc.output_scale * np.array([0.2, 0, 0, 0, 0]), *Gamma).xi_ref
    A_cl = jc.canon.Lambda - np.outer(jc.canon.beta, jc.K)
    e0 = T @ x0 - xi_ref
    for k in (500, 1500, 3000):
        expected = expm(A_cl * k * dt) @ e0
        np.testing.assert_allclose(T @ xs[k] - xi_ref, expected, atol=1e-8 * max(1.0, np.abs(e0).max()))


def test_disturbance_rejection_with_observer():
    jc = joint(PositionMode(Constant(0.2)))
    tau = np.array([0.0, 20.0, 0.0, -6.0])  # matched and mismatched, constant
    xs = _simulate_nominal(jc, np.zeros(4), tau, 2.0, perfect=False)
    assert abs(xs[-1, 2] - 0.2) < 1e-6
    assert abs(xs[-1, 3]) < 1e-6


def test_force_mode_at_rest_stays_at_rest():
    jc = joint(ForceMode(Constant(0.0)))
    xs = _simulate_nominal(jc, np.zeros(4), np.zeros(4), 0.5, perfect=False)
    np.testing.assert_array_equal(xs, 0.0)


def test_decentralized_under_permutation():
    nominal = [SEA, JointParams(J=0.06, m=0.1, k=300.0), JointParams(J=0.04, m=0.02, k=800.0)]
    modes = [PositionMode(Sinusoid(0.0, 0.3, 0.7)), ForceMode(Constant(2.0)), PositionMode(Constant(-0.2))]
    bw = [300.0, 500.0, 800.0]
    perm = [2, 0, 1]
    a = RobustController(nominal, modes, bw)
    b = RobustController([nominal[i] for i in perm], [modes[i] for i in perm], [bw[i] for i in perm])
    rng = np.random.default_rng(9)
    X = rng.normal(size=(3, 4)) * 0.1
    a.reset(X)
    b.reset(X[perm])
    noise = rng.normal(size=a.Z.shape)
    a.Z = a.Z + noise
    b.Z = b.Z + noise[perm]
    np.testing.assert_array_equal(a.command(X, 0.3)[perm], b.command(X[perm], 0.3))


def test_torque_limit_clamps():
    ctrl = RobustController([SEA], [PositionMode(Constant(1.0))], [300.0], torque_limit=0.5)
    ctrl.reset(np.zeros((1, 4)))
    assert ctrl.command(np.zeros((1, 4)), 0.0)[0] == 0.5
