import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from gftlqr.dyn2r import ManipulatorParams, linearize
from gftlqr.riccati import (
    GainMatrix,
    LqrWeights,
    NoStabilizingSolution,
    care_residual,
    feedback_torque,
    lqr,
    lqr_gain,
    solve_care,
)

DI_A = np.array([[0.0, 1.0], [0.0, 0.0]])
DI_B = np.array([[0.0], [1.0]])


def test_double_integrator_closed_form():
    P = solve_care(DI_A, DI_B, np.eye(2), np.array([[1.0]]))
    s3 = math.sqrt(3.0)
    assert P == pytest.approx(np.array([[s3, 1.0], [1.0, s3]]), abs=1e-12)
    K = lqr_gain(P, DI_B, np.array([[1.0]])).K
    assert K == pytest.approx(np.array([[1.0, s3]]), abs=1e-6)


def test_scalar_case():
    P = solve_care(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    assert P[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert lqr_gain(P, np.ones((1, 1)), np.ones((1, 1))).K[0, 0] == pytest.approx(1.0)


def test_unstabilizable_raises():
    A = np.diag([1.0, -1.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(NoStabilizingSolution):
        solve_care(A, B, np.eye(2), np.eye(1))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_care(np.eye(3), DI_B, np.eye(2), np.eye(1))


def _random_system(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 2))
    return A, B, rng


def _pbh_margin(A, B):
    return min(
        np.linalg.svd(np.hstack([A - lam * np.eye(4), B]), compute_uv=False)[-1]
        for lam in np.linalg.eigvals(A)
    )


@given(st.integers(0, 2**32 - 1))
def test_random_systems_match_scipy(seed):
    A, B, rng = _random_system(seed)
    if _pbh_margin(A, B) < 0.1:
        return
    Q = np.diag(10.0 ** rng.uniform(-2, 3, 4))
    R = np.diag(10.0 ** rng.uniform(-3, 1, 2))
    P = solve_care(A, B, Q, R)
    ref = scipy.linalg.solve_continuous_are(A, B, Q, R)
    assert np.max(np.abs(P - ref)) <= 1e-6 * max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(care_residual(A, B, Q, R, P))) <= 1e-8 * max(1.0, np.max(np.abs(Q)))
    assert np.array_equal(P, P.T)
    assert np.min(np.linalg.eigvalsh(P)) >= -1e-9 * np.max(np.abs(P))
    K = lqr_gain(P, B, R).K
    assert np.max(np.linalg.eigvals(A - B @ K).real) < 0


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_gain_homogeneous_in_weights(c, seed):
    rng = np.random.default_rng(seed)
    A, B = linearize(ManipulatorParams.nominal(), (0.0, rng.uniform(-3, 3)))
    w = LqrWeights(tuple(10.0 ** rng.uniform(-1, 4, 4)), (1e-2, 1e-2))
    ws = LqrWeights(tuple(c * q for q in w.q), tuple(c * r for r in w.r))
    K1, K2 = lqr(A, B, w).K, lqr(A, B, ws).K
    assert K2 == pytest.approx(K1, rel=1e-7, abs=1e-9)


def test_gain_depends_on_r():
    A, B = linearize(ManipulatorParams.nominal(), (0.0, 0.3))
    q = (100.0, 100.0, 10.0, 10.0)
    assert not np.allclose(lqr(A, B, LqrWeights(q, (1e-4, 1e-4))).K, lqr(A, B, LqrWeights(q, (1e-2, 1e-2))).K)


def test_weights_floor_and_validation():
    assert LqrWeights((0.0, 1.0, 1.0, 1.0)).q[0] == 1e-6
    with pytest.raises(ValueError):
        LqrWeights((1.0, 1.0, 1.0, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        LqrWeights((1.0, 1.0, float("nan"), 1.0))


def test_gain_matrix_read_only():
    g = GainMatrix(np.ones((2, 4)))
    with pytest.raises(ValueError):
        g.K[0, 0] = 2.0


def test_feedback_examples():
    K = np.zeros((2, 4))
    K[0, 0], K[0, 2] = 1.0, math.sqrt(3.0)
    K[1, 1], K[1, 3] = 2.0, 1.0
    x = np.array([0.3, -0.2, 0.1, 0.4])
    assert np.all(feedback_torque(K, x, x, (400.0, 150.0)) == 0.0)
    tau = feedback_torque(K, (1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0), (400.0, 150.0))
    assert tau == pytest.approx([-1.0, 0.0])
    big = np.zeros((2, 4))
    big[0, 0], big[1, 0] = -1e6, 1e6
    assert feedback_torque(big, (1, 0, 0, 0), (0, 0, 0, 0), (400.0, 150.0)) == pytest.approx([400.0, -150.0])
    assert feedback_torque(big, (1, 0, 0, 0), (0, 0, 0, 0), (400.0, 150.0), saturate=False) == pytest.approx([1e6, -1e6])


@given(st.lists(st.floats(-1e4, 1e4), min_size=8, max_size=8),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_feedback_within_limits(k, err):
    tau = feedback_torque(np.array(k).reshape(2, 4), np.array(err), np.zeros(4), (400.0, 150.0))
    assert abs(tau[0]) <= 400.0 and abs(tau[1]) <= 150.0
