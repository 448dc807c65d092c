"""Continuous-time algebraic Riccati equation and LQR state feedback.

The CARE ``A'P + PA - P B R^-1 B' P + Q = 0`` is solved from the stable
invariant subspace of the Hamiltonian ``[[A, -B R^-1 B'], [-Q, -A']]``: the
``n`` eigenvectors with negative-real-part eigenvalues span ``[X1; X2]`` and
``P = X2 X1^-1``.  The kernel is compiled because the fuzzy controller
re-solves the equation at every control step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

Q_FLOOR = 1e-6
R_DEFAULT = 1e-4


class NoStabilizingSolution(ArithmeticError):
    """The Hamiltonian has no n-dimensional stable invariant subspace."""


@dataclass(frozen=True)
class LqrWeights:
    """Diagonal state weights ``q`` (4) and control weights ``r`` (2)."""

    q: tuple[float, float, float, float]
    r: tuple[float, float] = (R_DEFAULT, R_DEFAULT)

    def __post_init__(self):
        q = tuple(max(float(v), Q_FLOOR) for v in self.q)
        r = tuple(float(v) for v in self.r)
        if len(q) != 4 or len(r) != 2:
            raise ValueError("LqrWeights needs 4 state weights and 2 control weights")
        if not all(np.isfinite(q)) or not all(np.isfinite(r)) or min(r) <= 0.0:
            raise ValueError(f"invalid LQR weights q={q}, r={r}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r)


@dataclass(frozen=True, eq=False)
class GainMatrix:
    K: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64)
        if K.ndim != 2 or not np.all(np.isfinite(K)):
            raise ValueError("gain matrix must be a finite 2-D array")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def __eq__(self, other):
        return isinstance(other, GainMatrix) and np.array_equal(self.K, other.K)


@numba.njit(cache=True)
def _care(A, B, Q, R):
    """Return (P, ok).  ok is False when the stable subspace cannot be formed."""
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    H[:n, :n] = A
    H[:n, n:] = -G
    H[n:, :n] = -Q
    H[n:, n:] = -A.T
    w, V = np.linalg.eig(H)
    X = np.empty((2 * n, n), dtype=np.complex128)
    P = np.zeros((n, n))
    k = 0
    scale = 0.0
    for i in range(2 * n):
        scale = max(scale, abs(w[i]))
    for i in range(2 * n):
        if w[i].real < -1e-13 * max(scale, 1.0):
            if k == n:
                return P, False
            X[:, k] = V[:, i]
            k += 1
    if k != n:
        return P, False
    # scale so X1 has unit columns; P = X2 X1^-1 is invariant to column scaling
    for k in range(n):
        s = 0.0
        for i in range(n):
            s += abs(X[i, k]) ** 2
        s = np.sqrt(s)
        if s < 1e-300:
            return P, False
        X[:, k] /= s
    X1 = X[:n, :]
    X2 = X[n:, :]
    if abs(np.linalg.det(X1)) < 1e-12:
        return P, False
    Pc = np.linalg.solve(X1.T, X2.T).T
    for i in range(n):
        for j in range(n):
            P[i, j] = 0.5 * (Pc[i, j].real + Pc[j, i].real)
    qnorm = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += abs(Q[i, j])
        qnorm = max(qnorm, row)
    tol = 1e-10 * max(1.0, qnorm)
    for _ in range(4):
        Res = A.T @ P + P @ A - P @ G @ P + Q
        if np.max(np.abs(Res)) <= tol:
            break
        # Newton step: (A - G P)' X + X (A - G P) = -Res
        Ak = A - G @ P
        P = P + _lyap(Ak, Res)
        P = 0.5 * (P + P.T)
    return P, True


@numba.njit(cache=True)
def _lyap(Ak, C):
    """Solve Ak' X + X Ak + C = 0 through the Kronecker form."""
    n = Ak.shape[0]
    L = np.zeros((n * n, n * n))
    I = np.eye(n)
    # row-major vec: X[c, d] sits at c * n + d
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    L[a * n + b, c * n + d] = I[a, c] * Ak[d, b] + Ak[c, a] * I[b, d]
    x = np.linalg.solve(L, -C.copy().reshape(n * n))
    return x.reshape(n, n)


@numba.njit(cache=True)
def _care_diag(A, B, q, r):
    """CARE with diagonal Q = diag(q), R = diag(r)."""
    n = A.shape[0]
    m = B.shape[1]
    Q = np.zeros((n, n))
    R = np.zeros((m, m))
    for i in range(n):
        Q[i, i] = q[i]
    for i in range(m):
        R[i, i] = r[i]
    return _care(A, B, Q, R)


@numba.njit(cache=True)
def _gain_diag(P, B, r, K):
    """K = R^-1 B' P for diagonal R, written into K."""
    m, n = K.shape
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += B[k, i] * P[k, j]
            K[i, j] = s / r[i]


@numba.njit(cache=True)
def _feedback(K, x, xt, tau_max, saturate):
    tau = np.empty(2)
    for i in range(2):
        s = 0.0
        for j in range(4):
            s -= K[i, j] * (x[j] - xt[j])
        if saturate:
            s = min(max(s, -tau_max[i]), tau_max[i])
        tau[i] = s
    return tau


def care_residual(A, B, Q, R, P) -> np.ndarray:
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T) @ P + Q


def solve_care(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution P of the continuous algebraic Riccati equation."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    R = np.atleast_2d(R)
    Q = np.atleast_2d(Q)
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(f"shape mismatch: A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")
    P, ok = _care(A, B, Q, R)
    if not ok:
        raise NoStabilizingSolution("no stabilizing solution: stable subspace missing or singular")
    return P


def lqr_gain(P, B, R) -> GainMatrix:
    """``K = R^-1 B' P``."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    P = np.ascontiguousarray(P, dtype=np.float64)
    if np.count_nonzero(R - np.diag(np.diag(R))) == 0:
        # same arithmetic as the compiled controllers
        K = np.empty((B.shape[1], B.shape[0]))
        _gain_diag(P, np.ascontiguousarray(B), np.diag(R).copy(), K)
        return GainMatrix(K)
    return GainMatrix(np.linalg.solve(R, B.T @ P))


def lqr(A, B, weights: LqrWeights) -> GainMatrix:
    P = solve_care(A, B, weights.Q, weights.R)
    return lqr_gain(P, B, weights.R)


def feedback_torque(K, state, target, tau_max, saturate: bool = True) -> np.ndarray:
    """Regulator law ``-K (x - x_target)``, clamped componentwise to ``+-tau_max``."""
    from gftlqr.dyn2r import _as_state_array

    K = K.K if isinstance(K, GainMatrix) else np.asarray(K, dtype=np.float64)
    x = _as_state_array(state)
    xt = _as_state_array(target)
    return _feedback(np.ascontiguousarray(K), x, xt,
                     np.asarray(tau_max, dtype=np.float64), bool(saturate))
