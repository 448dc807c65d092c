"""Zeroth-order TSK fuzzy inference and the two-layer Q-gain fuzzy tree.

Layer one holds two "bid" systems, one per joint, fed with the normalized
joint error and error rate.  Layer two holds four systems, one per diagonal
entry of Q, each fed with both bids.  The resulting ``Q = diag(q1..q4)`` and
the fixed ``R = diag(r, r)`` go through the Riccati solver at every control
step, linearized about the current configuration.

Membership functions are triangular with evenly spaced centers on [-1, 1]
and shouldered ends, so memberships always sum to one.  Rule firing uses the
product t-norm; rule ``(i, j)`` (MF ``i`` of input 1, MF ``j`` of input 2)
sits at consequent index ``i * n2 + j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numba
import numpy as np

from gftlqr import dyn2r
from gftlqr.dyn2r import CoriolisVariant, ManipulatorParams
from gftlqr.riccati import (
    Q_FLOOR, R_DEFAULT, NoStabilizingSolution, _care_diag, _feedback, _gain_diag,
)

BID_MFS = 3
QGAIN_MFS = 7
FIS_NAMES = ("bid1", "bid2", "q1", "q2", "q3", "q4")


@dataclass(frozen=True)
class MembershipPartition:
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("a partition needs at least two membership functions")

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.count)

    def memberships(self, x: float) -> np.ndarray:
        mu = np.empty(self.count)
        _memberships(float(x), self.count, mu)
        return mu


@dataclass(frozen=True, eq=False)
class FisSpec:
    """Two-input zeroth-order TSK system with normalized consequents."""

    partitions: tuple[MembershipPartition, MembershipPartition]
    consequents: np.ndarray
    out_lo: float
    out_hi: float

    def __post_init__(self):
        c = np.array(self.consequents, dtype=np.float64).reshape(-1)
        n = self.partitions[0].count * self.partitions[1].count
        if c.size != n:
            raise ValueError(f"expected {n} consequents, got {c.size}")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("consequents must lie in [0, 1]")
        if not self.out_lo < self.out_hi:
            raise ValueError(f"out_lo ({self.out_lo}) must be < out_hi ({self.out_hi})")
        c.setflags(write=False)
        object.__setattr__(self, "consequents", c)
        object.__setattr__(self, "out_lo", float(self.out_lo))
        object.__setattr__(self, "out_hi", float(self.out_hi))

    @classmethod
    def constant(cls, n_mfs: int, value: float, out_lo: float, out_hi: float) -> "FisSpec":
        part = MembershipPartition(n_mfs)
        return cls((part, part), np.full(n_mfs * n_mfs, value), out_lo, out_hi)

    def rule_table(self) -> np.ndarray:
        return self.consequents.reshape(self.partitions[0].count, self.partitions[1].count)

    def __eq__(self, other):
        return (
            isinstance(other, FisSpec)
            and self.partitions == other.partitions
            and np.array_equal(self.consequents, other.consequents)
            and self.out_lo == other.out_lo
            and self.out_hi == other.out_hi
        )


@dataclass(frozen=True, eq=False)
class GftController:
    """Bid layer + Q-gain layer feeding a per-step LQR solve.

    ``params`` is the controller's internal plant model used for
    linearization; it stays nominal when the simulated plant is perturbed.
    """

    bid_fis: tuple[FisSpec, FisSpec]
    qgain_fis: tuple[FisSpec, FisSpec, FisSpec, FisSpec]
    e_max: float = math.pi
    edot_max: float = math.pi
    r_value: float = R_DEFAULT
    params: ManipulatorParams = field(default_factory=ManipulatorParams.nominal)
    saturate: bool = True
    variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM

    def __post_init__(self):
        if len(self.bid_fis) != 2 or len(self.qgain_fis) != 4:
            raise ValueError("need 2 bid systems and 4 Q-gain systems")
        for f in self.bid_fis:
            if (f.out_lo, f.out_hi) != (-1.0, 1.0):
                raise ValueError("bid systems must have output bounds [-1, 1]")
        if not (self.e_max > 0 and self.edot_max > 0 and self.r_value > 0):
            raise ValueError("normalization scales and r_value must be positive")
        object.__setattr__(self, "bid_fis", tuple(self.bid_fis))
        object.__setattr__(self, "qgain_fis", tuple(self.qgain_fis))
        object.__setattr__(self, "variant", CoriolisVariant(self.variant))

    def fis(self, name: str) -> FisSpec:
        try:
            i = FIS_NAMES.index(name)
        except ValueError:
            raise KeyError(f"unknown FIS {name!r}; valid names: {', '.join(FIS_NAMES)}") from None
        return self.bid_fis[i] if i < 2 else self.qgain_fis[i - 2]

    def kernel_args(self):
        """Packed arrays consumed by the compiled simulator."""
        bid_cons = np.stack([f.consequents for f in self.bid_fis])
        q_cons = np.stack([f.consequents for f in self.qgain_fis])
        q_bounds = np.array([[f.out_lo, f.out_hi] for f in self.qgain_fis])
        return (
            self.bid_fis[0].partitions[0].count, self.qgain_fis[0].partitions[0].count,
            bid_cons, q_cons, q_bounds,
            float(self.e_max), float(self.edot_max), float(self.r_value),
        )

    def __call__(self, state, target) -> np.ndarray:
        return gft_control_step(self, self.params, state, target)

    def __eq__(self, other):
        return (
            isinstance(other, GftController)
            and self.bid_fis == other.bid_fis
            and self.qgain_fis == other.qgain_fis
            and (self.e_max, self.edot_max, self.r_value, self.params, self.saturate, self.variant)
            == (other.e_max, other.edot_max, other.r_value, other.params, other.saturate, other.variant)
        )


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _memberships(x, n, mu):
    if x <= -1.0:
        x = -1.0
    elif x >= 1.0:
        x = 1.0
    width = 2.0 / (n - 1)
    for i in range(n):
        mu[i] = 0.0
    pos = (x + 1.0) / width
    k = int(math.floor(pos))
    if k >= n - 1:
        mu[n - 1] = 1.0
        return
    frac = pos - k
    mu[k] = 1.0 - frac
    mu[k + 1] = frac


@numba.njit(cache=True)
def _fis_eval(n, cons, lo, hi, in1, in2):
    mu1 = np.empty(n)
    mu2 = np.empty(n)
    _memberships(in1, n, mu1)
    _memberships(in2, n, mu2)
    # weighted mean taken relative to the first firing rule, so a flat
    # table returns its value exactly
    ref = -1.0
    num = 0.0
    den = 0.0
    for i in range(n):
        if mu1[i] == 0.0:
            continue
        for j in range(n):
            w = mu1[i] * mu2[j]
            if w == 0.0:
                continue
            c = cons[i * n + j]
            if ref < 0.0:
                ref = c
            num += w * (c - ref)
            den += w
    return lo + (hi - lo) * (ref + num / den)


@numba.njit(cache=True)
def _clamp1(v):
    return min(max(v, -1.0), 1.0)


@numba.njit(cache=True)
def _gft_weights(n_bid, n_q, bid_cons, q_cons, q_bounds, e_max, edot_max, x, xt, q_out):
    """Bids from the state error, then Q gains from the bids (floored)."""
    b = np.empty(2)
    for j in range(2):
        e = _clamp1((xt[j] - x[j]) / e_max)
        ed = _clamp1((xt[j + 2] - x[j + 2]) / edot_max)
        b[j] = _fis_eval(n_bid, bid_cons[j], -1.0, 1.0, e, ed)
    for i in range(4):
        q = _fis_eval(n_q, q_cons[i], q_bounds[i, 0], q_bounds[i, 1], b[0], b[1])
        q_out[i] = max(q, 1e-6)
    return b


@numba.njit(cache=True)
def _gft_torque(p_model, variant, n_bid, n_q, bid_cons, q_cons, q_bounds,
                e_max, edot_max, r_value, x, xt, tau_max, saturate, A, B, K):
    """Return (tau, ok); ok is False when the Riccati solve fails."""
    q = np.empty(4)
    _gft_weights(n_bid, n_q, bid_cons, q_cons, q_bounds, e_max, edot_max, x, xt, q)
    dyn2r._linearize(p_model, x[1], variant, A, B)
    r = np.empty(2)
    r[0] = r_value
    r[1] = r_value
    P, ok = _care_diag(A, B, q, r)
    if not ok:
        return np.zeros(2), False
    _gain_diag(P, B, r, K)
    return _feedback(K, x, xt, tau_max, saturate), True


# ---------------------------------------------------------------------------
# public API

def fis_eval(fis: FisSpec, in1: float, in2: float) -> float:
    n1, n2 = fis.partitions[0].count, fis.partitions[1].count
    if n1 != n2:
        raise NotImplementedError("compiled evaluation assumes square rule grids")
    return float(_fis_eval(n1, fis.consequents, fis.out_lo, fis.out_hi, float(in1), float(in2)))


def normalized_errors(controller: GftController, state, target) -> np.ndarray:
    """Per joint (e, edot) pairs, clamped to [-1, 1]. Shape (2, 2)."""
    x = dyn2r._as_state_array(state)
    xt = dyn2r._as_state_array(target)
    e = np.clip((xt[:2] - x[:2]) / controller.e_max, -1.0, 1.0)
    ed = np.clip((xt[2:] - x[2:]) / controller.edot_max, -1.0, 1.0)
    return np.column_stack([e, ed])


def bids(controller: GftController, state, target) -> tuple[float, float]:
    err = normalized_errors(controller, state, target)
    return (
        fis_eval(controller.bid_fis[0], *err[0]),
        fis_eval(controller.bid_fis[1], *err[1]),
    )


def q_gains(controller: GftController, bid1: float, bid2: float) -> np.ndarray:
    return np.array([max(fis_eval(f, bid1, bid2), Q_FLOOR) for f in controller.qgain_fis])


def gft_control_step(controller: GftController, params: ManipulatorParams, state, target) -> np.ndarray:
    """Saturated torque for one control step.

    Raises NoStabilizingSolution if the Riccati solve fails.
    """
    x = dyn2r._as_state_array(state)
    xt = dyn2r._as_state_array(target)
    n_bid, n_q, bid_cons, q_cons, q_bounds, e_max, edot_max, r_value = controller.kernel_args()
    A = np.empty((4, 4))
    B = np.empty((4, 2))
    K = np.empty((2, 4))
    tau, ok = _gft_torque(
        params.as_array(), int(controller.variant), n_bid, n_q, bid_cons, q_cons, q_bounds,
        e_max, edot_max, r_value, x, xt, params.tau_max_array(), controller.saturate, A, B, K,
    )
    if not ok:
        raise NoStabilizingSolution(f"Riccati solve failed at state {x.tolist()}")
    return tau


def control_surface(fis: FisSpec, grid_n: int) -> np.ndarray:
    """Outputs on a uniform ``grid_n x grid_n`` grid over [-1, 1]^2; row index follows input 1."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    g = np.linspace(-1.0, 1.0, grid_n)
    return np.array([[fis_eval(fis, a, b) for b in g] for a in g])


def constant_controller(q: tuple[float, float, float, float], **kwargs) -> GftController:
    """Controller whose Q is independent of the state: every rule fires ``q_i``.

    Each Q-gain system gets bounds ``[q_i / 2, 2 q_i]`` with consequent 1/3.
    Useful as a static-Q reference inside the fuzzy tree.
    """
    bid = FisSpec.constant(BID_MFS, 0.5, -1.0, 1.0)
    qfis = tuple(FisSpec.constant(QGAIN_MFS, 1.0 / 3.0, qi / 2.0, 2.0 * qi) for qi in q)
    return GftController((bid, bid), qfis, **kwargs)
