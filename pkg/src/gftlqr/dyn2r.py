"""Rigid-body dynamics of the planar two-link manipulator.

Gravity is absent (orbital setting), so the equations of motion reduce to
``M(theta) theta_dd + C(theta, theta_d) = tau``.  Two models are provided:

* ``CoriolisVariant.PAPER_VERBATIM`` uses the inertia matrix and Coriolis
  vector exactly as published, including the ``(2*w1 + 1)`` factor and the
  ``l2`` in the second Coriolis element.  This is the controller-facing
  default.
* ``CoriolisVariant.STANDARD_PHYSICAL`` uses the inertia matrix implied by the
  kinetic energy of the two links together with its Christoffel-consistent
  Coriolis terms.  It conserves :func:`kinetic_energy` under zero torque and
  exists for diagnostics.

The scalar kernels are compiled with numba so the closed-loop simulator can
call them without leaving machine code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

PARAM_FIELDS = ("m1", "m2", "l1", "l2", "r1", "r2", "I1", "I2")


class CoriolisVariant(enum.IntEnum):
    PAPER_VERBATIM = 0
    STANDARD_PHYSICAL = 1


@dataclass(frozen=True)
class ManipulatorParams:
    """Masses [kg], lengths [m], COM offsets [m], inertias [kg m^2], torque limits [N m]."""

    m1: float
    m2: float
    l1: float
    l2: float
    r1: float
    r2: float
    I1: float
    I2: float
    tau_max: tuple[float, float] = (400.0, 150.0)

    def __post_init__(self):
        for name in PARAM_FIELDS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        tau = tuple(float(t) for t in self.tau_max)
        if len(tau) != 2 or not all(math.isfinite(t) and t > 0.0 for t in tau):
            raise ValueError(f"tau_max must be two positive values, got {self.tau_max!r}")
        object.__setattr__(self, "tau_max", tau)

    @classmethod
    def from_mass_length(cls, m1, m2, l1, l2, tau_max=(400.0, 150.0)) -> "ManipulatorParams":
        """Uniform rods: COM at mid-length, ``I = m l^2 / 3``."""
        return cls(
            m1=float(m1), m2=float(m2), l1=float(l1), l2=float(l2),
            r1=l1 / 2.0, r2=l2 / 2.0,
            I1=m1 * l1**2 / 3.0, I2=m2 * l2**2 / 3.0,
            tau_max=tuple(tau_max),
        )

    @classmethod
    def nominal(cls) -> "ManipulatorParams":
        """The 20 kg / 10 kg, 1 m / 1 m arm with 400 / 150 N m limits."""
        return cls.from_mass_length(20.0, 10.0, 1.0, 1.0, (400.0, 150.0))

    def perturbed(self, mass_factors, length_factors) -> "ManipulatorParams":
        """Scale masses and lengths, recomputing COM offsets and inertias."""
        return self.from_mass_length(
            self.m1 * mass_factors[0], self.m2 * mass_factors[1],
            self.l1 * length_factors[0], self.l2 * length_factors[1],
            self.tau_max,
        )

    def with_tau_max(self, tau_max) -> "ManipulatorParams":
        return replace(self, tau_max=tuple(tau_max))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in PARAM_FIELDS], dtype=np.float64)

    def tau_max_array(self) -> np.ndarray:
        return np.array(self.tau_max, dtype=np.float64)

    def to_dict(self) -> dict:
        d = {f: float(getattr(self, f)) for f in PARAM_FIELDS}
        d["tau_max"] = [float(t) for t in self.tau_max]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManipulatorParams":
        d = dict(d)
        tau_max = tuple(d.pop("tau_max", (400.0, 150.0)))
        if set(d) == {"m1", "m2", "l1", "l2"}:
            return cls.from_mass_length(d["m1"], d["m2"], d["l1"], d["l2"], tau_max)
        unknown = set(d) - set(PARAM_FIELDS)
        missing = set(PARAM_FIELDS) - set(d)
        if unknown or missing:
            raise ValueError(
                f"manipulator params: unknown keys {sorted(unknown)}, missing keys {sorted(missing)}"
            )
        return cls(**{k: float(v) for k, v in d.items()}, tau_max=tau_max)


@dataclass(frozen=True)
class State4:
    """Joint angles [rad] (unwrapped) and joint rates [rad/s]."""

    theta1: float
    theta2: float
    omega1: float = 0.0
    omega2: float = 0.0

    def __post_init__(self):
        for name in ("theta1", "theta2", "omega1", "omega2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_array(cls, x) -> "State4":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    @classmethod
    def from_degrees(cls, theta1_deg, theta2_deg, omega1=0.0, omega2=0.0) -> "State4":
        return cls(math.radians(theta1_deg), math.radians(theta2_deg), omega1, omega2)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.omega1, self.omega2], dtype=np.float64)


# ---------------------------------------------------------------------------
# compiled kernels; p is ManipulatorParams.as_array()

@numba.njit(cache=True)
def _inertia(p, th2, variant):
    m1, m2, l1, l2, r1, r2, I1, I2 = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    c2 = math.cos(th2)
    if variant == 0:
        m11 = m1 * r1 * r1 + m2 * (l1 * l1 + r2 * r2) + I1 + m2 * l1 * r2 * c2
        m12 = m2 * r2 * r2 + 0.5 * m2 * l1 * r2 * c2
        m22 = m2 * r2 * r2 + I2
    else:
        h = m2 * l1 * r2 * c2
        m11 = m1 * r1 * r1 + I1 + I2 + m2 * (l1 * l1 + r2 * r2) + 2.0 * h
        m12 = m2 * r2 * r2 + I2 + h
        m22 = m2 * r2 * r2 + I2
    return m11, m12, m22


@numba.njit(cache=True)
def _coriolis(p, th2, w1, w2, variant):
    m2, l1, l2, r2 = p[1], p[2], p[3], p[5]
    s2 = math.sin(th2)
    if variant == 0:
        c1 = -0.5 * m2 * l1 * r2 * w2 * (2.0 * w1 + 1.0) * s2
        c2 = -0.5 * m2 * l2 * r2 * w1 * w2 * s2
    else:
        h = m2 * l1 * r2 * s2
        c1 = -h * (2.0 * w1 * w2 + w2 * w2)
        c2 = h * w1 * w1
    return c1, c2


@numba.njit(cache=True)
def _accel(p, x, tau1, tau2, variant):
    m11, m12, m22 = _inertia(p, x[1], variant)
    c1, c2 = _coriolis(p, x[1], x[2], x[3], variant)
    b1 = tau1 - c1
    b2 = tau2 - c2
    det = m11 * m22 - m12 * m12
    return (m22 * b1 - m12 * b2) / det, (m11 * b2 - m12 * b1) / det


@numba.njit(cache=True)
def _deriv(p, x, tau1, tau2, variant, out):
    a1, a2 = _accel(p, x, tau1, tau2, variant)
    out[0] = x[2]
    out[1] = x[3]
    out[2] = a1
    out[3] = a2


@numba.njit(cache=True)
def _rk4(p, x, tau1, tau2, dt, variant, out):
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    _deriv(p, x, tau1, tau2, variant, k1)
    for i in range(4):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _deriv(p, tmp, tau1, tau2, variant, k2)
    for i in range(4):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _deriv(p, tmp, tau1, tau2, variant, k3)
    for i in range(4):
        tmp[i] = x[i] + dt * k3[i]
    _deriv(p, tmp, tau1, tau2, variant, k4)
    for i in range(4):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@numba.njit(cache=True)
def _linearize(p, th2, variant, A, B):
    """Fill A (4x4) and B (4x2) in place; rates and Coriolis terms zeroed."""
    m11, m12, m22 = _inertia(p, th2, variant)
    det = m11 * m22 - m12 * m12
    A[:, :] = 0.0
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    B[:, :] = 0.0
    B[2, 0] = m22 / det
    B[2, 1] = -m12 / det
    B[3, 0] = -m12 / det
    B[3, 1] = m11 / det


# ---------------------------------------------------------------------------
# public API

def _as_state_array(state) -> np.ndarray:
    if isinstance(state, State4):
        return state.as_array()
    return np.asarray(state, dtype=np.float64).reshape(4)


def inertia_matrix(params: ManipulatorParams, theta2: float,
                   variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> np.ndarray:
    m11, m12, m22 = _inertia(params.as_array(), float(theta2), int(variant))
    return np.array([[m11, m12], [m12, m22]])


def coriolis_vector(params: ManipulatorParams, state,
                    variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> np.ndarray:
    x = _as_state_array(state)
    return np.array(_coriolis(params.as_array(), x[1], x[2], x[3], int(variant)))


def forward_dynamics(params: ManipulatorParams, state, tau,
                     variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> np.ndarray:
    """Joint accelerations ``M^-1 (tau - C)``."""
    x = _as_state_array(state)
    m11, m12, m22 = _inertia(params.as_array(), x[1], int(variant))
    det = m11 * m22 - m12 * m12
    if not abs(det) > 1e-12 * max(abs(m11 * m22), 1.0):
        raise np.linalg.LinAlgError(f"inertia matrix singular at theta2={x[1]!r}")
    return np.array(_accel(params.as_array(), x, float(tau[0]), float(tau[1]), int(variant)))


def rk4_step(params: ManipulatorParams, state, tau, dt: float,
             variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM):
    """One classical RK4 step with the torque held constant across the step.

    Returns the same type that was passed in (``State4`` or an array).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = _as_state_array(state)
    forward_dynamics(params, x, tau, variant)  # singularity check
    out = np.empty(4)
    _rk4(params.as_array(), x, float(tau[0]), float(tau[1]), float(dt), int(variant), out)
    return State4.from_array(out) if isinstance(state, State4) else out


def link_velocities(params: ManipulatorParams, state) -> tuple[np.ndarray, np.ndarray]:
    """COM velocities of both links, time derivatives of the COM positions."""
    th1, th2, w1, w2 = _as_state_array(state)
    r1, r2, l1 = params.r1, params.r2, params.l1
    v1 = r1 * w1 * np.array([-math.sin(th1), math.cos(th1)])
    w12 = w1 + w2
    v2 = np.array([
        -l1 * math.sin(th1) * w1 - r2 * math.sin(th1 + th2) * w12,
        l1 * math.cos(th1) * w1 + r2 * math.cos(th1 + th2) * w12,
    ])
    return v1, v2


def kinetic_energy(params: ManipulatorParams, state) -> float:
    """Translational plus rotational kinetic energy of both links [J].

    Link 2 rotates at the absolute rate ``omega1 + omega2``.
    """
    x = _as_state_array(state)
    v1, v2 = link_velocities(params, x)
    w1, w12 = x[2], x[2] + x[3]
    return float(
        0.5 * params.m1 * v1 @ v1 + 0.5 * params.m2 * v2 @ v2
        + 0.5 * params.I1 * w1**2 + 0.5 * params.I2 * w12**2
    )


def linearize(params: ManipulatorParams, theta,
              variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> tuple[np.ndarray, np.ndarray]:
    """Rest-configuration linearization: ``A = [[0, I], [0, 0]]``, ``B = [[0], [M^-1]]``."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    th2 = float(theta[1])
    forward_dynamics(params, (0.0, th2, 0.0, 0.0), (0.0, 0.0), variant)
    A = np.empty((4, 4))
    B = np.empty((4, 2))
    _linearize(params.as_array(), th2, int(variant), A, B)
    return A, B
