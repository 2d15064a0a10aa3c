"""7-DOF full-car semi-active suspension model.

The car body (sprung mass) rides on four corner suspensions, each a
spring/adjustable-damper pair on top of an unsprung wheel mass that touches
the road through the tire stiffness.  The 14 states, all SI units, are

    x1  q1    front-left unsprung displacement [m]     x2   dq1/dt
    x3  q2    front-right unsprung displacement        x4   dq2/dt
    x5  q3    rear-left unsprung displacement          x6   dq3/dt
    x7  q4    rear-right unsprung displacement         x8   dq4/dt
    x9  z     heave at the centre of gravity           x10  dz/dt
    x11 theta pitch angle [rad]                        x12  dtheta/dt
    x13 phi   roll angle [rad]                         x14  dphi/dt

The measured outputs are the seven velocity states (x2, x4, ..., x14);
the seven displacement states are what the estimator has to reconstruct.

The road enters each wheel as a displacement at the tire contact patch,
split into a known profile component and an unknown disturbance.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ._validation import as_vector, check_finite

N_STATES = 14
N_WHEELS = 4
N_OUTPUTS = 7

# 0-based indices of paired (displacement, velocity) states.
POSITION_STATES = (0, 2, 4, 6, 8, 10, 12)
VELOCITY_STATES = (1, 3, 5, 7, 9, 11, 13)

__all__ = [
    "N_STATES",
    "N_WHEELS",
    "N_OUTPUTS",
    "POSITION_STATES",
    "VELOCITY_STATES",
    "SuspensionParams",
    "CornerState",
    "FullCarModel",
    "build_model",
    "corner_state",
    "suspension_forces",
    "state_derivative",
    "measure",
]


@dataclass(frozen=True)
class SuspensionParams:
    """Physical constants of the full-car suspension.

    Defaults are the stock mid-size sedan values used by the bundled
    scenario configuration.
    """

    ms: float = 1200.0     # sprung (body) mass [kg]
    mus: float = 60.0      # unsprung mass per wheel [kg]
    ks: float = 16800.0    # suspension stiffness [N/m]
    kt: float = 190000.0   # tire stiffness [N/m]
    cs: float = 800.0      # damping constant [N*s/m]
    ix: float = 4000.0     # roll inertia [kg*m^2]
    iy: float = 950.0      # pitch inertia [kg*m^2]
    l1: float = 1.4        # front axle to CG [m]
    l2: float = 1.6        # rear axle to CG [m]
    l3: float = 1.0        # left track to CG [m]
    l4: float = 1.0        # right track to CG [m]

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(
                    f"suspension parameter {f.name} must be strictly positive, "
                    f"got {value!r}"
                )

    def corner_geometry(self):
        """Per-corner attitude coefficients (d z_i / d theta, d z_i / d phi).

        Corner order is FL, FR, RL, RR throughout the package.
        """
        pitch = np.array([-self.l1, -self.l1, self.l2, self.l2])
        roll = np.array([self.l3, -self.l4, self.l3, -self.l4])
        return pitch, roll

    @property
    def wheelbase(self):
        return self.l1 + self.l2


@dataclass(frozen=True)
class CornerState:
    """Sprung-mass displacement and velocity above each wheel (FL, FR, RL, RR)."""

    z: np.ndarray
    zdot: np.ndarray


@dataclass(frozen=True)
class FullCarModel:
    """Continuous-time matrices of dx/dt = A x + B u + Br (road + dist)."""

    a: np.ndarray   # 14 x 14
    b: np.ndarray   # 14 x 4, damper force input
    br: np.ndarray  # 14 x 4, road/disturbance displacement input
    c: np.ndarray   # 7 x 14, velocity selector
    d: np.ndarray   # 7 x 7 identity on measurement noise
    params: SuspensionParams

    def __post_init__(self):
        for name in ("a", "b", "br", "c", "d"):
            getattr(self, name).flags.writeable = False


def _force_rows(params):
    """Rows k_i with F_i = k_i @ x + u_i (corner force, linear in the state)."""
    pitch, roll = params.corner_geometry()
    k = np.zeros((N_WHEELS, N_STATES))
    for i in range(N_WHEELS):
        k[i, 2 * i] = -params.ks
        k[i, 2 * i + 1] = -params.cs
        k[i, 8] = params.ks
        k[i, 9] = params.cs
        k[i, 10] = params.ks * pitch[i]
        k[i, 11] = params.cs * pitch[i]
        k[i, 12] = params.ks * roll[i]
        k[i, 13] = params.cs * roll[i]
    return k


def build_model(params: SuspensionParams) -> FullCarModel:
    """Assemble the (A, B, Br, C, D) matrices from the physical constants.

    Wheel rows balance the tire force against the corner suspension force,
    body rows distribute the four corner forces onto heave, pitch and roll
    through the lever arms of the corner geometry.
    """
    p = params
    pitch, roll = p.corner_geometry()
    k = _force_rows(p)

    a = np.zeros((N_STATES, N_STATES))
    b = np.zeros((N_STATES, N_WHEELS))
    br = np.zeros((N_STATES, N_WHEELS))

    for j in POSITION_STATES:
        a[j, j + 1] = 1.0

    for i in range(N_WHEELS):
        row = 2 * i + 1
        a[row] = k[i] / p.mus
        a[row, 2 * i] -= p.kt / p.mus
        b[row, i] = 1.0 / p.mus
        br[row, i] = p.kt / p.mus

    a[9] = -k.sum(axis=0) / p.ms
    b[9, :] = -1.0 / p.ms
    a[11] = -(pitch[:, None] * k).sum(axis=0) / p.iy
    b[11, :] = -pitch / p.iy
    a[13] = -(roll[:, None] * k).sum(axis=0) / p.ix
    b[13, :] = -roll / p.ix

    c = np.zeros((N_OUTPUTS, N_STATES))
    c[np.arange(N_OUTPUTS), VELOCITY_STATES] = 1.0
    d = np.eye(N_OUTPUTS)

    return FullCarModel(a=a, b=b, br=br, c=c, d=d, params=p)


def corner_state(params: SuspensionParams, x) -> CornerState:
    """Sprung displacement/velocity above each wheel for body pose in ``x``."""
    x = as_vector("x", x, N_STATES)
    pitch, roll = params.corner_geometry()
    z = x[8] + pitch * x[10] + roll * x[12]
    zdot = x[9] + pitch * x[11] + roll * x[13]
    return CornerState(z=z, zdot=zdot)


def suspension_forces(params: SuspensionParams, x, u) -> np.ndarray:
    """Total corner forces (spring + damper + actuator), FL..RR order."""
    x = check_finite("x", as_vector("x", x, N_STATES))
    u = check_finite("u", as_vector("u", u, N_WHEELS))
    corners = corner_state(params, x)
    q = x[0:8:2]
    qdot = x[1:8:2]
    return params.ks * (corners.z - q) + params.cs * (corners.zdot - qdot) + u


def state_derivative(model: FullCarModel, x, u=None, road=None, dist=None) -> np.ndarray:
    """Evaluate dx/dt = A x + B u + Br (road + dist)."""
    x = as_vector("x", x, N_STATES)
    u = np.zeros(N_WHEELS) if u is None else as_vector("u", u, N_WHEELS)
    road = np.zeros(N_WHEELS) if road is None else as_vector("road", road, N_WHEELS)
    dist = np.zeros(N_WHEELS) if dist is None else as_vector("dist", dist, N_WHEELS)
    return model.a @ x + model.b @ u + model.br @ (road + dist)


def measure(model: FullCarModel, x, noise=None) -> np.ndarray:
    """Measured output y = C x + D v (the seven velocity states plus noise)."""
    x = as_vector("x", x, N_STATES)
    y = model.c @ x
    if noise is not None:
        y = y + model.d @ as_vector("noise", noise, N_OUTPUTS)
    return y
