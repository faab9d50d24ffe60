"""Kinematic bicycle motion model with a vertical clothoid extension.

Two state layouts are supported.  The flat-road state has 7 elements

    (x, y, x_dot, y_dot, yaw, yaw_rate, steer)

and the full state has 13 elements

    (x, y, z, x_dot, y_dot, z_dot, yaw, yaw_rate,
     pitch, pitch_rate, steer, c0, c1)

where (c0, c1) parameterize the road's vertical curvature as a clothoid,
C(l) = c0 + c1 * l along arc length.  Speed is not a state element; it is
derived as the norm of the velocity components.

The transition model keeps the velocity elements constant (they are
noise-driven and corrected by measurements) and couples them into the pose:
position rates equal the velocity states, yaw rate follows the bicycle
relation (v / wheelbase) * tan(steer), pitch follows c0 * v, and c0 follows
c1 * v.  On a heading-consistent state (velocity aligned with yaw/pitch)
the position rates equal (v cos yaw, v sin yaw, v sin pitch), which is how
the simulator generates ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle

V_MIN = 0.1  # m/s; below this the 1/v Jacobian terms are zeroed
DT_MAX = 0.5  # s; single-step bound for the discretization


class SteeringSingularityError(ValueError):
    """|steer| >= pi/2 makes tan(steer) blow up."""


class NearZeroSpeedError(ValueError):
    """Speed below V_MIN; the 1/v Jacobian entries are undefined."""


class State2D:
    """Index layout of the 7-element flat-road state."""

    DIM = 7
    X, Y, VX, VY, YAW, YAW_RATE, STEER = range(7)
    ANGLES = (YAW, STEER)
    POSITION = (X, Y)
    VELOCITY = (VX, VY)


class State3D:
    """Index layout of the 13-element state with pitch and clothoid terms."""

    DIM = 13
    (X, Y, Z, VX, VY, VZ, YAW, YAW_RATE,
     PITCH, PITCH_RATE, STEER, C0, C1) = range(13)
    ANGLES = (YAW, PITCH, STEER)
    POSITION = (X, Y, Z)
    VELOCITY = (VX, VY, VZ)


def state_space(dim_or_variant):
    """Resolve 7/13 or '2d'/'3d' to the matching index layout."""
    if dim_or_variant in (7, "2d"):
        return State2D
    if dim_or_variant in (13, "3d"):
        return State3D
    raise ValueError(f"unknown state layout: {dim_or_variant!r}")


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.5
    preview_distance: float = 10.0

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if self.preview_distance <= 0:
            raise ValueError("preview distance must be positive")


@dataclass(frozen=True)
class ProcessNoise:
    """Diagonal process-noise spectral densities, one entry per state element."""

    diagonal: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.diagonal, dtype=float).reshape(-1)
        if np.any(q < 0):
            raise ValueError("process noise entries must be non-negative")
        object.__setattr__(self, "diagonal", q)

    @classmethod
    def default_2d(cls) -> "ProcessNoise":
        q = np.zeros(7)
        q[[State2D.VX, State2D.VY]] = 0.5
        q[State2D.YAW] = 1e-4
        q[State2D.YAW_RATE] = 0.05
        q[State2D.STEER] = 0.01
        return cls(q)

    @classmethod
    def default_3d(cls) -> "ProcessNoise":
        q = np.zeros(13)
        q[[State3D.VX, State3D.VY]] = 0.5
        q[State3D.VZ] = 0.05
        q[State3D.YAW] = 1e-4
        q[State3D.YAW_RATE] = 0.05
        q[State3D.PITCH] = 1e-6
        q[State3D.PITCH_RATE] = 0.01
        q[State3D.STEER] = 0.01
        q[State3D.C0] = 1e-8
        q[State3D.C1] = 1e-9
        return cls(q)

    @classmethod
    def default(cls, variant) -> "ProcessNoise":
        return cls.default_2d() if state_space(variant) is State2D else cls.default_3d()


def speed(state) -> float:
    """Speed as the norm of the velocity elements (0 at rest)."""
    x = np.asarray(state, dtype=float)
    sp = state_space(x.size)
    return float(np.linalg.norm(x[list(sp.VELOCITY)]))


def vertical_height(c0: float, c1: float, d: float) -> float:
    """Road height above the local tangent plane at preview distance d:
    h = (c0 / 2) d^2 + (c1 / 6) d^3."""
    return 0.5 * c0 * d * d + c1 * d * d * d / 6.0


def _check_steer(phi: float):
    if abs(phi) >= np.pi / 2:
        raise SteeringSingularityError(f"|steer| = {abs(phi):.3f} >= pi/2")


def derivative_2d(state, params: VehicleParams) -> np.ndarray:
    """Continuous-time state derivative for the 7-element state."""
    x = np.asarray(state, dtype=float)
    _check_steer(x[State2D.STEER])
    v = np.hypot(x[State2D.VX], x[State2D.VY])
    d = np.zeros(7)
    d[State2D.X] = x[State2D.VX]
    d[State2D.Y] = x[State2D.VY]
    d[State2D.YAW] = v / params.wheelbase * np.tan(x[State2D.STEER])
    return d


def derivative_3d(state, params: VehicleParams) -> np.ndarray:
    """Continuous-time state derivative for the 13-element state."""
    x = np.asarray(state, dtype=float)
    _check_steer(x[State3D.STEER])
    v = float(np.linalg.norm(x[[State3D.VX, State3D.VY, State3D.VZ]]))
    d = np.zeros(13)
    d[State3D.X] = x[State3D.VX]
    d[State3D.Y] = x[State3D.VY]
    d[State3D.Z] = v * np.sin(x[State3D.PITCH])
    d[State3D.YAW] = v / params.wheelbase * np.tan(x[State3D.STEER])
    d[State3D.PITCH] = x[State3D.C0] * v
    d[State3D.C0] = x[State3D.C1] * v
    return d


def jacobian_2d(state, params: VehicleParams, strict: bool = False) -> np.ndarray:
    """Analytic Jacobian of :func:`derivative_2d`.

    Below ``V_MIN`` the 1/v terms in the yaw row are zeroed so the matrix
    stays bounded at rest; pass ``strict=True`` to raise instead.
    """
    x = np.asarray(state, dtype=float)
    _check_steer(x[State2D.STEER])
    v = np.hypot(x[State2D.VX], x[State2D.VY])
    J = np.zeros((7, 7))
    J[State2D.X, State2D.VX] = 1.0
    J[State2D.Y, State2D.VY] = 1.0
    L = params.wheelbase
    tan_phi = np.tan(x[State2D.STEER])
    if v < V_MIN:
        if strict:
            raise NearZeroSpeedError(f"speed {v:.3g} below {V_MIN}")
    else:
        J[State2D.YAW, State2D.VX] = x[State2D.VX] / (v * L) * tan_phi
        J[State2D.YAW, State2D.VY] = x[State2D.VY] / (v * L) * tan_phi
    J[State2D.YAW, State2D.STEER] = v / (L * np.cos(x[State2D.STEER]) ** 2)
    return J


def jacobian_3d(state, params: VehicleParams, strict: bool = False) -> np.ndarray:
    """Analytic Jacobian of :func:`derivative_3d` (same V_MIN guard)."""
    x = np.asarray(state, dtype=float)
    _check_steer(x[State3D.STEER])
    vel = x[[State3D.VX, State3D.VY, State3D.VZ]]
    v = float(np.linalg.norm(vel))
    J = np.zeros((13, 13))
    J[State3D.X, State3D.VX] = 1.0
    J[State3D.Y, State3D.VY] = 1.0
    L = params.wheelbase
    vcols = [State3D.VX, State3D.VY, State3D.VZ]
    if v < V_MIN:
        if strict:
            raise NearZeroSpeedError(f"speed {v:.3g} below {V_MIN}")
        unit = np.zeros(3)
    else:
        unit = vel / v
    J[State3D.Z, vcols] = np.sin(x[State3D.PITCH]) * unit
    J[State3D.Z, State3D.PITCH] = v * np.cos(x[State3D.PITCH])
    J[State3D.YAW, vcols] = np.tan(x[State3D.STEER]) / L * unit
    J[State3D.YAW, State3D.STEER] = v / (L * np.cos(x[State3D.STEER]) ** 2)
    J[State3D.PITCH, vcols] = x[State3D.C0] * unit
    J[State3D.PITCH, State3D.C0] = v
    J[State3D.C0, vcols] = x[State3D.C1] * unit
    J[State3D.C0, State3D.C1] = v
    return J


def derivative(state, params: VehicleParams) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    return derivative_2d(x, params) if x.size == 7 else derivative_3d(x, params)


def jacobian(state, params: VehicleParams, strict: bool = False) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.size == 7:
        return jacobian_2d(x, params, strict=strict)
    return jacobian_3d(x, params, strict=strict)


def wrap_state(state) -> np.ndarray:
    """Return a copy with every angle element wrapped to (-pi, pi]."""
    x = np.array(state, dtype=float)
    sp = state_space(x.size)
    for i in sp.ANGLES:
        x[i] = wrap_angle(x[i])
    return x


def rk4_step(state, dt: float, params: VehicleParams) -> np.ndarray:
    """One classical Runge-Kutta step of the state derivative."""
    x = np.asarray(state, dtype=float)
    k1 = derivative(x, params)
    k2 = derivative(x + 0.5 * dt * k1, params)
    k3 = derivative(x + 0.5 * dt * k2, params)
    k4 = derivative(x + dt * k3, params)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, dt: float, noise: ProcessNoise, params: VehicleParams):
    """Propagate one filter step.

    Returns ``(state_next, Phi, Q)`` with the mean advanced by RK4, the
    transition matrix as the first-order expansion I + J dt, and the
    discrete process covariance diag(noise) * dt.  Angles are re-wrapped.
    """
    if not 0.0 < dt <= DT_MAX:
        raise ValueError(f"dt must be in (0, {DT_MAX}], got {dt}")
    x = np.asarray(state, dtype=float)
    if noise.diagonal.size != x.size:
        raise ValueError("process noise dimension does not match the state")
    x_next = wrap_state(rk4_step(x, dt, params))
    Phi = np.eye(x.size) + jacobian(x, params) * dt
    Q = np.diag(noise.diagonal * dt)
    return x_next, Phi, Q
