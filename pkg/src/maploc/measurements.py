"""Measurement models: prediction, innovation, and H matrices per sensor kind.

Five kinds are supported.  A measurement always stores the full sensed
value; the flat-road (7-state) filter consumes a per-kind subset of the
rows, selected here, so one sensor stream serves both filter variants.

    gps           (x, y, z) world position          [2d subset: x, y]
    odometry      (v, yaw_rate, pitch_rate, steer, h)  [2d: v, yaw_rate, steer]
    point3d       landmark position in the vehicle frame  [2d: x, y]
    camera_point  landmark pixel position (u, v)
    camera_line   lane-edge segment in Hesse form (rho, gamma), pixels

GPS, odometry and vehicle-frame point models have analytic H matrices; the
camera models use central finite differences of their prediction chain,
which keeps them correct for both state layouts at desk-scale cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .dynamics import (
    State2D,
    State3D,
    V_MIN,
    NearZeroSpeedError,
    VehicleParams,
    state_space,
    speed,
    vertical_height,
)
from .geometry import CameraModel, HesseLine, Pose, wrap_angle
from .numdiff import central_difference_jacobian

GPS = "gps"
ODOMETRY = "odometry"
POINT3D = "point3d"
CAMERA_POINT = "camera_point"
CAMERA_LINE = "camera_line"

KINDS = (GPS, ODOMETRY, POINT3D, CAMERA_POINT, CAMERA_LINE)

# Full sensed dimension per kind.
_FULL_DIM = {GPS: 3, ODOMETRY: 5, POINT3D: 3, CAMERA_POINT: 2, CAMERA_LINE: 2}

# Row subset consumed by the 7-state filter.
_SUBSET_2D = {
    GPS: (0, 1),
    ODOMETRY: (0, 1, 3),
    POINT3D: (0, 1),
    CAMERA_POINT: (0, 1),
    CAMERA_LINE: (0, 1),
}

# Indices of angle-valued components (innovations get wrapped there),
# relative to the full sensed vector.
_ANGLE_COMPONENTS = {GPS: (), ODOMETRY: (3,), POINT3D: (), CAMERA_POINT: (), CAMERA_LINE: (1,)}


class KindMismatchError(ValueError):
    """Measured and predicted vectors do not belong to the same model."""


@dataclass(frozen=True)
class Measurement:
    """One sensor reading: value, noise covariance, and optional map feature id."""

    timestamp: float
    kind: str
    value: np.ndarray
    covariance: np.ndarray
    feature_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindMismatchError(f"unknown measurement kind {self.kind!r}")
        z = np.asarray(self.value, dtype=float).reshape(-1)
        if z.size != _FULL_DIM[self.kind]:
            raise ValueError(f"{self.kind} value must have {_FULL_DIM[self.kind]} elements")
        R = np.asarray(self.covariance, dtype=float).reshape(z.size, z.size)
        if np.abs(R - R.T).max() > 1e-12 * max(1.0, np.abs(R).max()):
            raise ValueError("measurement covariance must be symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("measurement covariance must be positive definite") from None
        object.__setattr__(self, "value", z)
        object.__setattr__(self, "covariance", R)


@dataclass(frozen=True)
class MeasurementContext:
    """Everything a prediction needs beyond the state: the associated map
    feature, the camera, and the vehicle geometry."""

    params: VehicleParams = field(default_factory=VehicleParams)
    camera: Optional[CameraModel] = None
    landmark: Optional[np.ndarray] = None  # (3,) world point
    segment: Optional[np.ndarray] = None  # (2, 3) world endpoints


def variant_rows(kind: str, variant) -> tuple:
    """Row indices of the full sensed vector consumed by the given variant."""
    if state_space(variant) is State2D:
        return _SUBSET_2D[kind]
    return tuple(range(_FULL_DIM[kind]))


def measured_vector(measurement: Measurement, variant) -> np.ndarray:
    rows = variant_rows(measurement.kind, variant)
    return measurement.value[list(rows)]


def measured_covariance(measurement: Measurement, variant) -> np.ndarray:
    rows = list(variant_rows(measurement.kind, variant))
    return measurement.covariance[np.ix_(rows, rows)]


def innovation(measured: Measurement, predicted, variant="3d") -> np.ndarray:
    """Componentwise residual measured - predicted with angles wrapped."""
    rows = variant_rows(measured.kind, variant)
    z = measured.value[list(rows)]
    pred = np.asarray(predicted, dtype=float).reshape(-1)
    if pred.size != z.size:
        raise KindMismatchError(
            f"predicted vector has {pred.size} elements, {measured.kind} expects {z.size}"
        )
    r = z - pred
    angle_full = _ANGLE_COMPONENTS[measured.kind]
    for i, row in enumerate(rows):
        if row in angle_full:
            r[i] = wrap_angle(r[i])
    return r


def pose_of_state(state) -> Pose:
    """Vehicle pose implied by a filter state (z and pitch are 0 for 7 states)."""
    x = np.asarray(state, dtype=float)
    if x.size == State2D.DIM:
        return Pose(
            position=np.array([x[State2D.X], x[State2D.Y], 0.0]),
            yaw=x[State2D.YAW],
        )
    return Pose(
        position=x[[State3D.X, State3D.Y, State3D.Z]],
        yaw=x[State3D.YAW],
        pitch=x[State3D.PITCH],
    )


# --- GPS ------------------------------------------------------------------

def gps_predict(state) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    sp = state_space(x.size)
    return x[list(sp.POSITION)]


def gps_jacobian(variant) -> np.ndarray:
    """Identity on the position block, zero elsewhere."""
    sp = state_space(variant)
    H = np.zeros((len(sp.POSITION), sp.DIM))
    for row, col in enumerate(sp.POSITION):
        H[row, col] = 1.0
    return H


# --- Odometry -------------------------------------------------------------

def odometry_predict(state, params: VehicleParams) -> np.ndarray:
    """Predicted odometry bundle.

    13-state: (v, yaw_rate, pitch_rate, steer, h) where h is the preview
    height implied by the clothoid states.  7-state: (v, yaw_rate, steer).
    """
    x = np.asarray(state, dtype=float)
    if x.size == State2D.DIM:
        return np.array([speed(x), x[State2D.YAW_RATE], x[State2D.STEER]])
    h = vertical_height(x[State3D.C0], x[State3D.C1], params.preview_distance)
    return np.array([
        speed(x),
        x[State3D.YAW_RATE],
        x[State3D.PITCH_RATE],
        x[State3D.STEER],
        h,
    ])


def odometry_jacobian(state, params: VehicleParams, strict: bool = False) -> np.ndarray:
    """H for the odometry bundle; the speed row divides by v and is zeroed
    below V_MIN (or raises with ``strict=True``)."""
    x = np.asarray(state, dtype=float)
    sp = state_space(x.size)
    v = speed(x)
    vcols = list(sp.VELOCITY)
    if x.size == State2D.DIM:
        H = np.zeros((3, 7))
        H[1, State2D.YAW_RATE] = 1.0
        H[2, State2D.STEER] = 1.0
    else:
        d = params.preview_distance
        H = np.zeros((5, 13))
        H[1, State3D.YAW_RATE] = 1.0
        H[2, State3D.PITCH_RATE] = 1.0
        H[3, State3D.STEER] = 1.0
        H[4, State3D.C0] = d * d / 2.0
        H[4, State3D.C1] = d * d * d / 6.0
    if v < V_MIN:
        if strict:
            raise NearZeroSpeedError(f"speed {v:.3g} below {V_MIN}")
    else:
        H[0, vcols] = x[vcols] / v
    return H


# --- 3D point seen by the 3D sensor ----------------------------------------

def point3d_sensor_predict(state, landmark) -> np.ndarray:
    """Landmark position in the vehicle frame, R^T (X - T).

    The 7-state variant returns only the planar components.
    """
    x = np.asarray(state, dtype=float)
    z = geometry.world_to_vehicle(pose_of_state(x), np.asarray(landmark, dtype=float))
    return z[:2] if x.size == State2D.DIM else z


def point3d_sensor_jacobian_2d(state, landmark) -> np.ndarray:
    """Analytic 2x7 H for the planar vehicle-frame point measurement.

    Position block is -R^T; the yaw column is the lever arm (Zy, -Zx) of
    the predicted vehicle-frame point, vanishing when the landmark sits at
    the predicted position.
    """
    x = np.asarray(state, dtype=float)
    c, s = np.cos(x[State2D.YAW]), np.sin(x[State2D.YAW])
    zx, zy = point3d_sensor_predict(x, landmark)
    H = np.zeros((2, 7))
    H[0, State2D.X] = -c
    H[0, State2D.Y] = -s
    H[0, State2D.YAW] = zy
    H[1, State2D.X] = s
    H[1, State2D.Y] = -c
    H[1, State2D.YAW] = -zx
    return H


def _rot_z_dyaw(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def _rot_pitch_dpitch(pitch: float) -> np.ndarray:
    c, s = np.cos(pitch), np.sin(pitch)
    return np.array([[-s, 0.0, -c], [0.0, 0.0, 0.0], [c, 0.0, -s]])


def point3d_sensor_jacobian(state, landmark) -> np.ndarray:
    """Analytic H for either variant (3x13 in the full state)."""
    x = np.asarray(state, dtype=float)
    if x.size == State2D.DIM:
        return point3d_sensor_jacobian_2d(x, landmark)
    pose = pose_of_state(x)
    delta = np.asarray(landmark, dtype=float) - pose.position
    Rz = geometry.rot_z(pose.yaw)
    Rp = geometry.rot_pitch(pose.pitch)
    H = np.zeros((3, 13))
    H[:, [State3D.X, State3D.Y, State3D.Z]] = -(Rz @ Rp).T
    H[:, State3D.YAW] = (_rot_z_dyaw(pose.yaw) @ Rp).T @ delta
    H[:, State3D.PITCH] = (Rz @ _rot_pitch_dpitch(pose.pitch)).T @ delta
    return H


# --- Camera models (finite-difference Jacobians) ----------------------------

def point_camera_predict(state, camera: CameraModel, landmark) -> np.ndarray:
    """Pixel position of a world landmark through the vehicle-mounted camera."""
    P = camera.projection_matrix(pose_of_state(state))
    X = np.append(np.asarray(landmark, dtype=float), 1.0)
    return geometry.project_point(P, X)


def point_camera_predict_batch(state, camera: CameraModel, landmarks) -> np.ndarray:
    """(n, 2) pixels for (n, 3) landmarks; rows behind the camera are NaN."""
    P = camera.projection_matrix(pose_of_state(state))
    pts = np.asarray(landmarks, dtype=float).reshape(-1, 3)
    Xh = np.hstack([pts, np.ones((len(pts), 1))])
    return geometry.project_points(P, Xh)


def point_camera_jacobian(state, camera: CameraModel, landmarks,
                          step: float = 1e-6) -> np.ndarray:
    """Stacked (2n, dim) H for n landmarks by central differences.

    Rows are NaN when a perturbed state pushes the landmark out of view;
    callers should drop those features.
    """
    x = np.asarray(state, dtype=float)
    pts = np.asarray(landmarks, dtype=float).reshape(-1, 3)

    def f(xq):
        return point_camera_predict_batch(xq, camera, pts).reshape(-1)

    return central_difference_jacobian(f, x, step=step)


def line_camera_predict(state, camera: CameraModel, segment) -> HesseLine:
    """Project a lane segment (two world shape points) to a Hesse-form
    image line: Plucker matrix, then P L P^T, then normal form."""
    seg = np.asarray(segment, dtype=float).reshape(2, 3)
    a = np.append(seg[0], 1.0)
    b = np.append(seg[1], 1.0)
    line = geometry.plucker_from_points(a, b)
    P = camera.projection_matrix(pose_of_state(state))
    return geometry.line_to_hesse(geometry.project_line(P, line))


def line_camera_jacobian(state, camera: CameraModel, segment,
                         step: float = 1e-6) -> np.ndarray:
    """(2, dim) H for the (rho, gamma) line parameters by central differences.

    The gamma difference is wrapped so a stencil straddling the +-pi seam
    does not produce a spurious 2 pi / step slope.
    """
    x = np.asarray(state, dtype=float)
    seg = np.asarray(segment, dtype=float).reshape(2, 3)
    J = np.empty((2, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = step
        hi = line_camera_predict(x + dx, camera, seg)
        lo = line_camera_predict(x - dx, camera, seg)
        J[0, j] = (hi.rho - lo.rho) / (2.0 * step)
        J[1, j] = wrap_angle(hi.gamma - lo.gamma) / (2.0 * step)
    return J


def predict_and_jacobian(kind: str, state, context: MeasurementContext,
                         strict: bool = False):
    """Dispatch to the per-kind model: returns (predicted vector, H)."""
    x = np.asarray(state, dtype=float)
    if kind == GPS:
        return gps_predict(x), gps_jacobian(x.size)
    if kind == ODOMETRY:
        return odometry_predict(x, context.params), odometry_jacobian(
            x, context.params, strict=strict)
    if kind == POINT3D:
        return (point3d_sensor_predict(x, context.landmark),
                point3d_sensor_jacobian(x, context.landmark))
    if kind == CAMERA_POINT:
        return (point_camera_predict(x, context.camera, context.landmark),
                point_camera_jacobian(x, context.camera, context.landmark))
    if kind == CAMERA_LINE:
        pred = line_camera_predict(x, context.camera, context.segment)
        return pred.as_vector(), line_camera_jacobian(x, context.camera, context.segment)
    raise KindMismatchError(f"unknown measurement kind {kind!r}")
