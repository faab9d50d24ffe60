"""Frame transforms, pinhole projection, and projective line algebra.

World frame is right-handed with z up.  The vehicle frame has x forward,
y left, z up.  A camera is mounted with the same axis convention as the
vehicle ("mount" frame); the optical frame used for projection follows the
computer-vision convention (x right, y down, z forward along the optical
axis).

3D lines are carried as 4x4 skew-symmetric Plucker matrices L = A B^T - B A^T
built from two homogeneous points.  Image lines produced by projection are
homogeneous 3-vectors l = (l1, l2, l3) defined up to scale; for filtering
they are converted to the Hesse normal form x cos(gamma) + y sin(gamma) = rho,
whose two parameters stay approximately Gaussian under pixel noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tolerances used throughout: geometric incidence checks at 1e-9,
# orthonormality / round-trip identities at 1e-12 (double precision).
INCIDENCE_TOL = 1e-9
ORTHO_TOL = 1e-12

# Mount (x fwd, y left, z up) -> optical (x right, y down, z fwd).
_MOUNT_TO_OPTICAL = np.array([
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
])


class DegeneratePointsError(ValueError):
    """The two generator points coincide projectively and span no line."""


class ProjectionError(ValueError):
    """A projection is undefined for the given camera/feature geometry."""


class BehindCameraError(ProjectionError):
    """Point has non-positive depth along the optical axis."""


class CameraCenterError(ProjectionError):
    """Point projects from the camera center; image location undefined."""


class LineThroughCenterError(ProjectionError):
    """3D line passes through the camera center; its image degenerates."""


class LineAtInfinityError(ProjectionError):
    """Homogeneous line (0, 0, l3) has no Hesse normal form."""


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to the interval (-pi, pi]."""
    wrapped = np.mod(theta, 2.0 * np.pi)
    wrapped = np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)
    return float(wrapped) if np.isscalar(theta) else wrapped


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_pitch(pitch: float) -> np.ndarray:
    """Rotation lifting the x-axis by ``pitch`` (positive pitch = nose up)."""
    c, s = np.cos(pitch), np.sin(pitch)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


@dataclass(frozen=True)
class Pose:
    """Rigid placement with yaw and pitch only (roll is structurally zero).

    ``rotation()`` maps local coordinates to the parent frame; positive
    pitch raises the local x-axis above the horizontal plane.
    """

    position: np.ndarray
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "pitch", wrap_angle(float(self.pitch)))

    def rotation(self) -> np.ndarray:
        return rot_z(self.yaw) @ rot_pitch(self.pitch)

    def transform(self) -> np.ndarray:
        """Homogeneous 4x4 local-to-parent transform."""
        T = np.eye(4)
        T[:3, :3] = self.rotation()
        T[:3, 3] = self.position
        return T

    def inverse_transform(self) -> np.ndarray:
        """Homogeneous 4x4 parent-to-local transform."""
        R = self.rotation()
        T = np.eye(4)
        T[:3, :3] = R.T
        T[:3, 3] = -R.T @ self.position
        return T


def vehicle_to_world(pose: Pose, p_veh) -> np.ndarray:
    """Map vehicle-frame point(s) to the world frame: R p + t.

    Accepts a single 3-vector or an (n, 3) batch.
    """
    p = np.asarray(p_veh, dtype=float)
    return p @ pose.rotation().T + pose.position


def world_to_vehicle(pose: Pose, p_w) -> np.ndarray:
    """Exact inverse of :func:`vehicle_to_world`."""
    p = np.asarray(p_w, dtype=float)
    return (p - pose.position) @ pose.rotation()


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics K plus mounting pose in the vehicle frame."""

    intrinsics: np.ndarray
    mount: Pose
    image_size: tuple = (1280, 720)

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        object.__setattr__(self, "intrinsics", K)
        w, h = self.image_size
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= K[0, 2] <= w and 0 <= K[1, 2] <= h):
            raise ValueError("principal point outside image bounds")
        if abs(K[1, 0]) > 0 or abs(K[2, 0]) > 0 or abs(K[2, 1]) > 0 or abs(K[2, 2] - 1.0) > 0:
            raise ValueError("intrinsics must be upper triangular with K[2,2] == 1")

    def projection_matrix(self, vehicle_pose: Pose) -> np.ndarray:
        """3x4 matrix taking homogeneous world points to pixel coordinates."""
        world_to_cam = self.mount.inverse_transform() @ vehicle_pose.inverse_transform()
        return self.intrinsics @ _MOUNT_TO_OPTICAL @ world_to_cam[:3, :]

    def contains(self, pixel) -> bool:
        u, v = pixel
        w, h = self.image_size
        return 0.0 <= u <= w and 0.0 <= v <= h


@dataclass(frozen=True)
class PluckerLine:
    """3D line as the 4x4 skew-symmetric rank-2 matrix A B^T - B A^T."""

    matrix: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.matrix, dtype=float).reshape(4, 4)
        object.__setattr__(self, "matrix", L)
        scale = np.abs(L).max()
        if scale == 0.0:
            raise DegeneratePointsError("zero Plucker matrix is not a line")
        if np.abs(L + L.T).max() > 1e-12 * max(1.0, scale):
            raise ValueError("Plucker matrix must be skew-symmetric")
        s = np.linalg.svd(L, compute_uv=False)
        if s[2] > 1e-9 * s[0] or s[3] > 1e-9 * s[0]:
            raise ValueError("Plucker matrix must have rank 2")


def plucker_from_points(a, b) -> PluckerLine:
    """Build the Plucker matrix of the line through homogeneous points a, b.

    Swapping the arguments negates the matrix, which is the same projective
    line.  Raises :class:`DegeneratePointsError` when the points coincide
    projectively.
    """
    A = np.asarray(a, dtype=float).reshape(4)
    B = np.asarray(b, dtype=float).reshape(4)
    L = np.outer(A, B) - np.outer(B, A)
    scale = np.linalg.norm(A) * np.linalg.norm(B)
    if np.abs(L).max() <= 1e-12 * max(scale, 1e-300):
        raise DegeneratePointsError("generator points are projectively equal")
    return PluckerLine(L)


def project_point(P, X) -> np.ndarray:
    """Project a homogeneous world point through a 3x4 camera matrix.

    Returns dehomogenized pixel coordinates.  Raises
    :class:`BehindCameraError` for non-positive depth and
    :class:`CameraCenterError` when the point maps to the zero vector.
    """
    P = np.asarray(P, dtype=float).reshape(3, 4)
    Xh = np.asarray(X, dtype=float).reshape(4)
    y = P @ Xh
    norm = np.linalg.norm(y)
    if norm <= 1e-12 * max(1.0, np.abs(Xh).max() * np.abs(P).max()):
        raise CameraCenterError("point projects from the camera center")
    if y[2] <= 0.0:
        raise BehindCameraError("point is behind the camera (depth <= 0)")
    return y[:2] / y[2]


def project_points(P, X) -> np.ndarray:
    """Batched :func:`project_point` over rows of an (n, 4) array.

    Returns an (n, 2) pixel array; rows with non-positive depth come back
    as NaN instead of raising, so callers can mask visibility.
    """
    P = np.asarray(P, dtype=float).reshape(3, 4)
    Xh = np.asarray(X, dtype=float).reshape(-1, 4)
    y = Xh @ P.T
    out = np.full((len(Xh), 2), np.nan)
    ok = y[:, 2] > 1e-12
    out[ok] = y[ok, :2] / y[ok, 2:3]
    return out


def project_line(P, line: PluckerLine) -> np.ndarray:
    """Project a Plucker line to the image: [l]_x = P L P^T.

    The product is a 3x3 skew-symmetric matrix holding the homogeneous
    image line l, returned as a 3-vector defined up to scale.  Raises
    :class:`LineThroughCenterError` when the line passes through the
    camera center and the product vanishes.
    """
    P = np.asarray(P, dtype=float).reshape(3, 4)
    M = P @ line.matrix @ P.T
    scale = np.abs(P).max() ** 2 * np.abs(line.matrix).max()
    if np.abs(M).max() <= 1e-12 * max(scale, 1e-300):
        raise LineThroughCenterError("line passes through the camera center")
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


@dataclass(frozen=True)
class HesseLine:
    """Hesse normal form x cos(gamma) + y sin(gamma) = rho with rho >= 0.

    gamma is the direction of the line normal and lies in (-pi, pi]; for
    lines through the origin (rho == 0) it is canonicalized to
    (-pi/2, pi/2] so the parameterization stays unique.
    """

    gamma: float
    rho: float

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("rho must be non-negative")
        object.__setattr__(self, "gamma", wrap_angle(float(self.gamma)))
        object.__setattr__(self, "rho", float(self.rho))

    def as_vector(self) -> np.ndarray:
        """(rho, gamma) ordering used by the filter residuals."""
        return np.array([self.rho, self.gamma])


def line_to_hesse(l) -> HesseLine:
    """Convert a homogeneous image line to Hesse normal form.

    The sign of (l1, l2, l3) is chosen so the normal points from the origin
    toward the line, making rho = |l3| / hypot(l1, l2) non-negative.
    """
    v = np.asarray(l, dtype=float).reshape(3)
    n = np.hypot(v[0], v[1])
    if n <= 1e-15 * max(abs(v[2]), 1.0):
        raise LineAtInfinityError("line (0, 0, l3) is the line at infinity")
    rho = abs(v[2]) / n
    if v[2] != 0.0:
        sign = -np.sign(v[2])
        gamma = np.arctan2(sign * v[1], sign * v[0])
    else:
        gamma = np.arctan2(v[1], v[0])
        if gamma <= -np.pi / 2:
            gamma += np.pi
        elif gamma > np.pi / 2:
            gamma -= np.pi
    return HesseLine(gamma=gamma, rho=rho)


def hesse_residual(measured: HesseLine, predicted: HesseLine) -> np.ndarray:
    """Innovation (d_rho, d_gamma) with the angle difference wrapped."""
    return np.array([
        measured.rho - predicted.rho,
        wrap_angle(measured.gamma - predicted.gamma),
    ])
