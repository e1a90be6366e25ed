"""Pinhole camera model, rigid-body pose algebra, and cross-view point transfer.

Conventions (normative for the whole package):

* Camera frame: right-handed, +X right, +Y down, +Z forward.
* Projection: ``u = fx*x/z + cx``, ``v = fy*y/z + cy``; pixels are sampled at
  integer coordinates (no half-pixel offset).
* Poses are camera-to-world: ``world = R @ p_cam + t``.
* Depth rasters store z-depth in meters; values <= 0 or non-finite are invalid
  and never participate in reprojection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def _frozen_array(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_rotation(r: np.ndarray) -> None:
    if not np.all(np.isfinite(r)):
        raise ValueError("rotation has non-finite entries")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError("rotation determinant is not +1")


@dataclass(frozen=True)
class Intrinsics:
    """Calibrated pinhole intrinsics for one raster."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("raster dimensions must be >= 1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the raster")


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen_array(self.translation, (3,)))
        _check_rotation(self.rotation)
        if not np.all(np.isfinite(self.translation)):
            raise ValueError("translation has non-finite entries")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class RelativePose:
    """Rigid transform between two camera frames.

    ``relative_pose(pose_i, pose_j)`` returns the map from view-i camera
    coordinates to view-j camera coordinates.  The action executor and
    compiler (see :mod:`hsup.actions`) use the same container for the motion
    of a target camera expressed in the source camera frame.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen_array(self.translation, (3,)))
        _check_rotation(self.rotation)
        if not np.all(np.isfinite(self.translation)):
            raise ValueError("translation has non-finite entries")

    @staticmethod
    def identity() -> "RelativePose":
        return RelativePose(np.eye(3), np.zeros(3))

    def inverse(self) -> "RelativePose":
        rt = self.rotation.T
        return RelativePose(rt, -rt @ self.translation)

    def compose(self, other: "RelativePose") -> "RelativePose":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return RelativePose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z-depth raster (meters), row-major (height, width)."""

    values: np.ndarray
    validity: np.ndarray = field(init=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("depth raster must be 2-D (height, width)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        valid = np.isfinite(arr) & (arr > 0)
        valid.setflags(write=False)
        object.__setattr__(self, "validity", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CameraView:
    """Intrinsics + pose + depth: the geometric identity of one viewpoint."""

    intrinsics: Intrinsics
    pose: Pose
    depth: DepthMap

    def __post_init__(self):
        if (self.depth.width, self.depth.height) != (
            self.intrinsics.width,
            self.intrinsics.height,
        ):
            raise ValueError(
                "depth raster dimensions "
                f"{(self.depth.width, self.depth.height)} do not match intrinsics "
                f"{(self.intrinsics.width, self.intrinsics.height)}"
            )


def unproject(pixel, view: CameraView):
    """Lift an integer pixel to a camera-frame 3D point using its depth.

    Returns None when the pixel's depth is invalid; raises IndexError when the
    pixel is outside the raster.
    """
    u, v = int(pixel[0]), int(pixel[1])
    intr = view.intrinsics
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise IndexError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} raster")
    if not view.depth.validity[v, u]:
        return None
    z = view.depth.values[v, u]
    return np.array([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z])


def to_world(point, pose: Pose) -> np.ndarray:
    return pose.rotation @ np.asarray(point, dtype=np.float64) + pose.translation


def world_to_camera(point, pose: Pose) -> np.ndarray:
    return pose.rotation.T @ (np.asarray(point, dtype=np.float64) - pose.translation)


def project(point, intrinsics: Intrinsics):
    """Project a camera-frame point; None if behind the camera (z <= 0).

    The returned pixel is real-valued and may fall outside the raster.
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        return None
    pixel = np.array([intrinsics.fx * x / z + intrinsics.cx,
                      intrinsics.fy * y / z + intrinsics.cy])
    return pixel, z


def relative_pose(pose_i: Pose, pose_j: Pose) -> RelativePose:
    """Transform mapping camera-i coordinates to camera-j coordinates."""
    r = pose_j.rotation.T @ pose_i.rotation
    t = pose_j.rotation.T @ (pose_i.translation - pose_j.translation)
    return RelativePose(r, t)


def rotation_angle_deg(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle between two rotations, in [0, 180] degrees."""
    trace = float(np.trace(np.asarray(r1) @ np.asarray(r2).T))
    c = min(1.0, max(-1.0, (trace - 1.0) / 2.0))
    return math.degrees(math.acos(c))


def depth_consistent(projected_depth: float, observed_depth: float, threshold: float) -> bool:
    """Inclusive depth agreement test: |projected - observed| <= threshold."""
    return abs(projected_depth - observed_depth) <= threshold


def yaw_matrix(deg: float) -> np.ndarray:
    """Rotation about the camera +Y (down) axis; positive swings the view right."""
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def pitch_matrix(deg: float) -> np.ndarray:
    """Rotation about the camera +X axis; positive swings the view up (-Y)."""
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
