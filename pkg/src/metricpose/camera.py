"""Pinhole camera model and the pose containers shared by the other modules.

Units are millimeters for 3D points and pixels for image points throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import BehindCameraError, ContractError, InvalidInputError, InvalidRotationError

Frame = Literal["absolute", "root_relative"]
Space = Literal["pixel", "normalized"]


def _frozen_array(values, shape_tail, name, dtype=float):
    arr = np.array(values, dtype=dtype)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise ContractError(f"{name} must have shape (J, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(vals)):
            raise InvalidInputError(f"camera intrinsics must be finite, got {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_json(self) -> dict:
        return {"fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy)}

    @classmethod
    def from_json(cls, obj: dict) -> CameraIntrinsics:
        try:
            return cls(float(obj["fx"]), float(obj["fy"]), float(obj["cx"]), float(obj["cy"]))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed camera JSON: {exc!r}") from exc


@dataclass(frozen=True)
class Pose3D:
    """J joints in millimeters.

    ``frame`` is ``"absolute"`` (camera coordinates) or ``"root_relative"``; in the
    latter case the root joint sits at the origin. ``root_index`` may be None only
    for absolute poses whose root was dropped by joint subsetting.
    """

    joints: np.ndarray
    frame: Frame = "absolute"
    root_index: int | None = 0

    def __post_init__(self):
        joints = _frozen_array(self.joints, (3,), "Pose3D joints")
        object.__setattr__(self, "joints", joints)
        if self.frame not in ("absolute", "root_relative"):
            raise ContractError(f"unknown frame tag {self.frame!r}")
        if not np.all(np.isfinite(joints)):
            raise InvalidInputError("Pose3D coordinates must be finite")
        if self.root_index is not None and not 0 <= self.root_index < len(joints):
            raise ContractError(f"root_index {self.root_index} out of range for {len(joints)} joints")
        if self.frame == "root_relative":
            if self.root_index is None:
                raise ContractError("a root-relative pose needs a root_index")
            if np.any(np.abs(joints[self.root_index]) > 1e-9):
                raise ContractError("root-relative pose must have its root at the origin")

    def __array__(self, dtype=None, copy=None):
        if copy:
            return np.array(self.joints, dtype=dtype)
        return np.asarray(self.joints, dtype=dtype)

    def __len__(self):
        return len(self.joints)

    def to_json(self) -> dict:
        return {
            "frame": self.frame,
            "root_index": self.root_index,
            "joints": self.joints.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> Pose3D:
        try:
            return cls(np.asarray(obj["joints"], dtype=float), obj.get("frame", "absolute"), obj.get("root_index", 0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise InvalidInputError(f"malformed pose JSON: {exc!r}") from exc


@dataclass(frozen=True)
class Pose2D:
    """J image points with a validity mask. Invalid entries may hold anything, NaN included."""

    joints: np.ndarray
    space: Space = "pixel"
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        joints = _frozen_array(self.joints, (2,), "Pose2D joints")
        object.__setattr__(self, "joints", joints)
        if self.space not in ("pixel", "normalized"):
            raise ContractError(f"unknown space tag {self.space!r}")
        valid = np.ones(len(joints), bool) if self.valid is None else np.array(self.valid, dtype=bool)
        if valid.shape != (len(joints),):
            raise ContractError(f"validity mask must have shape ({len(joints)},), got {valid.shape}")
        valid.setflags(write=False)
        object.__setattr__(self, "valid", valid)
        if not np.all(np.isfinite(joints[valid])):
            raise InvalidInputError("valid Pose2D entries must be finite")

    def __array__(self, dtype=None, copy=None):
        if copy:
            return np.array(self.joints, dtype=dtype)
        return np.asarray(self.joints, dtype=dtype)

    def __len__(self):
        return len(self.joints)

    def to_json(self) -> dict:
        return {"space": self.space, "joints": self.joints.tolist(), "valid": self.valid.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> Pose2D:
        try:
            return cls(np.asarray(obj["joints"], dtype=float), obj.get("space", "pixel"), obj.get("valid"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise InvalidInputError(f"malformed 2D pose JSON: {exc!r}") from exc


def joints_array(p, dim=3) -> np.ndarray:
    """Coordinates of a pose object or array-like as a float ndarray of shape (J, dim)."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ContractError(f"expected joints of shape (J, {dim}), got {arr.shape}")
    return arr


def normalize_points(K: CameraIntrinsics, p: Pose2D) -> Pose2D:
    """Pixel coordinates to normalized image coordinates, ``K^-1 (x, y, 1)``."""
    if p.space != "pixel":
        raise ContractError(f"normalize_points expects a pixel-space pose, got {p.space!r}")
    xy = (p.joints - [K.cx, K.cy]) / [K.fx, K.fy]
    return Pose2D(xy, "normalized", p.valid)


def denormalize_points(K: CameraIntrinsics, p: Pose2D) -> Pose2D:
    if p.space != "normalized":
        raise ContractError(f"denormalize_points expects a normalized pose, got {p.space!r}")
    return Pose2D(p.joints * [K.fx, K.fy] + [K.cx, K.cy], "pixel", p.valid)


def project(K: CameraIntrinsics, p: Pose3D) -> Pose2D:
    joints = joints_array(p)
    z = joints[:, 2]
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        j = int(bad[0])
        raise BehindCameraError(f"joint {j} has non-positive depth Z={z[j]}", joint=j)
    x = K.fx * joints[:, 0] / z + K.cx
    y = K.fy * joints[:, 1] / z + K.cy
    return Pose2D(np.stack([x, y], axis=1), "pixel")


def crop_rotation(K: CameraIntrinsics, crop_center) -> np.ndarray:
    """Rotation taking the camera frame to a virtual camera looking through ``crop_center``.

    The back-projected ray of the crop center is mapped onto the optical axis by the
    smallest rotation that does so (axis perpendicular to both), so the third row of
    the result is the unit ray itself.
    """
    u, v = crop_center
    ray = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    ray /= np.linalg.norm(ray)
    axis = np.cross(ray, [0.0, 0.0, 1.0])
    c = ray[2]
    skew = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    # c > 0 always since the ray has positive depth, so 1 + c never vanishes
    return np.eye(3) + skew + skew @ skew / (1.0 + c)


def rotate_pose(R, p: Pose3D) -> Pose3D:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
        raise InvalidRotationError("rotation matrix is not orthonormal")
    return Pose3D(p.joints @ R.T, p.frame, p.root_index)
