"""Volumetric heatmaps: spatial softmax and soft-argmax decoding.

Two axis conventions are supported. In ``metric`` mode all three axes span a fixed
metric extent (2.2 m by default) independent of the image. In ``image25d`` mode the
x/y axes are image pixels over the crop and only the depth axis is metric.

Bin ``p`` decodes to ``p * step`` along its axis, so bin 0 sits at coordinate 0.
Volumes are stored joint-major as arrays of shape (J, nx, ny, nz).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import BinaryIO, Literal

import numpy as np

from .camera import Pose3D, joints_array
from .errors import ContractError, InvalidInputError, OutOfVolumeError

DEFAULT_EXTENT_MM = 2200.0
DEFAULT_CROP_PX = 256
DEFAULT_STRIDE_PX = 32
DEFAULT_DEPTH_BINS = 8


@dataclass(frozen=True)
class HeatmapGeometry:
    bins: tuple[int, int, int]
    mode: Literal["metric", "image25d"] = "metric"
    extents_mm: tuple[float, float, float] = (DEFAULT_EXTENT_MM,) * 3
    crop_px: tuple[int, int] | None = None
    stride_px: int | None = None

    def __post_init__(self):
        bins = tuple(int(b) for b in self.bins)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "extents_mm", tuple(float(e) for e in self.extents_mm))
        if len(bins) != 3 or min(bins) < 1:
            raise ContractError(f"bin counts must be three positive integers, got {self.bins}")
        if len(self.extents_mm) != 3 or min(self.extents_mm) <= 0:
            raise ContractError(f"extents must be three positive lengths, got {self.extents_mm}")
        if self.mode == "image25d":
            if self.crop_px is None or self.stride_px is None:
                raise ContractError("image25d geometry needs crop_px and stride_px")
            w, h = self.crop_px
            s = self.stride_px
            if s < 1 or w % s or h % s:
                raise ContractError(f"crop {self.crop_px} must be divisible by stride {s}")
            if (bins[0], bins[1]) != (w // s, h // s):
                raise ContractError(f"image25d bins {bins[:2]} must equal crop/stride {(w // s, h // s)}")
        elif self.mode != "metric":
            raise ContractError(f"unknown heatmap mode {self.mode!r}")

    @classmethod
    def metric(cls, bins=(8, 8, 8), extents_mm=(DEFAULT_EXTENT_MM,) * 3) -> HeatmapGeometry:
        return cls(tuple(bins), "metric", tuple(extents_mm))

    @classmethod
    def metric_from_crop(cls, crop_px=DEFAULT_CROP_PX, stride_px=DEFAULT_STRIDE_PX, depth_bins=DEFAULT_DEPTH_BINS,
                         extents_mm=(DEFAULT_EXTENT_MM,) * 3) -> HeatmapGeometry:
        """Metric geometry whose x/y resolution follows from a square crop and backbone stride."""
        if crop_px % stride_px:
            raise ContractError(f"crop {crop_px} must be divisible by stride {stride_px}")
        n = crop_px // stride_px
        return cls((n, n, depth_bins), "metric", tuple(extents_mm))

    @classmethod
    def image25d(cls, crop_px=(DEFAULT_CROP_PX, DEFAULT_CROP_PX), stride_px=DEFAULT_STRIDE_PX,
                 depth_bins=DEFAULT_DEPTH_BINS, depth_extent_mm=DEFAULT_EXTENT_MM) -> HeatmapGeometry:
        w, h = crop_px
        if stride_px < 1 or w % stride_px or h % stride_px:
            raise ContractError(f"crop {crop_px} must be divisible by stride {stride_px}")
        return cls((w // stride_px, h // stride_px, depth_bins), "image25d",
                   (float(w), float(h), float(depth_extent_mm)), (w, h), stride_px)

    @property
    def step(self) -> np.ndarray:
        """Coordinate increment per bin along each axis (mm, or px for image axes in 2.5D)."""
        if self.mode == "image25d":
            s = float(self.stride_px)
            return np.array([s, s, self.extents_mm[2] / self.bins[2]])
        return np.asarray(self.extents_mm) / np.asarray(self.bins)

    @property
    def upper(self) -> np.ndarray:
        """Largest decodable coordinate per axis (the coordinate of the last bin)."""
        return (np.asarray(self.bins) - 1) * self.step

    def to_json(self) -> dict:
        out = {"bins": list(self.bins), "mode": self.mode, "extents_mm": list(self.extents_mm)}
        if self.mode == "image25d":
            out["crop_px"] = list(self.crop_px)
            out["stride_px"] = self.stride_px
        return out

    @classmethod
    def from_json(cls, obj: dict) -> HeatmapGeometry:
        try:
            mode = obj.get("mode", "metric")
            if mode == "image25d":
                return cls(tuple(obj["bins"]), mode, tuple(obj["extents_mm"]), tuple(obj["crop_px"]),
                           int(obj["stride_px"]))
            return cls(tuple(obj["bins"]), mode, tuple(obj.get("extents_mm", (DEFAULT_EXTENT_MM,) * 3)))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed heatmap geometry: {exc!r}") from exc


DEFAULT_METRIC_GEOMETRY = HeatmapGeometry.metric_from_crop()
DEFAULT_25D_GEOMETRY = HeatmapGeometry.image25d()


@dataclass(frozen=True)
class HeatmapVolume:
    values: np.ndarray
    geometry: HeatmapGeometry

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 4 or values.shape[1:] != self.geometry.bins:
            raise ContractError(f"volume shape {values.shape} does not match bins {self.geometry.bins}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidInputError("heatmap values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_joints(self) -> int:
        return self.values.shape[0]

    def is_normalized(self, atol=1e-6) -> bool:
        return bool(np.all(np.abs(self.values.sum(axis=(1, 2, 3)) - 1.0) <= atol))


def spatial_softmax(logits, geometry: HeatmapGeometry | None = None) -> HeatmapVolume:
    """Softmax over the three spatial axes of each joint's volume."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 4:
        raise ContractError(f"logits must have shape (J, nx, ny, nz), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits contain NaN or infinite values")
    if geometry is None:
        geometry = HeatmapGeometry.metric(logits.shape[1:])
    shifted = logits - logits.max(axis=(1, 2, 3), keepdims=True)
    e = np.exp(shifted)
    return HeatmapVolume(e / e.sum(axis=(1, 2, 3), keepdims=True), geometry)


def _expected_indices(values: np.ndarray) -> np.ndarray:
    """Per-joint expectation of the (p, q, r) bin indices, shape (J, 3)."""
    out = np.empty((values.shape[0], 3))
    for axis in range(3):
        others = tuple(a + 1 for a in range(3) if a != axis)
        marginal = values.sum(axis=others)
        out[:, axis] = marginal @ np.arange(values.shape[axis + 1], dtype=float)
    return out


def _check_normalized(v: HeatmapVolume):
    if not v.is_normalized():
        raise ContractError("soft-argmax expects per-joint volumes summing to 1")


def soft_argmax_metric(v: HeatmapVolume) -> np.ndarray:
    """Decode a metric volume to (J, 3) coordinates in mm, up to translation."""
    if v.geometry.mode != "metric":
        raise ContractError(f"soft_argmax_metric needs a metric volume, got {v.geometry.mode!r}")
    _check_normalized(v)
    return _expected_indices(v.values) * v.geometry.step


def soft_argmax_25d(v: HeatmapVolume) -> tuple[np.ndarray, np.ndarray]:
    """Decode a 2.5D volume to crop pixel coordinates (J, 2) and depths in [0, D) mm (J,).

    Depths are not root-centered here.
    """
    if v.geometry.mode != "image25d":
        raise ContractError(f"soft_argmax_25d needs an image25d volume, got {v.geometry.mode!r}")
    _check_normalized(v)
    coords = _expected_indices(v.values) * v.geometry.step
    return coords[:, :2], coords[:, 2]


def root_center(p, root_index: int | None = None) -> Pose3D:
    """Subtract the root joint from every joint.

    Accepts a Pose3D (its own root index is used unless overridden) or a (J, 3) array.
    """
    if isinstance(p, Pose3D):
        root = p.root_index if root_index is None else root_index
    else:
        root = 0 if root_index is None else root_index
    joints = joints_array(p)
    if root is None:
        raise ContractError("cannot root-center a pose without a root joint")
    return Pose3D(joints - joints[root], "root_relative", root)


def synthesize_gaussian_volume(targets, geometry: HeatmapGeometry, sigma_bins: float) -> HeatmapVolume:
    """Normalized isotropic Gaussian blobs (in bin units) centered on each target.

    ``targets`` holds decoded-space coordinates, shape (J, 3): mm for metric volumes,
    (px, px, mm) for image25d volumes.
    """
    if not sigma_bins > 0:
        raise ContractError(f"sigma_bins must be positive, got {sigma_bins}")
    targets = joints_array(targets)
    if np.any(targets < 0) or np.any(targets > geometry.upper):
        raise OutOfVolumeError("target lies outside the decodable volume")
    centers = targets / geometry.step
    axes = []
    for axis in range(3):
        idx = np.arange(geometry.bins[axis], dtype=float)
        axes.append(np.exp(-0.5 * ((idx[None, :] - centers[:, axis, None]) / sigma_bins) ** 2))
    vol = np.einsum("ji,jk,jl->jikl", *axes)
    vol /= vol.sum(axis=(1, 2, 3), keepdims=True)
    return HeatmapVolume(vol, geometry)


def write_volume(fh: BinaryIO, v: HeatmapVolume):
    """One JSON header line, then the values as little-endian float32 in (J, nx, ny, nz) C order."""
    header = {"joints": v.n_joints, **v.geometry.to_json()}
    fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
    fh.write(np.ascontiguousarray(v.values, dtype="<f4").tobytes())


def read_volume(fh: BinaryIO) -> HeatmapVolume:
    try:
        header = json.loads(fh.readline().decode("utf-8"))
        geometry = HeatmapGeometry.from_json(header)
        n = int(header["joints"]) * int(np.prod(geometry.bins))
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed volume header: {exc!r}") from exc
    data = np.frombuffer(fh.read(4 * n), dtype="<f4")
    if data.size != n:
        raise InvalidInputError(f"volume payload truncated: expected {n} floats, got {data.size}")
    return HeatmapVolume(data.reshape(int(header["joints"]), *geometry.bins).astype(float), geometry)
