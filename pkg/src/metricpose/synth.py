"""Synthetic scenes with exact ground truth, used as the verification oracle.

Random numbers come from numpy's Philox counter-based bit generator seeded with
the scene seed; Gaussian draws use ``Generator.standard_normal``. Scenes are
expressed in the virtual camera of the person crop (see ``camera.crop_rotation``),
so by default the root sits on the optical axis; ``lateral_spread`` moves it off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .camera import CameraIntrinsics, Pose2D, Pose3D, denormalize_points
from .errors import ConfigurationError, ContractError
from .heatmap import DEFAULT_EXTENT_MM
from .reconstruction import (ReconstructionInput, border_mask, depth_ratio, solve_root_full,
                             solve_root_weak)
from .scale_recovery import Pose25D
from .skeleton import DEFAULT_BONES, BoneSpec, bone_root, tree_order

DEFAULT_CAMERA = CameraIntrinsics(1500.0, 1500.0, 960.0, 540.0)
REJECTION_BUDGET = 1000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class NoiseModel:
    sigma_2d: float = 0.0
    """standard deviation on normalized image coordinates"""
    sigma_3d_mm: float = 0.0
    """standard deviation on root-relative 3D coordinates"""

    def __post_init__(self):
        if self.sigma_2d < 0 or self.sigma_3d_mm < 0:
            raise ConfigurationError("noise levels must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    n_people: int = 1
    depth_range_mm: tuple[float, float] = (2000.0, 8000.0)
    bones: BoneSpec = DEFAULT_BONES
    noise: NoiseModel = field(default_factory=NoiseModel)
    truncation: bool = False
    seed: int = 0
    lateral_spread: float = 0.0
    camera: CameraIntrinsics = DEFAULT_CAMERA
    border_px: float = 32.0

    def __post_init__(self):
        lo, hi = self.depth_range_mm
        if not 0 < lo <= hi:
            raise ConfigurationError(f"invalid depth range {self.depth_range_mm}")
        if self.n_people < 1:
            raise ConfigurationError("need at least one person")
        if self.lateral_spread < 0:
            raise ConfigurationError("lateral_spread must be >= 0")

    @classmethod
    def from_json(cls, obj: dict) -> SceneSpec:
        obj = dict(obj)
        kwargs = {}
        if "bones" in obj:
            kwargs["bones"] = BoneSpec.from_json(obj.pop("bones"))
        if "camera" in obj:
            kwargs["camera"] = CameraIntrinsics.from_json(obj.pop("camera"))
        noise = obj.pop("noise", {})
        kwargs["noise"] = NoiseModel(float(noise.get("sigma_2d", 0.0)), float(noise.get("sigma_3d_mm", 0.0)))
        if "depth_range_mm" in obj:
            kwargs["depth_range_mm"] = tuple(float(v) for v in obj.pop("depth_range_mm"))
        for key in ("n_people", "truncation", "seed", "lateral_spread", "border_px"):
            if key in obj:
                kwargs[key] = obj.pop(key)
        if obj:
            raise ConfigurationError(f"unknown scene fields: {sorted(obj)}")
        return cls(**kwargs)


def _joint_count(bones: BoneSpec) -> int:
    return bones.n_joints if bones.n_joints is not None else int(bones.edge_array.max()) + 1


def random_pose(bones: BoneSpec, rng: np.random.Generator, extent_mm: float = DEFAULT_EXTENT_MM) -> Pose3D:
    """Root-relative skeleton with every bone at its target length in a uniform random direction.

    Poses whose per-axis spread exceeds ``extent_mm`` are rejected and redrawn.
    """
    root = bone_root(bones)
    n = _joint_count(bones)
    length = {frozenset(e): t for e, t in zip(bones.edges, bones.target_lengths)}
    order = tree_order(bones.edges, root, n)
    for _ in range(REJECTION_BUDGET):
        joints = np.zeros((n, 3))
        dirs = rng.standard_normal((len(order), 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for (parent, child), d in zip(order, dirs):
            joints[child] = joints[parent] + length[frozenset((parent, child))] * d
        if np.all(np.ptp(joints, axis=0) <= extent_mm):
            return Pose3D(joints, "root_relative", root)
    raise ConfigurationError(f"no pose fit in a {extent_mm} mm cube after {REJECTION_BUDGET} draws")


class ProjectedScene(NamedTuple):
    pixel: Pose2D
    normalized: Pose2D
    pose25d: Pose25D
    absolute: Pose3D
    """exact ground truth"""
    relative: Pose3D
    """root-relative 3D observation, with 3D noise applied"""


def place_and_project(pose: Pose3D, K: CameraIntrinsics, offset, noise: NoiseModel = NoiseModel(),
                      rng: np.random.Generator | None = None, valid=None) -> ProjectedScene:
    """Translate a root-relative pose by ``offset`` and observe it through ``K``.

    Noise is added to the normalized image coordinates and to the non-root relative
    coordinates; ``absolute`` is always the exact, noise-free pose.
    """
    if pose.frame != "root_relative":
        raise ContractError("place_and_project takes a root-relative pose")
    absolute = Pose3D(pose.joints + np.asarray(offset, dtype=float), "absolute", pose.root_index)
    z = absolute.joints[:, 2]
    if np.any(z <= 0):
        raise ContractError("placed pose has joints behind the camera")
    xy = absolute.joints[:, :2] / z[:, None]
    rel = pose.joints.copy()
    if noise.sigma_2d > 0 or noise.sigma_3d_mm > 0:
        if rng is None:
            raise ContractError("noisy observation needs an rng")
        xy = xy + noise.sigma_2d * rng.standard_normal(xy.shape)
        rel_noise = rng.standard_normal(rel.shape)
        rel_noise[pose.root_index] = 0.0
        rel = rel + noise.sigma_3d_mm * rel_noise
    normalized = Pose2D(xy, "normalized", valid)
    pixel = denormalize_points(K, normalized)
    return ProjectedScene(pixel, normalized, Pose25D(normalized, rel[:, 2]), absolute,
                          Pose3D(rel, "root_relative", pose.root_index))


class Box(NamedTuple):
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h


def is_admissible_crop(crop: Box, bbox: Box) -> bool:
    return (crop.x >= bbox.x and crop.y >= bbox.y and crop.x + crop.w <= bbox.x + bbox.w
            and crop.y + crop.h <= bbox.y + bbox.h and crop.area >= 0.25 * bbox.area)


def truncated_crop(bbox: Box, rng: np.random.Generator) -> Box:
    """Random sub-rectangle of ``bbox`` covering at least a quarter of its area.

    Width and height are uniform in (0, side] conditioned on the area bound
    (rejection sampling); the position is uniform among placements inside ``bbox``.
    """
    for _ in range(REJECTION_BUDGET):
        w, h = (1.0 - rng.random(2)) * [bbox.w, bbox.h]
        if w * h >= 0.25 * bbox.area:
            x = bbox.x + rng.random() * (bbox.w - w)
            y = bbox.y + rng.random() * (bbox.h - h)
            return Box(float(x), float(y), float(w), float(h))
    raise ConfigurationError("could not sample an admissible crop")


def person_box(pixel: Pose2D) -> Box:
    """Bounding square of the projected joints."""
    pts = pixel.joints[pixel.valid]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    side = float(np.max(hi - lo))
    cx, cy = (lo + hi) / 2
    return Box(float(cx - side / 2), float(cy - side / 2), side, side)


def truncation_mask(pixel: Pose2D, rng: np.random.Generator, border_px: float) -> tuple[np.ndarray, Box]:
    """Validity after a random truncating crop: joints at least ``border_px`` inside it."""
    crop = truncated_crop(person_box(pixel), rng)
    local = Pose2D(pixel.joints - [crop.x, crop.y], "pixel", pixel.valid)
    return border_mask(local, crop.w, crop.h, border_px), crop


def random_scene(spec: SceneSpec, rng: np.random.Generator) -> ProjectedScene:
    """One person at a uniform depth in ``spec.depth_range_mm`` with the scene's noise and truncation settings."""
    pose = random_pose(spec.bones, rng)
    z0 = rng.uniform(*spec.depth_range_mm)
    lateral = rng.uniform(-spec.lateral_spread, spec.lateral_spread, 2) if spec.lateral_spread else np.zeros(2)
    offset = np.array([lateral[0] * z0, lateral[1] * z0, z0])
    while np.any(pose.joints[:, 2] + z0 <= 0):
        pose = random_pose(spec.bones, rng)
    mask = None
    if spec.truncation:
        exact = place_and_project(pose, spec.camera, offset)
        mask, _ = truncation_mask(exact.pixel, rng, spec.border_px)
    scene = place_and_project(pose, spec.camera, offset, spec.noise, rng, mask)
    return scene


def scenes(spec: SceneSpec, count: int) -> list[list[ProjectedScene]]:
    """``count`` scenes of ``spec.n_people`` independently placed people each, reproducible from the seed."""
    rng = make_rng(spec.seed)
    return [[random_scene(spec, rng) for _ in range(spec.n_people)] for _ in range(count)]


def distance_for_ratio(rel: Pose3D, ratio: float) -> float:
    """Root depth at which the pose's farthest-to-closest depth ratio equals ``ratio``."""
    dz = rel.joints[:, 2]
    if ratio <= 1.0 or dz.max() == dz.min():
        raise ContractError(f"ratio {ratio} is not reachable for this pose by moving it")
    return float((dz.max() - ratio * dz.min()) / (ratio - 1.0))


class SweepRow(NamedTuple):
    ratio: float
    solver: str
    noise_2d: float
    mean_error_mm: float
    median_error_mm: float
    mean_rel_error: float
    median_rel_error: float


def depth_ratio_sweep(spec: SceneSpec, ratios, n_scenes: int = 500, noisy: bool = True) -> list[SweepRow]:
    """Root-depth error of weak and full perspective reconstruction per target depth ratio.

    The same poses and noise draws are reused for every ratio. A ratio above 1 is
    reached by moving the person along the viewing direction; ratio 1 uses the
    pose flattened to zero depth variation at a depth drawn from ``depth_range_mm``.
    Errors are absolute root-depth errors in mm, and the same divided by the true depth.
    Rows are ordered by ratio, then noise level (noise-free first), then solver.
    """
    ratios = [float(r) for r in ratios]
    if any(r < 1.0 for r in ratios):
        raise ConfigurationError("depth ratios must be >= 1")
    rng = make_rng(spec.seed)
    trials = []
    for _ in range(n_scenes):
        pose = random_pose(spec.bones, rng)
        while np.ptp(pose.joints[:, 2]) == 0:
            pose = random_pose(spec.bones, rng)
        lateral = rng.uniform(-spec.lateral_spread, spec.lateral_spread, 2)
        flat_depth = rng.uniform(*spec.depth_range_mm)
        noise_xy = rng.standard_normal((len(pose), 2))
        noise_rel = rng.standard_normal((len(pose), 3))
        noise_rel[pose.root_index] = 0.0
        trials.append((pose, lateral, flat_depth, noise_xy, noise_rel))

    levels = [0.0] + ([spec.noise.sigma_2d] if noisy and (spec.noise.sigma_2d or spec.noise.sigma_3d_mm) else [])
    rows = []
    for ratio in ratios:
        errors = {(lvl, s): [] for lvl in levels for s in ("weak", "full")}
        depths = []
        for pose, lateral, flat_depth, noise_xy, noise_rel in trials:
            if ratio == 1.0:
                flat = pose.joints.copy()
                flat[:, 2] = 0.0
                pose = Pose3D(flat, "root_relative", pose.root_index)
                z0 = flat_depth
            else:
                z0 = distance_for_ratio(pose, ratio)
            offset = np.array([lateral[0] * z0, lateral[1] * z0, z0])
            absolute = pose.joints + offset
            xy = absolute[:, :2] / absolute[:, 2:]
            depths.append(z0)
            for lvl in levels:
                if lvl == 0.0:
                    obs_xy, rel = xy, pose.joints
                else:
                    obs_xy = xy + spec.noise.sigma_2d * noise_xy
                    rel = pose.joints + spec.noise.sigma_3d_mm * noise_rel
                inp = ReconstructionInput(Pose2D(obs_xy, "normalized"), Pose3D(rel, "root_relative", pose.root_index))
                errors[(lvl, "weak")].append(abs(solve_root_weak(inp).offset[2] - z0))
                errors[(lvl, "full")].append(abs(solve_root_full(inp).offset[2] - z0))
        depths = np.array(depths)
        for lvl in levels:
            for solver in ("weak", "full"):
                err = np.array(errors[(lvl, solver)])
                rel_err = err / depths
                rows.append(SweepRow(ratio, solver, lvl, float(err.mean()), float(np.median(err)),
                                     float(rel_err.mean()), float(np.median(rel_err))))
    return rows


def achieved_ratio(pose: Pose3D, ratio: float) -> float:
    """Depth ratio of ``pose`` after placing it with ``distance_for_ratio``; a self-check helper."""
    z0 = distance_for_ratio(pose, ratio)
    return depth_ratio(pose.joints + [0.0, 0.0, z0])
