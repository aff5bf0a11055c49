"""Pose evaluation measures and the protocol transforms applied before them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Pose2D, Pose3D, joints_array
from .errors import ConfigurationError, ContractError, DegenerateGeometryError
from .skeleton import HIPS, JOINT_SUBSETS, NECK, PELVIS, tree_order

AUC_STEP_MM = 5.0


@dataclass(frozen=True)
class EvalProtocol:
    root_align: bool = True
    procrustes: bool = False
    pck_threshold: float = 150.0
    auc_max: float = 150.0
    joint_subset: int | None = None
    bone_rescale: bool = False
    root_index: int = PELVIS

    def __post_init__(self):
        if not (self.pck_threshold > 0 and self.auc_max > 0):
            raise ConfigurationError("thresholds must be positive")
        if self.joint_subset is not None and self.joint_subset not in JOINT_SUBSETS:
            raise ConfigurationError(f"unknown joint subset {self.joint_subset}")

    @classmethod
    def from_json(cls, obj: dict) -> EvalProtocol:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known - {"bones"}
        if unknown:
            raise ConfigurationError(f"unknown protocol fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in obj.items() if k in known})


def _pair(pred, gt):
    p, g = joints_array(pred), joints_array(gt)
    if p.shape != g.shape:
        raise ContractError(f"pose shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def joint_errors(pred, gt, root_align=False, root_index=0) -> np.ndarray:
    p, g = _pair(pred, gt)
    if root_align:
        p = p - p[root_index]
        g = g - g[root_index]
    return np.linalg.norm(p - g, axis=1)


def mpjpe(pred, gt, root_align=False, root_index=0) -> float:
    return float(joint_errors(pred, gt, root_align, root_index).mean())


def procrustes_transform(pred, gt) -> tuple[float, np.ndarray, np.ndarray]:
    """Similarity ``x -> scale * R @ x + t`` minimizing the squared distance to ``gt``.

    Umeyama's closed form with the determinant correction, so R is a proper rotation.
    """
    p, g = _pair(pred, gt)
    mp, mg = p.mean(axis=0), g.mean(axis=0)
    pc, gc = p - mp, g - mg
    sv = np.linalg.svd(pc, compute_uv=False)
    if len(p) < 3 or sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("Procrustes alignment needs at least 3 non-collinear joints")
    U, S, Vt = np.linalg.svd(gc.T @ pc)
    d = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        d[-1] = -1.0
    R = (U * d) @ Vt
    scale = float((S * d).sum() / np.sum(pc * pc))
    t = mg - scale * R @ mp
    return scale, R, t


def procrustes_align(pred, gt) -> Pose3D:
    scale, R, t = procrustes_transform(pred, gt)
    p = joints_array(pred)
    root = pred.root_index if isinstance(pred, Pose3D) and pred.frame == "absolute" else None
    return Pose3D(scale * p @ R.T + t, "absolute", root)


def pa_mpjpe(pred, gt) -> float:
    return mpjpe(procrustes_align(pred, gt), gt)


def pck(pred, gt, threshold=150.0, root_align=False, root_index=0) -> float:
    """Fraction of joints within ``threshold`` mm (inclusive)."""
    return float(np.mean(joint_errors(pred, gt, root_align, root_index) <= threshold))


def auc(pred, gt, max_threshold=150.0, root_align=False, root_index=0) -> float:
    """Mean PCK over thresholds 0, 5, ..., ``max_threshold`` mm."""
    err = joint_errors(pred, gt, root_align, root_index)
    thresholds = np.arange(0.0, max_threshold + AUC_STEP_MM / 2, AUC_STEP_MM)
    return float(np.mean(err[None, :] <= thresholds[:, None]))


def bone_rescale(pred, gt, edges, root: int) -> Pose3D:
    """Rescale each predicted bone to the ground-truth length, walking the tree outward from ``root``.

    Bone directions and the root position of the prediction are kept. A zero-length
    predicted bone takes the ground-truth bone direction.
    """
    p, g = _pair(pred, gt)
    out = p.copy()
    for parent, child in tree_order(edges, root, len(p)):
        vec = p[child] - p[parent]
        target = np.linalg.norm(g[child] - g[parent])
        norm = np.linalg.norm(vec)
        if norm > 0:
            out[child] = out[parent] + vec * (target / norm)
        else:
            out[child] = out[parent] + (g[child] - g[parent])
    frame = pred.frame if isinstance(pred, Pose3D) else "absolute"
    return Pose3D(out, frame, root)


def hip_adjust(p, hip_indices=HIPS, pelvis_index=PELVIS, neck_index=NECK):
    """Move each hip joint by a fifth of the pelvis-to-neck vector. Returns the input's type."""
    joints = np.array(p, dtype=float)
    joints[list(hip_indices)] += 0.2 * (joints[neck_index] - joints[pelvis_index])
    if isinstance(p, Pose3D):
        if p.frame == "root_relative" and p.root_index in hip_indices:
            raise ContractError("cannot move the root joint of a root-relative pose")
        return Pose3D(joints, p.frame, p.root_index)
    if isinstance(p, Pose2D):
        return Pose2D(joints, p.space, p.valid)
    return joints


def select_joints(p, subset):
    """Reindex a pose to a named subset (14, 16 or 17 joints of the default layout) or an index list."""
    if isinstance(subset, (int, np.integer)):
        if int(subset) not in JOINT_SUBSETS:
            raise ConfigurationError(f"unknown joint subset {subset}")
        if len(p) != len(JOINT_SUBSETS[17]):
            raise ContractError(f"named subsets apply to 17-joint poses, got {len(p)} joints")
        idx = list(JOINT_SUBSETS[int(subset)])
    else:
        idx = [int(i) for i in subset]
    if isinstance(p, Pose3D):
        root = idx.index(p.root_index) if p.root_index in idx else None
        return Pose3D(p.joints[idx], p.frame if root is not None else "absolute", root)
    if isinstance(p, Pose2D):
        return Pose2D(p.joints[idx], p.space, p.valid[idx])
    return np.asarray(p)[idx]
