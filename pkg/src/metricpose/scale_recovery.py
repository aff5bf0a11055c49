"""Root depth recovery for 2.5D poses by matching back-projected bone lengths.

A 2.5D pose (normalized image points plus root-relative depths) back-projects to
metric space once the root depth ``Z0`` is fixed. ``recover_root_depth`` picks the
``Z0`` whose back-projected bone lengths best match reference lengths in the
least-squares sense, using a one-parameter Levenberg-Marquardt iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .camera import Pose2D, Pose3D, joints_array
from .errors import BehindCameraError, ContractError, ConvergenceError, NoBonesError
from .skeleton import BoneSpec

log = logging.getLogger(__name__)

SEED_DEPTHS_MM = np.geomspace(500.0, 10000.0, 16)


@dataclass(frozen=True)
class Pose25D:
    p2d: Pose2D
    rel_depth: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        if self.p2d.space != "normalized":
            raise ContractError("a 2.5D pose carries normalized image coordinates")
        depth = np.array(self.rel_depth, dtype=float)
        if depth.shape != (len(self.p2d),):
            raise ContractError(f"rel_depth must have shape ({len(self.p2d)},), got {depth.shape}")
        valid = self.p2d.valid.copy() if self.valid is None else np.array(self.valid, bool) & self.p2d.valid
        if not np.all(np.isfinite(depth[valid])):
            raise ContractError("valid joints need finite relative depths")
        depth.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "rel_depth", depth)
        object.__setattr__(self, "valid", valid)


class ScaleRecoveryResult(NamedTuple):
    z0: float
    cost: float
    iterations: int


def _rays(p: Pose25D) -> np.ndarray:
    xy = np.where(p.valid[:, None], p.p2d.joints, 0.0)
    return np.column_stack([xy, np.ones(len(xy))])


def backproject_25d(p: Pose25D, z0: float) -> Pose3D:
    """Joints at ``(x, y, 1) * (Z0 + dZ)``. Invalid joints are carried along on the optical axis."""
    depth = np.where(p.valid, p.rel_depth, 0.0) + z0
    bad = np.flatnonzero(p.valid & ~(depth > 0))
    if bad.size:
        j = int(bad[0])
        raise BehindCameraError(f"joint {j} back-projects to non-positive depth {depth[j]}", joint=j)
    return Pose3D(_rays(p) * depth[:, None], "absolute", None)


def bone_lengths(p, bones: BoneSpec) -> np.ndarray:
    joints = joints_array(p)
    e = bones.edge_array
    return np.linalg.norm(joints[e[:, 0]] - joints[e[:, 1]], axis=1)


class _BoneCost:
    """Residuals ``|Z0 * d_i + e_i| - t_i`` for the usable bones, with their Z0-derivative."""

    def __init__(self, p: Pose25D, bones: BoneSpec):
        e = bones.edge_array
        usable = p.valid[e[:, 0]] & p.valid[e[:, 1]]
        if not usable.any():
            raise NoBonesError("no bone has both endpoints inside the image")
        e = e[usable]
        rays = _rays(p)
        dz = np.where(p.valid, p.rel_depth, 0.0)
        self.d = rays[e[:, 0]] - rays[e[:, 1]]
        self.e = rays[e[:, 0]] * dz[e[:, 0], None] - rays[e[:, 1]] * dz[e[:, 1], None]
        self.t = bones.lengths[usable]
        used = np.unique(e)
        # Z0 must put every joint of a usable bone in front of the camera
        self.z_min = float(-dz[used].min())

    def residuals(self, z0):
        vec = z0 * self.d + self.e
        b = np.linalg.norm(vec, axis=1)
        jac = np.divide(np.einsum("ij,ij->i", vec, self.d), b, out=np.zeros_like(b), where=b > 0)
        return b - self.t, jac

    def cost(self, z0) -> float:
        r, _ = self.residuals(z0)
        return float(r @ r)


def recover_root_depth(p: Pose25D, bones: BoneSpec, init_z0: float = 2000.0, *, max_iter: int = 100,
                       step_tol: float = 0.01, seeds=SEED_DEPTHS_MM) -> ScaleRecoveryResult:
    """Root depth minimizing the squared bone-length discrepancy.

    The iteration starts from the best of ``init_z0`` and a coarse log-spaced set of
    seed depths, which guards against secondary minima on extreme scenes. Damping
    starts at 1e-3 and is divided by 10 on accepted steps, multiplied by 10 on
    rejected ones. Stops once a step is smaller than ``step_tol`` mm.
    """
    cost_fn = _BoneCost(p, bones)
    candidates = [z for z in (init_z0, *seeds) if z > cost_fn.z_min]
    if not candidates:
        raise ContractError(f"no seed depth lies in front of the camera (need Z0 > {cost_fn.z_min})")
    z = min(candidates, key=cost_fn.cost)
    r, jac = cost_fn.residuals(z)
    cost = float(r @ r)
    lam = 1e-3

    for it in range(1, max_iter + 1):
        grad = float(jac @ r)
        hess = float(jac @ jac)
        if hess == 0.0:
            # no usable bone changes length with Z0; any depth is optimal
            return ScaleRecoveryResult(z, cost, it)
        step = -grad / (hess * (1.0 + lam))
        z_new = z + step
        if z_new > cost_fn.z_min:
            r_new, jac_new = cost_fn.residuals(z_new)
            cost_new = float(r_new @ r_new)
        else:
            cost_new = np.inf
        if cost_new <= cost:
            z, r, jac, cost = z_new, r_new, jac_new, cost_new
            lam /= 10.0
        else:
            lam *= 10.0
        if abs(step) < step_tol:
            return ScaleRecoveryResult(z, cost, it)

    log.debug("bone-length LM stopped after %d iterations at Z0=%.3f", max_iter, z)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (Z0={z:.3f} mm, cost={cost:.6g})",
                           z0=z, cost=cost, iterations=max_iter)
