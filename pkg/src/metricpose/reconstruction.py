"""Absolute root recovery from a 2D pose and a metric root-relative 3D pose.

Under the pinhole model each joint ``j`` with normalized image point ``(x_j, y_j)``
and root-relative offset ``(dX_j, dY_j, dZ_j)`` gives two equations that are linear
in the root position ``(X0, Y0, Z0)``::

    X0 - x_j * Z0 = x_j * dZ_j - dX_j
    Y0 - y_j * Z0 = y_j * dZ_j - dY_j

Stacking all used joints yields an overdetermined system solved through Cholesky
on the normal equations. The weak-perspective variant drops ``dZ_j`` from the
projection denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .camera import Pose2D, Pose3D, joints_array
from .errors import BehindCameraError, ContractError, DegenerateGeometryError, UnderdeterminedError

# smallest/largest eigenvalue of A^T A below this counts as rank deficient
DEGENERACY_RATIO = 1e-12


@dataclass(frozen=True)
class ReconstructionInput:
    p2d: Pose2D
    rel3d: Pose3D
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.p2d.space != "normalized":
            raise ContractError("reconstruction needs normalized image coordinates")
        if self.rel3d.frame != "root_relative":
            raise ContractError("reconstruction needs a root-relative 3D pose")
        if len(self.p2d) != len(self.rel3d):
            raise ContractError(f"joint count mismatch: {len(self.p2d)} 2D vs {len(self.rel3d)} 3D")
        mask = np.ones(len(self.p2d), bool) if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != (len(self.p2d),):
            raise ContractError(f"mask must have shape ({len(self.p2d)},), got {mask.shape}")
        mask &= self.p2d.valid
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)


class RootSolution(NamedTuple):
    offset: np.ndarray
    residual_rms: float


class RootJacobian(NamedTuple):
    solution: RootSolution
    d_x: np.ndarray
    """(J, 3): d offset[k] / d x_j"""
    d_y: np.ndarray
    """(J, 3): d offset[k] / d y_j"""
    d_rel: np.ndarray
    """(J, 3, 3): d offset[k] / d rel3d[j, c], indexed [j, c, k]"""


def build_full_perspective_system(inp: ReconstructionInput) -> tuple[np.ndarray, np.ndarray]:
    """Rows ordered joint by joint, x equation before y equation, masked-out joints skipped."""
    idx = np.flatnonzero(inp.mask)
    if idx.size < 2:
        raise UnderdeterminedError(f"need at least 2 usable joints, got {idx.size}")
    x, y = inp.p2d.joints[idx].T
    dX, dY, dZ = inp.rel3d.joints[idx].T
    k = idx.size
    A = np.zeros((2 * k, 3))
    A[0::2, 0] = 1.0
    A[0::2, 2] = -x
    A[1::2, 1] = 1.0
    A[1::2, 2] = -y
    b = np.empty(2 * k)
    b[0::2] = x * dZ - dX
    b[1::2] = y * dZ - dY
    return A, b


def _factor_normal_matrix(A):
    M = A.T @ A
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= DEGENERACY_RATIO * eig[-1]:
        raise DegenerateGeometryError(
            f"root reconstruction is rank deficient (eigenvalue ratio {eig[0] / eig[-1]:.3g})")
    return cho_factor(M)


def solve_root_full(inp: ReconstructionInput) -> RootSolution:
    A, b = build_full_perspective_system(inp)
    offset = cho_solve(_factor_normal_matrix(A), A.T @ b)
    return RootSolution(offset, float(np.sqrt(np.mean((A @ offset - b) ** 2))))


def solve_root_weak(inp: ReconstructionInput) -> RootSolution:
    """Least squares of ``x_j * Z0 = X0 + dX_j`` (and likewise for y) over all used joints.

    Closed form: mean-centering eliminates X0 and Y0, leaving a scalar problem for Z0.
    """
    A, _ = build_full_perspective_system(inp)
    _factor_normal_matrix(A)  # same normal matrix as the full model, same degeneracy test
    idx = np.flatnonzero(inp.mask)
    x, y = inp.p2d.joints[idx].T
    dX, dY = inp.rel3d.joints[idx, :2].T
    xc, yc = x - x.mean(), y - y.mean()
    z0 = (xc @ (dX - dX.mean()) + yc @ (dY - dY.mean())) / (xc @ xc + yc @ yc)
    x0 = x.mean() * z0 - dX.mean()
    y0 = y.mean() * z0 - dY.mean()
    res = np.concatenate([x * z0 - x0 - dX, y * z0 - y0 - dY])
    return RootSolution(np.array([x0, y0, z0]), float(np.sqrt(np.mean(res ** 2))))


def solve_root_full_with_jacobian(inp: ReconstructionInput) -> RootJacobian:
    """Full-perspective solve plus exact derivatives of the offset w.r.t. every input.

    Implicit differentiation of ``A^T A v = A^T b``: for a perturbation of an input,
    ``A^T A dv = dA^T r + A^T (db - dA v)`` with ``r = b - A v``.
    """
    A, b = build_full_perspective_system(inp)
    factor = _factor_normal_matrix(A)
    v = cho_solve(factor, A.T @ b)
    r = b - A @ v
    m_inv = cho_solve(factor, np.eye(3))

    idx = np.flatnonzero(inp.mask)
    x, y = inp.p2d.joints[idx].T
    dZ = inp.rel3d.joints[idx, 2]
    ax, ay = A[0::2], A[1::2]
    rx = r[0::2]
    e3 = np.array([0.0, 0.0, 1.0])

    n = len(inp.p2d)
    d_x = np.zeros((n, 3))
    d_y = np.zeros((n, 3))
    d_rel = np.zeros((n, 3, 3))
    d_x[idx] = (ax * (dZ + v[2])[:, None] - rx[:, None] * e3) @ m_inv
    d_y[idx] = (ay * (dZ + v[2])[:, None] - r[1::2][:, None] * e3) @ m_inv
    d_rel[idx, 0] = -ax @ m_inv
    d_rel[idx, 1] = -ay @ m_inv
    d_rel[idx, 2] = (ax * x[:, None] + ay * y[:, None]) @ m_inv
    solution = RootSolution(v, float(np.sqrt(np.mean(r ** 2))))
    return RootJacobian(solution, d_x, d_y, d_rel)


def border_mask(p2d: Pose2D, crop_w: float, crop_h: float, stride: float) -> np.ndarray:
    """True for joints at least one stride away from every crop border (inclusive)."""
    if p2d.space != "pixel":
        raise ContractError("border_mask expects pixel coordinates")
    x, y = p2d.joints.T
    with np.errstate(invalid="ignore"):
        inside = (x >= stride) & (x <= crop_w - stride) & (y >= stride) & (y <= crop_h - stride)
    return inside & p2d.valid


def compose_absolute(p2d: Pose2D, rel3d: Pose3D, root: RootSolution, mask) -> Pose3D:
    """Back-project in-image joints along their rays; translate the others by the offset."""
    mask = np.asarray(mask, dtype=bool)
    offset = np.asarray(root.offset, dtype=float)
    out = rel3d.joints + offset
    depth = rel3d.joints[:, 2] + offset[2]
    bad = np.flatnonzero(mask & ~(depth > 0))
    if bad.size:
        j = int(bad[0])
        raise BehindCameraError(f"joint {j} would lie at non-positive depth {depth[j]}", joint=j)
    rays = np.column_stack([p2d.joints, np.ones(len(p2d))])
    out[mask] = rays[mask] * depth[mask, None]
    return Pose3D(out, "absolute", rel3d.root_index)


def depth_ratio(p) -> float:
    """Farthest over closest joint depth of an absolute pose."""
    z = joints_array(p)[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("depth ratio is undefined for non-positive depths")
    return float(z.max() / z.min())
