"""Training losses with analytic gradients.

L1 losses are per coordinate: the mean absolute difference over all valid
coordinates, with subgradient 0 at exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .camera import Pose2D
from .errors import ConfigurationError, ContractError, DegenerateGeometryError

METRIC_TERMS = ("ann3d", "ann2d")
ABSOLUTE_TERMS = ("abs3d_ann3d", "head3d_ann3d", "head2d_ann3d", "head2d_ann2d", "head3d_ann2d")


def _coords(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2:
        raise ContractError(f"expected a (J, D) pose, got shape {arr.shape}")
    return arr


def _validity(gt, n, mask) -> np.ndarray:
    valid = np.ones(n, bool)
    if isinstance(gt, Pose2D):
        valid &= gt.valid
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    return valid


def l1_pose_loss(pred, gt, mask=None) -> tuple[float, np.ndarray]:
    """Mean absolute coordinate error and its gradient w.r.t. ``pred``."""
    p, g = _coords(pred), _coords(gt)
    if p.shape != g.shape:
        raise ContractError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    valid = _validity(gt, len(p), mask)
    n = valid.sum() * p.shape[1]
    if n == 0:
        raise ContractError("L1 loss over an empty set of valid joints")
    diff = p[valid] - g[valid]
    grad = np.zeros_like(p)
    grad[valid] = np.sign(diff) / n
    return float(np.abs(diff).sum() / n), grad


def ortho_project(p) -> np.ndarray:
    """Orthographic projection onto the image plane: drop Z."""
    return _coords(p)[:, :2].copy()


class SimilarityFit2D(NamedTuple):
    scale: float
    translation: np.ndarray
    aligned: np.ndarray
    mirrored: bool
    """True when the optimal scale is negative, i.e. the prediction is point-reflected."""


def align_similarity_2d(pred, gt, mask=None) -> SimilarityFit2D:
    """Least-squares scale and translation taking ``pred`` onto ``gt`` (no rotation)."""
    p, g = _coords(pred), _coords(gt)
    valid = _validity(gt, len(p), mask)
    if valid.sum() < 2:
        raise ContractError("alignment needs at least 2 valid joints")
    pv, gv = p[valid], g[valid]
    pc = pv - pv.mean(axis=0)
    denom = float(np.sum(pc * pc))
    if denom <= 1e-24 * max(1.0, float(np.sum(pv * pv))):
        raise DegenerateGeometryError("all predicted joints coincide; scale is undefined")
    s = float(np.sum(pc * (gv - gv.mean(axis=0)))) / denom
    t = gv.mean(axis=0) - s * pv.mean(axis=0)
    return SimilarityFit2D(s, t, s * p + t, s < 0)


def agnostic_2d_loss(pred3d, gt2d, mask=None) -> tuple[float, np.ndarray]:
    """L1 loss between the similarity-aligned orthographic projection and 2D labels.

    Returns the loss and its gradient w.r.t. the 3D prediction; the scale and
    translation of the fit are differentiated as functions of the prediction.
    """
    p3 = _coords(pred3d)
    if p3.shape[1] != 3:
        raise ContractError("agnostic_2d_loss expects a 3D prediction")
    g = _coords(gt2d)
    valid = _validity(gt2d, len(p3), mask)
    fit = align_similarity_2d(p3[:, :2], g, valid)
    pv, gv = p3[valid, :2], g[valid]
    n = pv.size
    pc = pv - pv.mean(axis=0)
    gc = gv - gv.mean(axis=0)
    s = fit.scale
    resid = fit.aligned[valid] - gv
    loss = float(np.abs(resid).sum() / n)

    # aligned_j = s * pc_j + mean(g); dL/daligned = sign / n
    G = np.sign(resid) / n
    denom = float(np.sum(pc * pc))
    ds_dp = (gc - 2.0 * s * pc) / denom
    grad_v = ds_dp * float(np.sum(G * pc)) + s * (G - G.mean(axis=0))
    grad = np.zeros_like(p3)
    grad[valid, :2] = grad_v
    return loss, grad


@dataclass(frozen=True)
class LossConfig:
    lambda_2d: float = 0.1
    absolute_loss_warmup_steps: int = 5000
    enabled_terms: frozenset[str] | None = None
    """None enables every term of the chosen objective."""

    def __post_init__(self):
        if not self.lambda_2d >= 0:
            raise ConfigurationError(f"lambda_2d must be >= 0, got {self.lambda_2d}")
        if self.absolute_loss_warmup_steps < 0:
            raise ConfigurationError("warmup steps must be >= 0")


def composite_loss(terms: Mapping[str, float], cfg: LossConfig = LossConfig(), step: int = 0,
                   objective: str = "metric") -> float:
    """Weighted total of the per-term losses.

    ``objective="metric"`` combines ``ann3d + lambda * ann2d``. ``objective="absolute"``
    combines the absolute, 3D-head and 2D-head losses on 3D-annotated examples with
    ``lambda`` times both head losses on 2D-annotated examples; the absolute term is
    held at zero until ``step`` reaches the warmup.
    """
    if objective == "metric":
        names = METRIC_TERMS
    elif objective == "absolute":
        names = ABSOLUTE_TERMS
    else:
        raise ConfigurationError(f"unknown objective {objective!r}")
    enabled = set(names) if cfg.enabled_terms is None else set(cfg.enabled_terms) & set(names)
    missing = [k for k in names if k in enabled and k not in terms]
    if missing:
        raise ConfigurationError(f"missing loss terms for {objective}: {missing}")

    def term(name):
        return float(terms[name]) if name in enabled else 0.0

    if objective == "metric":
        return term("ann3d") + cfg.lambda_2d * term("ann2d")
    absolute = term("abs3d_ann3d") if step >= cfg.absolute_loss_warmup_steps else 0.0
    return (absolute + term("head3d_ann3d") + term("head2d_ann3d")
            + cfg.lambda_2d * (term("head2d_ann2d") + term("head3d_ann2d")))
