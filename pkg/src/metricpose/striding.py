"""Receptive-field centers of a strided fully-convolutional output grid.

An idealized affine model: with normal striding the output cell ``i`` looks at
pixel ``i*s`` (the top-left sample of each block is kept), with centered striding
the last strided layer keeps the bottom-right sample instead, which moves every
center to ``i*s + s/2`` and makes the grid symmetric about the image center.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class StridingConfig:
    input_size: int
    stride: int
    mode: Literal["normal", "centered"] = "centered"

    def __post_init__(self):
        if self.stride < 1:
            raise ContractError(f"stride must be >= 1, got {self.stride}")
        if self.input_size < 1 or self.input_size % self.stride:
            raise ContractError(f"input size {self.input_size} is not a multiple of stride {self.stride}")
        if self.mode not in ("normal", "centered"):
            raise ContractError(f"unknown striding mode {self.mode!r}")

    @property
    def n_outputs(self) -> int:
        return self.input_size // self.stride


def receptive_centers(cfg: StridingConfig) -> np.ndarray:
    """Center coordinates along one axis; the 2D grid is the Cartesian product."""
    centers = np.arange(cfg.n_outputs, dtype=float) * cfg.stride
    if cfg.mode == "centered":
        centers += cfg.stride / 2
    return centers


def receptive_grid(cfg: StridingConfig) -> np.ndarray:
    """All 2D centers as an (n*n, 2) array, row-major over (y, x)."""
    c = receptive_centers(cfg)
    yy, xx = np.meshgrid(c, c, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def parent_centroids(coarse: StridingConfig) -> np.ndarray:
    """For each coarse center, the centroid of its nearest centers at half the stride."""
    if coarse.stride % 2:
        raise ContractError("stride must be even to be halved")
    fine = receptive_centers(StridingConfig(coarse.input_size, coarse.stride // 2, coarse.mode))
    coarse_c = receptive_centers(coarse)
    dist = np.abs(coarse_c[:, None] - fine[None, :])
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :2]
    return fine[nearest].mean(axis=1)
