"""Skeleton definitions: bone specs, the default 17-joint layout and joint subsets.

The default layout follows the 17-joint ordering used by the MPI-INF-3DHP family of
benchmarks, whose first 14 joints are the ones those benchmarks evaluate. Default
bone lengths are synthetic, representative adult values, not dataset averages.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidInputError

JOINT_NAMES = (
    "head_top", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "pelvis", "spine", "head",
)
PELVIS = JOINT_NAMES.index("pelvis")
NECK = JOINT_NAMES.index("neck")
HIPS = (JOINT_NAMES.index("r_hip"), JOINT_NAMES.index("l_hip"))

JOINT_SUBSETS = {
    17: tuple(range(17)),
    16: tuple(i for i in range(17) if i != PELVIS),
    14: tuple(range(14)),
}


@dataclass(frozen=True)
class BoneSpec:
    edges: tuple[tuple[int, int], ...]
    target_lengths: tuple[float, ...]
    n_joints: int | None = None

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        lengths = tuple(float(t) for t in self.target_lengths)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "target_lengths", lengths)
        if len(edges) != len(lengths):
            raise ContractError(f"{len(edges)} edges but {len(lengths)} target lengths")
        for a, b in edges:
            if a == b:
                raise ContractError(f"self-edge at joint {a}")
            if min(a, b) < 0 or (self.n_joints is not None and max(a, b) >= self.n_joints):
                raise ContractError(f"edge ({a}, {b}) out of range")
        if not all(t > 0 and np.isfinite(t) for t in lengths):
            raise ContractError("target lengths must be positive and finite")

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=int).reshape(-1, 2)

    @property
    def lengths(self) -> np.ndarray:
        return np.array(self.target_lengths)

    def scaled(self, factor: float) -> BoneSpec:
        return BoneSpec(self.edges, tuple(t * factor for t in self.target_lengths), self.n_joints)

    def to_json(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "target_lengths_mm": list(self.target_lengths)}

    @classmethod
    def from_json(cls, obj: dict, n_joints: int | None = None) -> BoneSpec:
        try:
            return cls(tuple(tuple(e) for e in obj["edges"]), tuple(obj["target_lengths_mm"]), n_joints)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise InvalidInputError(f"malformed bone spec JSON: {exc!r}") from exc


_DEFAULT_EDGES = (
    ("pelvis", "spine", 230.0), ("spine", "neck", 250.0), ("neck", "head", 110.0), ("head", "head_top", 110.0),
    ("neck", "r_shoulder", 160.0), ("r_shoulder", "r_elbow", 280.0), ("r_elbow", "r_wrist", 250.0),
    ("neck", "l_shoulder", 160.0), ("l_shoulder", "l_elbow", 280.0), ("l_elbow", "l_wrist", 250.0),
    ("pelvis", "r_hip", 130.0), ("r_hip", "r_knee", 440.0), ("r_knee", "r_ankle", 420.0),
    ("pelvis", "l_hip", 130.0), ("l_hip", "l_knee", 440.0), ("l_knee", "l_ankle", 420.0),
)

DEFAULT_BONES = BoneSpec(
    tuple((JOINT_NAMES.index(a), JOINT_NAMES.index(b)) for a, b, _ in _DEFAULT_EDGES),
    tuple(t for _, _, t in _DEFAULT_EDGES),
    len(JOINT_NAMES),
)


def tree_order(edges, root: int, n_joints: int) -> list[tuple[int, int]]:
    """Edges reoriented as (parent, child) in breadth-first order from ``root``.

    Edge direction in the input is ignored. Raises unless the edges form a tree
    spanning all ``n_joints`` joints.
    """
    edges = [tuple(e) for e in edges]
    if len(edges) != n_joints - 1:
        raise ContractError(f"a tree over {n_joints} joints needs {n_joints - 1} edges, got {len(edges)}")
    adjacency = {j: [] for j in range(n_joints)}
    for a, b in edges:
        if not (0 <= a < n_joints and 0 <= b < n_joints) or a == b:
            raise ContractError(f"invalid edge ({a}, {b})")
        adjacency[a].append(b)
        adjacency[b].append(a)
    order = []
    seen = {root}
    queue = deque([root])
    while queue:
        parent = queue.popleft()
        for child in adjacency[parent]:
            if child in seen:
                continue
            seen.add(child)
            order.append((parent, child))
            queue.append(child)
    if len(seen) != n_joints:
        raise ContractError("edges do not form a tree spanning all joints")
    return order


def bone_root(bones: BoneSpec) -> int:
    """The unique joint that never appears as a child."""
    children = {b for _, b in bones.edges}
    roots = {a for a, _ in bones.edges} - children
    if len(roots) != 1:
        raise ContractError(f"bone spec must have exactly one root, found {sorted(roots)}")
    return roots.pop()
