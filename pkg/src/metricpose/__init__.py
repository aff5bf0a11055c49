"""Geometry for metric-scale, truncation-robust 3D human pose estimation.

Heatmap decoding, absolute root reconstruction, bone-length scale recovery,
alignment losses and evaluation metrics, all checkable against synthetic scenes.
"""

from .camera import CameraIntrinsics, Pose2D, Pose3D, crop_rotation, normalize_points, project, rotate_pose
from .errors import PoseGeometryError
from .heatmap import HeatmapGeometry, HeatmapVolume, root_center, soft_argmax_25d, soft_argmax_metric, spatial_softmax
from .reconstruction import ReconstructionInput, RootSolution, solve_root_full, solve_root_weak
from .scale_recovery import Pose25D, recover_root_depth
from .skeleton import DEFAULT_BONES, BoneSpec

__version__ = "0.1.0"

__all__ = [
    "BoneSpec", "CameraIntrinsics", "DEFAULT_BONES", "HeatmapGeometry", "HeatmapVolume", "Pose25D", "Pose2D",
    "Pose3D", "PoseGeometryError", "ReconstructionInput", "RootSolution", "crop_rotation", "normalize_points",
    "project", "recover_root_depth", "root_center", "rotate_pose", "soft_argmax_25d", "soft_argmax_metric",
    "solve_root_full", "solve_root_weak", "spatial_softmax",
]
