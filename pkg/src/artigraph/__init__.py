"""Functional 3D scene graphs of articulated objects.

Builds scene graphs from posed RGB-D observation sequences and human
manipulation demonstrations: object/element nodes with open-vocabulary
features, 6-DoF tool-tip trajectories tracked from marker detections, and
fitted articulation axes grounded back into the graph.
"""

from ._kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .geometry import CameraIntrinsics, Pose, compose, invert
from .graph import ArticulationAxis, JointType, Provenance, SceneGraph, deserialize

__version__ = "0.1.0"

__all__ = [
    "ArticulationAxis",
    "CameraIntrinsics",
    "JointType",
    "KERNEL_IMPLEMENTATION",
    "Pose",
    "Provenance",
    "SceneGraph",
    "compose",
    "deserialize",
    "invert",
    "__version__",
]
