"""Grounding demonstrated trajectories into the scene graph.

The trajectory's starting position (the initial physical contact) is
matched against element-node centroids. Within the spatial threshold the
demonstration enriches the matched node; otherwise it reveals an element
the visual pass missed, and a new node is instantiated at the start
position under the nearest object.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .articulation import JointVerdict
from .errors import EmptyGraph, EmptyTrajectory
from .geometry import Pose
from .graph import Provenance, SceneGraph

DEFAULT_ASSOCIATION_THRESHOLD = 0.10  # m
INTERACTION_NODE_LABEL = "articulated-part"


class AssociationKind(enum.Enum):
    MATCHED = "matched"
    NEW_NODE = "new_node"


@dataclass(frozen=True)
class AssociationResult:
    kind: AssociationKind
    element_id: int
    distance: float  # to the nearest prior element centroid; inf if none existed


def _start_position(trajectory) -> np.ndarray:
    trajectory = list(trajectory)
    if len(trajectory) == 0:
        raise EmptyTrajectory("demonstration trajectory is empty")
    first = trajectory[0]
    pose = first[1] if isinstance(first, tuple) else first
    if not isinstance(pose, Pose):
        raise TypeError("trajectory entries must be Pose or (timestamp, Pose)")
    return pose.position


def associate(graph: SceneGraph, trajectory, threshold: float = DEFAULT_ASSOCIATION_THRESHOLD):
    """Nearest element to the trajectory start, by centroid distance.

    Returns (element_id, distance) with ties broken by lowest id, or
    (None, inf) when the graph has no element nodes. The threshold is not
    applied here; callers compare the distance themselves.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    p1 = _start_position(trajectory)
    best_id, best_d = None, np.inf
    for eid in sorted(graph.elements):
        d = float(np.linalg.norm(graph.elements[eid].centroid - p1))
        if d < best_d:
            best_id, best_d = eid, d
    return best_id, best_d


def register_demonstration(
    graph: SceneGraph,
    trajectory,
    verdict: JointVerdict,
    threshold: float = DEFAULT_ASSOCIATION_THRESHOLD,
    parent_by_min_point_distance: bool = False,
) -> AssociationResult:
    """Attach a demonstration to the graph: attribute attachment when an
    element lies within the threshold, node instantiation otherwise.

    New nodes carry no geometry: centroid at the start position, provenance
    interaction, parented to the nearest object (centroid distance by
    default, min point distance behind the flag).
    """
    poses = [(e[1] if isinstance(e, tuple) else e) for e in trajectory]
    nearest, distance = associate(graph, poses, threshold)

    if nearest is not None and distance <= threshold:
        graph.attach_articulation(nearest, verdict.axis, poses)
        return AssociationResult(kind=AssociationKind.MATCHED, element_id=nearest, distance=distance)

    if not graph.objects:
        raise EmptyGraph("no object nodes exist to parent a new element")
    p1 = poses[0].position
    if parent_by_min_point_distance:
        parent = min(
            sorted(graph.objects),
            key=lambda oid: float(np.min(np.linalg.norm(graph.objects[oid].points - p1, axis=1))),
        )
    else:
        parent = min(
            sorted(graph.objects),
            key=lambda oid: float(np.linalg.norm(graph.objects[oid].centroid - p1)),
        )
    new_id = graph.add_element_node(
        parent,
        INTERACTION_NODE_LABEL,
        points=np.empty((0, 3)),
        provenance=Provenance.INTERACTION,
        centroid=p1,
    )
    graph.attach_articulation(new_id, verdict.axis, poses)
    return AssociationResult(kind=AssociationKind.NEW_NODE, element_id=new_id, distance=distance)
