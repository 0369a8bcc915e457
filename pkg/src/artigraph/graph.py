"""Hierarchical functional scene graph with open-vocabulary retrieval.

Object nodes hold static bodies; element nodes hold actionable sub-parts,
each linked to exactly one parent object. Elements may carry an
articulation axis and a demonstrated trajectory. Serialization is a
canonical JSON document (sorted keys, no whitespace) so identical graphs
produce identical bytes; the field layout is documented in
docs/file-formats.md.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyPointCloud,
    ParseError,
    TrajectoryTooShort,
    UnknownElement,
    UnknownParent,
)
from .geometry import Pose

SCHEMA_VERSION = 1


class JointType(str, enum.Enum):
    PRISMATIC = "prismatic"
    REVOLUTE = "revolute"


class Provenance(str, enum.Enum):
    VISUAL = "visual"
    INTERACTION = "interaction"
    BOTH = "both"


@dataclass
class ArticulationAxis:
    """Joint constraint: center point + unit direction + observed range.

    `range` is travel in meters for prismatic joints and swept angle in
    radians for revolute joints, discriminated by joint_type.
    """

    joint_type: JointType
    center: np.ndarray
    direction: np.ndarray
    range: float = 0.0

    def __post_init__(self):
        self.joint_type = JointType(self.joint_type)
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            if n == 0.0:
                raise ValueError("axis direction must be nonzero")
            d = d / n
        self.direction = d
        if self.range < 0:
            raise ValueError("axis range must be >= 0")


def _check_feature(feature, dim: int) -> np.ndarray | None:
    if feature is None:
        return None
    f = np.asarray(feature, dtype=float).reshape(-1)
    if f.shape[0] != dim:
        raise DimensionMismatch(f"feature dimension {f.shape[0]} != graph feature_dim {dim}")
    if abs(np.linalg.norm(f) - 1.0) > 1e-6:
        raise ValueError("feature vector must be unit norm")
    return f


@dataclass
class ObjectNode:
    id: int
    label: str
    points: np.ndarray
    centroid: np.ndarray
    feature: np.ndarray | None = None


@dataclass
class ElementNode:
    id: int
    label: str
    points: np.ndarray  # may be empty for interaction-discovered nodes
    centroid: np.ndarray
    feature: np.ndarray | None = None
    provenance: Provenance = Provenance.VISUAL
    articulation: ArticulationAxis | None = None
    trajectory: list[Pose] | None = None


class SceneGraph:
    """Single-writer scene graph; ids are unique across both node kinds."""

    def __init__(self, feature_dim: int):
        if feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        self.feature_dim = int(feature_dim)
        self.objects: dict[int, ObjectNode] = {}
        self.elements: dict[int, ElementNode] = {}
        self.edges: dict[int, int] = {}  # element_id -> object_id
        self._next_id = 0

    def _take_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def add_object_node(self, label: str, points, feature=None) -> int:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise EmptyPointCloud("object node needs at least one point")
        node = ObjectNode(
            id=self._take_id(),
            label=str(label),
            points=pts,
            centroid=pts.mean(axis=0),
            feature=_check_feature(feature, self.feature_dim),
        )
        self.objects[node.id] = node
        return node.id

    def add_element_node(
        self,
        parent_object_id: int,
        label: str,
        points,
        feature=None,
        provenance: Provenance = Provenance.VISUAL,
        centroid=None,
    ) -> int:
        """Add an element and its parent edge atomically.

        `centroid` must be supplied when `points` is empty (interaction-
        discovered nodes carry no geometry).
        """
        if parent_object_id not in self.objects:
            raise UnknownParent(f"object {parent_object_id} does not exist")
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] > 0:
            c = pts.mean(axis=0)
        elif centroid is not None:
            c = np.asarray(centroid, dtype=float).reshape(3)
        else:
            raise EmptyPointCloud("element without points needs an explicit centroid")
        node = ElementNode(
            id=self._take_id(),
            label=str(label),
            points=pts,
            centroid=c,
            feature=_check_feature(feature, self.feature_dim),
            provenance=Provenance(provenance),
        )
        self.elements[node.id] = node
        self.edges[node.id] = parent_object_id
        return node.id

    def attach_articulation(self, element_id: int, axis: ArticulationAxis, trajectory) -> None:
        """Register axis, joint type, and full trajectory on an element.

        Upgrades visual provenance to 'both'.
        """
        if element_id not in self.elements:
            raise UnknownElement(f"element {element_id} does not exist")
        trajectory = list(trajectory)
        if len(trajectory) < 2:
            raise TrajectoryTooShort(f"trajectory length {len(trajectory)} < 2")
        node = self.elements[element_id]
        node.articulation = axis
        node.trajectory = trajectory
        if node.provenance == Provenance.VISUAL:
            node.provenance = Provenance.BOTH

    def nodes(self):
        """All nodes (objects then elements) in id order."""
        for nid in sorted(list(self.objects) + list(self.elements)):
            yield self.objects.get(nid) or self.elements[nid]

    def query(self, query_feature, k: int) -> list[tuple[int, float]]:
        """Top-k nodes by cosine similarity to a unit query vector.

        Nodes without features are excluded; ties break by ascending id.
        """
        q = np.asarray(query_feature, dtype=float).reshape(-1)
        if q.shape[0] != self.feature_dim:
            raise DimensionMismatch(
                f"query dimension {q.shape[0]} != graph feature_dim {self.feature_dim}"
            )
        if k < 1:
            raise ValueError("k must be >= 1")
        scored = [
            (node.id, float(np.dot(node.feature, q)))
            for node in self.nodes()
            if node.feature is not None
        ]
        scored.sort(key=lambda t: (-t[1], t[0]))
        return scored[:k]

    def validate(self) -> None:
        """Check referential integrity and node invariants; raises ValueError."""
        ids = set(self.objects) | set(self.elements)
        if len(ids) != len(self.objects) + len(self.elements):
            raise ValueError("object and element ids overlap")
        for eid in self.elements:
            if eid not in self.edges:
                raise ValueError(f"element {eid} has no parent edge")
        for eid, oid in self.edges.items():
            if eid not in self.elements or oid not in self.objects:
                raise ValueError(f"edge ({eid}, {oid}) references a missing node")
        for node in self.objects.values():
            if node.points.shape[0] == 0:
                raise ValueError(f"object {node.id} has no points")
        for node in self.elements.values():
            if node.articulation is not None and node.trajectory is None:
                raise ValueError(f"element {node.id} has an axis but no trajectory")
            if node.provenance == Provenance.INTERACTION and node.trajectory is None:
                raise ValueError(f"interaction element {node.id} lacks a trajectory")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        def node_dict(n, is_element):
            d = {
                "id": n.id,
                "label": n.label,
                "points": n.points.tolist(),
                "centroid": n.centroid.tolist(),
                "feature": None if n.feature is None else n.feature.tolist(),
            }
            if is_element:
                d["provenance"] = n.provenance.value
                d["articulation"] = (
                    None
                    if n.articulation is None
                    else {
                        "joint_type": n.articulation.joint_type.value,
                        "center": n.articulation.center.tolist(),
                        "direction": n.articulation.direction.tolist(),
                        "range": float(n.articulation.range),
                    }
                )
                d["trajectory"] = (
                    None if n.trajectory is None else [p.to_array().tolist() for p in n.trajectory]
                )
            return d

        return {
            "version": SCHEMA_VERSION,
            "feature_dim": self.feature_dim,
            "objects": [node_dict(self.objects[i], False) for i in sorted(self.objects)],
            "elements": [node_dict(self.elements[i], True) for i in sorted(self.elements)],
            "edges": [
                {"element_id": eid, "object_id": self.edges[eid]} for eid in sorted(self.edges)
            ],
        }

    def serialize(self) -> bytes:
        """Canonical JSON bytes: sorted keys, compact separators."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def _expect(cond: bool, where: str, what: str):
    if not cond:
        raise ParseError(f"{where}: {what}")


def _vec(raw, size, where) -> np.ndarray:
    _expect(isinstance(raw, list) and len(raw) == size, where, f"expected {size}-number array")
    _expect(all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw), where, "non-numeric entry")
    return np.array(raw, dtype=float)


def deserialize(data: bytes | str) -> SceneGraph:
    """Parse a scene-graph document; raises ParseError naming the location."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno} column {e.colno}: {e.msg}") from e

    _expect(isinstance(doc, dict), "document", "expected a JSON object")
    _expect(doc.get("version") == SCHEMA_VERSION, "header", f"unsupported version {doc.get('version')!r}")
    dim = doc.get("feature_dim")
    _expect(isinstance(dim, int) and dim >= 1, "header", "feature_dim must be a positive integer")
    g = SceneGraph(feature_dim=dim)

    for key in ("objects", "elements", "edges"):
        _expect(isinstance(doc.get(key), list), "document", f"missing array '{key}'")

    def load_common(raw, where):
        _expect(isinstance(raw, dict), where, "expected an object")
        _expect(isinstance(raw.get("id"), int), where, "missing integer 'id'")
        _expect(isinstance(raw.get("label"), str), where, "missing string 'label'")
        pts_raw = raw.get("points")
        _expect(isinstance(pts_raw, list), where, "missing array 'points'")
        pts = np.array(
            [_vec(p, 3, f"{where}.points[{i}]") for i, p in enumerate(pts_raw)], dtype=float
        ).reshape(-1, 3)
        centroid = _vec(raw.get("centroid"), 3, f"{where}.centroid")
        if pts.shape[0] > 0:
            _expect(
                bool(np.linalg.norm(centroid - pts.mean(axis=0)) <= 1e-9),
                where,
                "centroid does not match mean of points",
            )
        feat = raw.get("feature")
        if feat is not None:
            feat = _vec(feat, dim, f"{where}.feature")
            _expect(abs(float(np.linalg.norm(feat)) - 1.0) <= 1e-6, where, "feature not unit norm")
        return pts, centroid, feat

    for i, raw in enumerate(doc["objects"]):
        where = f"objects[{i}]"
        pts, centroid, feat = load_common(raw, where)
        _expect(pts.shape[0] > 0, where, "object points must be non-empty")
        nid = raw["id"]
        _expect(nid not in g.objects and nid not in g.elements, where, f"duplicate id {nid}")
        node = ObjectNode(id=nid, label=raw["label"], points=pts, centroid=centroid, feature=feat)
        g.objects[nid] = node

    for i, raw in enumerate(doc["elements"]):
        where = f"elements[{i}]"
        pts, centroid, feat = load_common(raw, where)
        nid = raw["id"]
        _expect(nid not in g.objects and nid not in g.elements, where, f"duplicate id {nid}")
        try:
            prov = Provenance(raw.get("provenance"))
        except ValueError:
            raise ParseError(f"{where}: bad provenance {raw.get('provenance')!r}") from None
        axis_raw = raw.get("articulation")
        axis = None
        if axis_raw is not None:
            aw = f"{where}.articulation"
            _expect(isinstance(axis_raw, dict), aw, "expected an object")
            try:
                jt = JointType(axis_raw.get("joint_type"))
            except ValueError:
                raise ParseError(f"{aw}: bad joint_type {axis_raw.get('joint_type')!r}") from None
            rng = axis_raw.get("range")
            _expect(isinstance(rng, (int, float)) and rng >= 0, aw, "range must be >= 0")
            try:
                axis = ArticulationAxis(
                    joint_type=jt,
                    center=_vec(axis_raw.get("center"), 3, f"{aw}.center"),
                    direction=_vec(axis_raw.get("direction"), 3, f"{aw}.direction"),
                    range=float(rng),
                )
            except ValueError as e:
                raise ParseError(f"{aw}: {e}") from None
        traj_raw = raw.get("trajectory")
        traj = None
        if traj_raw is not None:
            _expect(isinstance(traj_raw, list), f"{where}.trajectory", "expected an array")
            traj = [
                Pose.from_array(_vec(p, 7, f"{where}.trajectory[{j}]"))
                for j, p in enumerate(traj_raw)
            ]
            _expect(len(traj) >= 2, f"{where}.trajectory", "needs at least 2 poses")
        _expect(axis is None or traj is not None, where, "articulation without trajectory")
        _expect(prov != Provenance.INTERACTION or traj is not None, where, "interaction node without trajectory")
        node = ElementNode(
            id=nid, label=raw["label"], points=pts, centroid=centroid,
            feature=feat, provenance=prov, articulation=axis, trajectory=traj,
        )
        g.elements[nid] = node

    for i, raw in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        _expect(isinstance(raw, dict), where, "expected an object")
        eid, oid = raw.get("element_id"), raw.get("object_id")
        _expect(isinstance(eid, int) and isinstance(oid, int), where, "edge ids must be integers")
        _expect(eid in g.elements, where, f"element {eid} does not exist")
        _expect(oid in g.objects, where, f"object {oid} does not exist")
        _expect(eid not in g.edges, where, f"element {eid} has two parents")
        g.edges[eid] = oid

    for eid in g.elements:
        _expect(eid in g.edges, f"elements id={eid}", "element has no parent edge")

    g._next_id = max([*g.objects, *g.elements], default=-1) + 1
    return g
