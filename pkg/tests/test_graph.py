import json

import numpy as np
import pytest

from artigraph.errors import (
    DimensionMismatch,
    EmptyPointCloud,
    ParseError,
    TrajectoryTooShort,
    UnknownElement,
    UnknownParent,
)
from artigraph.geometry import Pose
from artigraph.graph import (
    ArticulationAxis,
    JointType,
    Provenance,
    SceneGraph,
    deserialize,
)
from reference import cosine_ranking


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def small_graph(dim=4):
    g = SceneGraph(feature_dim=dim)
    o = g.add_object_node("cabinet", [[0, 0, 0], [1, 0, 0], [0, 1, 0]], feature=unit([1, 0, 0, 0]))
    e = g.add_element_node(o, "handle", [[0.5, 0.5, 0.0]], feature=unit([0, 1, 0, 0]))
    return g, o, e


def demo_axis():
    return ArticulationAxis(JointType.PRISMATIC, center=[0, 0, 0], direction=[1, 0, 0], range=0.3)


def demo_traj(n=3):
    return [Pose.from_translation(0.1 * i, 0, 0) for i in range(n)]


def test_add_object_node_ids_and_centroid():
    g = SceneGraph(feature_dim=4)
    pts = np.random.default_rng(0).normal(size=(100, 3))
    i0 = g.add_object_node("table", pts)
    assert i0 == 0
    assert np.linalg.norm(g.objects[i0].centroid - pts.mean(axis=0)) < 1e-9
    assert g.add_object_node("chair", [[1, 2, 3]]) == 1


def test_add_object_node_empty():
    g = SceneGraph(feature_dim=4)
    with pytest.raises(EmptyPointCloud):
        g.add_object_node("table", [])


def test_element_edges():
    g, o, e = small_graph()
    assert g.edges[e] == o
    e2 = g.add_element_node(o, "knob", [[0.2, 0.2, 0.0]])
    assert g.edges[e2] == o
    assert sum(1 for oid in g.edges.values() if oid == o) == 2
    with pytest.raises(UnknownParent):
        g.add_element_node(99, "handle", [[0, 0, 0]])


def test_attach_articulation():
    g, o, e = small_graph()
    assert g.elements[e].provenance == Provenance.VISUAL
    g.attach_articulation(e, demo_axis(), demo_traj())
    assert g.elements[e].provenance == Provenance.BOTH
    assert g.elements[e].articulation.joint_type == JointType.PRISMATIC
    with pytest.raises(UnknownElement):
        g.attach_articulation(777, demo_axis(), demo_traj())
    with pytest.raises(TrajectoryTooShort):
        g.attach_articulation(e, demo_axis(), demo_traj(1))


def test_query_exact_and_orthogonal():
    g, o, e = small_graph()
    res = g.query(unit([1, 0, 0, 0]), k=2)
    assert res[0] == (o, pytest.approx(1.0))
    assert res[1] == (e, pytest.approx(0.0))


def test_query_dimension_mismatch():
    g, *_ = small_graph()
    with pytest.raises(DimensionMismatch):
        g.query(unit([1, 0, 0]), k=1)
    with pytest.raises(ValueError):
        g.add_object_node("x", [[0, 0, 0]], feature=np.array([1.0, 1.0, 0.0, 0.0]))


def test_query_matches_bruteforce(rng):
    for _ in range(25):
        dim = 16
        g = SceneGraph(feature_dim=dim)
        feats = {}
        n_obj = int(rng.integers(1, 6))
        for _ in range(n_obj):
            f = unit(rng.normal(size=dim)) if rng.random() < 0.8 else None
            nid = g.add_object_node("o", rng.normal(size=(3, 3)), feature=f)
            if f is not None:
                feats[nid] = f
        for _ in range(int(rng.integers(0, 8))):
            parent = int(rng.choice(sorted(g.objects)))
            f = unit(rng.normal(size=dim)) if rng.random() < 0.8 else None
            nid = g.add_element_node(parent, "e", rng.normal(size=(2, 3)), feature=f)
            if f is not None:
                feats[nid] = f
        q = unit(rng.normal(size=dim))
        k = int(rng.integers(1, 10))
        assert g.query(q, k) == cosine_ranking(feats, q)[:k]


def test_serialize_roundtrip_and_canonical():
    g, o, e = small_graph()
    g.attach_articulation(e, demo_axis(), demo_traj())
    blob = g.serialize()
    g2 = deserialize(blob)
    assert g2.serialize() == blob  # canonical form is byte-stable
    assert sorted(g2.objects) == sorted(g.objects)
    assert sorted(g2.elements) == sorted(g.elements)
    assert g2.edges == g.edges
    n2 = g2.elements[e]
    assert n2.articulation.joint_type == JointType.PRISMATIC
    assert len(n2.trajectory) == 3
    assert np.allclose(n2.points, g.elements[e].points)


def test_serialize_empty_graph():
    g = SceneGraph(feature_dim=8)
    assert deserialize(g.serialize()).serialize() == g.serialize()


def test_new_ids_continue_after_load():
    g, o, e = small_graph()
    g2 = deserialize(g.serialize())
    assert g2.add_object_node("new", [[0, 0, 0]]) == max(o, e) + 1


def test_deserialize_truncated():
    g, *_ = small_graph()
    blob = g.serialize()
    with pytest.raises(ParseError):
        deserialize(blob[: len(blob) // 2])


MALFORMED = [
    b"",
    b"[1, 2, 3]",
    b'{"version": 99, "feature_dim": 4, "objects": [], "elements": [], "edges": []}',
    b'{"version": 1, "feature_dim": 0, "objects": [], "elements": [], "edges": []}',
    b'{"version": 1, "feature_dim": 4, "objects": [], "elements": []}',
    b'{"version": 1, "feature_dim": 4, "objects": [{"id": 0}], "elements": [], "edges": []}',
    (
        b'{"version": 1, "feature_dim": 4, "objects": [], "elements": [], '
        b'"edges": [{"element_id": 1, "object_id": 0}]}'
    ),
    b'{"version": 1, "feature_dim": 4, "objects": [], "elements": [], "edges": [{}]}',
    b"{not json at all",
    b'{"version": 1, "feature_dim": 4, "objects": "nope", "elements": [], "edges": []}',
]


@pytest.mark.parametrize("blob", MALFORMED)
def test_malformed_inputs_raise_parse_error(blob):
    with pytest.raises(ParseError):
        deserialize(blob)


def test_parse_error_names_location():
    doc = {
        "version": 1,
        "feature_dim": 4,
        "objects": [
            {"id": 0, "label": "a", "points": [[0, 0, 0]], "centroid": [9, 9, 9], "feature": None}
        ],
        "elements": [],
        "edges": [],
    }
    with pytest.raises(ParseError, match=r"objects\[0\]"):
        deserialize(json.dumps(doc).encode())


def random_ops(rng, g, n_ops):
    for _ in range(n_ops):
        op = rng.integers(0, 3)
        if op == 0 or not g.objects:
            g.add_object_node("o", rng.normal(size=(int(rng.integers(1, 5)), 3)))
        elif op == 1:
            parent = int(rng.choice(sorted(g.objects)))
            g.add_element_node(parent, "e", rng.normal(size=(int(rng.integers(1, 4)), 3)))
        else:
            if g.elements:
                eid = int(rng.choice(sorted(g.elements)))
                g.attach_articulation(eid, demo_axis(), demo_traj())


def test_referential_integrity_random_ops(rng):
    for _ in range(50):
        g = SceneGraph(feature_dim=4)
        random_ops(rng, g, int(rng.integers(1, 30)))
        g.validate()
        g2 = deserialize(g.serialize())
        g2.validate()
        assert g2.serialize() == g.serialize()
