"""End-to-end graph construction from an ingested dataset.

Object bodies come from denoised instance segments; per-object frame
contributions pick the top-k views; element masks from those views are
lifted and denoised into element nodes; node features are the
contribution-weighted averages of the per-view embeddings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import AllNoise, ZeroWeightSum
from .fileio import DatasetManifest, read_embedding
from .graph import Provenance, SceneGraph
from .lifting import denoise_largest, lift_masks
from .views import aggregate_features, frame_contribution, select_top_k

log = logging.getLogger(__name__)


@dataclass
class BuildReport:
    n_objects: int = 0
    n_elements: int = 0
    n_dropped_groups: int = 0
    skipped_instances: list[int] = field(default_factory=list)
    instance_to_node: dict[int, int] = field(default_factory=dict)


def build_graph(manifest: DatasetManifest, config: PipelineConfig) -> tuple[SceneGraph, BuildReport]:
    config.validate()
    graph = SceneGraph(feature_dim=config.feature_dim)
    report = BuildReport()

    frames = manifest.load_frames(with_depth=True)
    instances = manifest.load_instances()

    # object nodes from denoised instance clouds
    denoised: dict[int, np.ndarray] = {}
    for inst in sorted(instances, key=lambda s: s.instance_id):
        try:
            pts = denoise_largest(inst.points, config.object_cluster)
        except AllNoise:
            log.warning("instance %d (%s) denoised to nothing; skipped", inst.instance_id, inst.label)
            report.skipped_instances.append(inst.instance_id)
            continue
        node_id = graph.add_object_node(inst.label, pts)
        report.instance_to_node[inst.instance_id] = node_id
        denoised[inst.instance_id] = pts
    report.n_objects = len(graph.objects)

    # contribution scores over the denoised clouds, then top-k per object
    scores: dict[int, dict[int, float]] = {}
    top_frames: dict[int, list[int]] = {}
    for inst_id, pts in denoised.items():
        per_frame = [
            frame_contribution(pts, frame, object_id=inst_id, depth_tol=config.depth_tol)
            for frame in frames.values()
            if frame.depth is not None
        ]
        scores[inst_id] = {s.frame_id: s.score for s in per_frame}
        top_frames[inst_id] = select_top_k(per_frame, config.top_k)

    # lift masks from each object's selected views
    masks = [
        m
        for m in manifest.load_masks(frames)
        if m.object_id in top_frames and m.frame_id in top_frames[m.object_id]
    ]
    lifted = lift_masks(
        masks,
        frames,
        params=config.element_cluster,
        split_eps=config.split_eps,
        min_detection_score=config.min_detection_score,
    )
    report.n_dropped_groups = lifted.n_dropped

    element_nodes: dict[tuple[int, str], list[int]] = {}
    for el in lifted.elements:
        node_id = graph.add_element_node(
            report.instance_to_node[el.object_id], el.label, el.points,
            provenance=Provenance.VISUAL,
        )
        element_nodes.setdefault((el.object_id, el.label), []).append(node_id)
    report.n_elements = len(graph.elements)

    # aggregate per-view embeddings into node features
    for inst_id, node_id in report.instance_to_node.items():
        _apply_feature(graph, node_id, inst_id, None, manifest, scores, top_frames, config)
    for (inst_id, label), node_ids in element_nodes.items():
        for node_id in node_ids:
            _apply_feature(graph, node_id, inst_id, label, manifest, scores, top_frames, config)

    graph.validate()
    return graph, report


def _apply_feature(graph, node_id, inst_id, label, manifest, scores, top_frames, config):
    feats, weights = [], []
    for emb in manifest.embeddings:
        if emb.object_id != inst_id or emb.label != label:
            continue
        if emb.frame_id not in top_frames.get(inst_id, []):
            continue
        vec = read_embedding(emb.path, expected_dim=config.feature_dim)
        norm = np.linalg.norm(vec)
        if norm == 0:
            continue
        feats.append(vec / norm)
        weights.append(scores[inst_id].get(emb.frame_id, 0.0))
    if not feats:
        return
    try:
        feature = aggregate_features(np.asarray(feats), np.asarray(weights))
    except ZeroWeightSum:
        return
    node = graph.objects.get(node_id) or graph.elements[node_id]
    node.feature = feature
