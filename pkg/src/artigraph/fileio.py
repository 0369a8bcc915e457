"""File-format boundary: every on-disk format the pipeline reads or writes.

Formats (full field documentation in docs/file-formats.md):

* depth raster: raw little-endian float32, row-major, meters; dimensions
  come from the manifest; entries <= 0 or non-finite are invalid pixels
* masks: 8-bit single-channel PNG, nonzero = set
* embeddings: JSON array of floats
* marker detections: JSON lines, one detection per line
* sphere model / scenario / manifest / verdict: JSON documents
* point clouds and line sets: ASCII PLY

All writes go through a temp-file + rename so outputs are atomic.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import bench
from .errors import ParseError
from .geometry import CameraIntrinsics, Pose
from .graph import ArticulationAxis, JointType, SceneGraph, deserialize
from .lifting import ElementMask, InstanceSegment
from .tracking import MarkerDetection, SphereModel
from .views import FrameRecord


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e


# -- rasters, masks, embeddings ------------------------------------------------


def read_depth(path, width: int, height: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != width * height:
        raise ParseError(f"{path}: expected {width * height} float32 values, found {data.size}")
    return data.reshape(height, width).astype(float)


def write_depth(path, raster: np.ndarray):
    atomic_write_bytes(path, np.asarray(raster, dtype="<f4").tobytes())


def read_mask(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.array(img) > 0


def write_mask(path, mask: np.ndarray):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray((np.asarray(mask, dtype=bool) * np.uint8(255)))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_embedding(path, expected_dim: int | None = None) -> np.ndarray:
    raw = _load_json(path)
    if not isinstance(raw, list) or not all(isinstance(v, (int, float)) for v in raw):
        raise ParseError(f"{path}: embedding must be a JSON array of numbers")
    vec = np.asarray(raw, dtype=float)
    if expected_dim is not None and vec.shape[0] != expected_dim:
        raise ParseError(f"{path}: embedding dimension {vec.shape[0]} != expected {expected_dim}")
    return vec


def write_embedding(path, vec):
    atomic_write_text(path, json.dumps(np.asarray(vec, dtype=float).tolist()))


# -- detections, sphere model, trajectories -----------------------------------


def read_detections(path) -> list[MarkerDetection]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                out.append(
                    MarkerDetection(
                        frame_id=int(raw["frame_id"]),
                        marker_id=int(raw["marker_id"]),
                        corners=np.asarray(raw["corners"], dtype=float).reshape(4, 2),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    return out


def write_detections(path, detections):
    lines = [
        json.dumps(
            {"frame_id": d.frame_id, "marker_id": d.marker_id, "corners": d.corners.tolist()}
        )
        for d in detections
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_sphere_model(path) -> SphereModel:
    raw = _load_json(path)
    try:
        markers = {
            int(m["id"]): np.asarray(m["corners"], dtype=float).reshape(4, 3)
            for m in raw["markers"]
        }
        tip = Pose.from_array(raw["tip_offset"])
        return SphereModel(markers=markers, tip_offset=tip)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e


def write_sphere_model(path, model: SphereModel):
    doc = {
        "markers": [
            {"id": mid, "corners": model.markers[mid].tolist()} for mid in sorted(model.markers)
        ],
        "tip_offset": model.tip_offset.to_array().tolist(),
    }
    atomic_write_text(path, json.dumps(doc, indent=1))


def read_trajectory(path) -> list[tuple[float, Pose]]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                out.append((float(raw["t"]), Pose.from_array(raw["pose"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    return out


def write_trajectory(path, trajectory):
    lines = [
        json.dumps({"t": float(t), "pose": pose.to_array().tolist()}) for t, pose in trajectory
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def _axis_to_dict(axis: ArticulationAxis) -> dict:
    return {
        "joint_type": axis.joint_type.value,
        "center": axis.center.tolist(),
        "direction": axis.direction.tolist(),
        "range": float(axis.range),
    }


def _axis_from_dict(raw, where) -> ArticulationAxis:
    try:
        return ArticulationAxis(
            joint_type=JointType(raw["joint_type"]),
            center=np.asarray(raw["center"], dtype=float),
            direction=np.asarray(raw["direction"], dtype=float),
            range=float(raw["range"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: {e}") from e


def write_verdict(path, verdict):
    doc = {
        "joint_type": verdict.joint_type.value,
        "axis": _axis_to_dict(verdict.axis),
        "prismatic_score": verdict.prismatic_score,
        "revolute_score": verdict.revolute_score,
        "low_confidence": verdict.low_confidence,
    }
    atomic_write_text(path, json.dumps(doc, indent=1))


@dataclass
class StoredVerdict:
    joint_type: JointType
    axis: ArticulationAxis
    low_confidence: bool = False


def read_verdict(path) -> StoredVerdict:
    raw = _load_json(path)
    try:
        return StoredVerdict(
            joint_type=JointType(raw["joint_type"]),
            axis=_axis_from_dict(raw["axis"], path),
            low_confidence=bool(raw.get("low_confidence", False)),
        )
    except (KeyError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e


# -- scene graph ---------------------------------------------------------------


def read_graph(path) -> SceneGraph:
    with open(path, "rb") as f:
        return deserialize(f.read())


def write_graph(path, graph: SceneGraph):
    atomic_write_bytes(path, graph.serialize())


# -- PLY point clouds and line sets -------------------------------------------


def write_ply_points(path, points, colors=None):
    """ASCII PLY vertex cloud; optional uint8 RGB per vertex."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {pts.shape[0]}"]
    lines += [f"property float {ax}" for ax in "xyz"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        lines += [f"property uchar {c}" for c in ("red", "green", "blue")]
    lines += ["end_header"]
    for i, p in enumerate(pts):
        row = f"{p[0]} {p[1]} {p[2]}"
        if colors is not None:
            row += f" {colors[i][0]} {colors[i][1]} {colors[i][2]}"
        lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_ply_points(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        header, n_vertex, props = True, 0, 0
        pts = []
        for lineno, line in enumerate(f, 1):
            tok = line.split()
            if header:
                if not tok:
                    continue
                if tok[0] == "element" and tok[1] == "vertex":
                    n_vertex = int(tok[2])
                elif tok[0] == "property" and n_vertex and tok[1] in ("float", "double"):
                    props += 1
                elif tok[0] == "end_header":
                    header = False
                    if props < 3:
                        raise ParseError(f"{path}: vertex element lacks x/y/z properties")
                continue
            if len(pts) < n_vertex:
                if len(tok) < 3:
                    raise ParseError(f"{path}:{lineno}: expected at least 3 coordinates")
                pts.append([float(tok[0]), float(tok[1]), float(tok[2])])
        if len(pts) != n_vertex:
            raise ParseError(f"{path}: header claims {n_vertex} vertices, found {len(pts)}")
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def write_ply_lines(path, vertices, edges, colors=None):
    """ASCII PLY line set: vertex element + edge element (vertex1, vertex2)."""
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    lines = ["ply", "format ascii 1.0", f"element vertex {verts.shape[0]}"]
    lines += [f"property float {ax}" for ax in "xyz"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        lines += [f"property uchar {c}" for c in ("red", "green", "blue")]
    lines += [f"element edge {edges.shape[0]}", "property int vertex1", "property int vertex2",
              "end_header"]
    for i, p in enumerate(verts):
        row = f"{p[0]} {p[1]} {p[2]}"
        if colors is not None:
            row += f" {colors[i][0]} {colors[i][1]} {colors[i][2]}"
        lines.append(row)
    for a, b in edges:
        lines.append(f"{a} {b}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- dataset manifest ----------------------------------------------------------


@dataclass
class ManifestMask:
    frame_id: int
    object_id: int  # instance id the detector crop came from
    label: str
    score: float
    path: Path


@dataclass
class ManifestEmbedding:
    frame_id: int
    object_id: int
    label: str | None  # None: whole-object crop; else an element label
    path: Path


@dataclass
class DatasetManifest:
    """Validated view of a dataset directory; all paths resolved and existing."""

    root: Path
    frames: list[dict]  # id, timestamp, intrinsics, cam_pose, depth path (optional)
    instances: list[dict]  # id, label, points path
    masks: list[ManifestMask]
    embeddings: list[ManifestEmbedding]
    sphere_model: Path | None
    demos: dict[int, Path]  # demo id -> detections path

    def load_frames(self, with_depth: bool = True) -> dict[int, FrameRecord]:
        out = {}
        for fr in self.frames:
            intr = fr["intrinsics"]
            depth = None
            if with_depth and fr.get("depth") is not None:
                depth = read_depth(fr["depth"], intr.width, intr.height)
            out[fr["id"]] = FrameRecord(
                frame_id=fr["id"], intrinsics=intr, cam_pose=fr["cam_pose"],
                depth=depth, timestamp=fr["timestamp"],
            )
        return out

    def load_instances(self) -> list[InstanceSegment]:
        return [
            InstanceSegment(
                instance_id=inst["id"], label=inst["label"], points=read_ply_points(inst["points"])
            )
            for inst in self.instances
        ]

    def load_masks(self, frames: dict[int, FrameRecord]) -> list[ElementMask]:
        out = []
        for m in self.masks:
            mask = read_mask(m.path)
            frame = frames.get(m.frame_id)
            if frame is None:
                raise ParseError(f"{m.path}: mask references unknown frame {m.frame_id}")
            if mask.shape != (frame.intrinsics.height, frame.intrinsics.width):
                raise ParseError(
                    f"{m.path}: mask {mask.shape} does not match frame "
                    f"({frame.intrinsics.height}, {frame.intrinsics.width})"
                )
            out.append(
                ElementMask(
                    frame_id=m.frame_id, object_id=m.object_id, label=m.label,
                    mask=mask, detection_score=m.score,
                )
            )
        return out


def _intrinsics_from_dict(raw, where) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=float(raw["fx"]), fy=float(raw["fy"]), cx=float(raw["cx"]), cy=float(raw["cy"]),
            width=int(raw["width"]), height=int(raw["height"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: bad intrinsics: {e}") from e


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    raw = _load_json(path)
    root = path.parent

    def resolve(rel, where):
        p = root / rel
        if not p.exists():
            raise ParseError(f"{where}: referenced file {p} does not exist")
        return p

    frames, seen = [], set()
    for i, fr in enumerate(raw.get("frames", [])):
        where = f"{path}: frames[{i}]"
        try:
            fid = int(fr["id"])
            ts = float(fr["timestamp"])
            pose = Pose.from_array(fr["cam_pose"])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{where}: {e}") from e
        if fid in seen:
            raise ParseError(f"{where}: duplicate frame id {fid}")
        seen.add(fid)
        frames.append(
            {
                "id": fid,
                "timestamp": ts,
                "intrinsics": _intrinsics_from_dict(fr.get("intrinsics"), where),
                "cam_pose": pose,
                "depth": resolve(fr["depth"], where) if fr.get("depth") else None,
            }
        )

    instances = []
    for i, inst in enumerate(raw.get("instances", [])):
        where = f"{path}: instances[{i}]"
        try:
            instances.append(
                {
                    "id": int(inst["id"]),
                    "label": str(inst["label"]),
                    "points": resolve(inst["points"], where),
                }
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{where}: {e}") from e

    masks = []
    for i, m in enumerate(raw.get("masks", [])):
        where = f"{path}: masks[{i}]"
        try:
            masks.append(
                ManifestMask(
                    frame_id=int(m["frame_id"]), object_id=int(m["object_id"]),
                    label=str(m["label"]), score=float(m.get("score", 1.0)),
                    path=resolve(m["path"], where),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{where}: {e}") from e

    embeddings = []
    for i, e in enumerate(raw.get("embeddings", [])):
        where = f"{path}: embeddings[{i}]"
        try:
            embeddings.append(
                ManifestEmbedding(
                    frame_id=int(e["frame_id"]), object_id=int(e["object_id"]),
                    label=(str(e["label"]) if e.get("label") is not None else None),
                    path=resolve(e["path"], where),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"{where}: {err}") from err

    sphere = resolve(raw["sphere_model"], f"{path}: sphere_model") if raw.get("sphere_model") else None
    demos = {}
    for i, d in enumerate(raw.get("demos", [])):
        where = f"{path}: demos[{i}]"
        try:
            demos[int(d["id"])] = resolve(d["detections"], where)
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{where}: {e}") from e

    return DatasetManifest(
        root=root, frames=frames, instances=instances, masks=masks,
        embeddings=embeddings, sphere_model=sphere, demos=demos,
    )


# -- scenario files ------------------------------------------------------------


def read_scenario(path, default_intrinsics: CameraIntrinsics = bench.DEFAULT_INTRINSICS):
    """Scenario JSON -> (ScenarioConfig template, seed list).

    The camera may be given as an explicit pose list or as a static /
    orbit generator spec resolved against the frame count.
    """
    raw = _load_json(path)
    try:
        joint = JointType(raw["joint_type"])
        motion = bench.MotionProfile(
            duration=float(raw["motion"]["duration"]),
            magnitude=float(raw["motion"]["magnitude"]),
            radius=float(raw["motion"].get("radius", 0.0)),
            profile=str(raw["motion"].get("profile", "ease")),
        )
        axis = _axis_from_dict({**raw["axis"], "range": 0.0, "joint_type": joint.value}, path)
        frame_rate = float(raw.get("frame_rate", 30.0))
        n_frames = int(round(motion.duration * frame_rate)) + 1
        cam = raw["camera"]
        kind = cam.get("kind")
        if kind == "static":
            path_poses = bench.static_camera(Pose.from_array(cam["pose"]), n_frames)
        elif kind == "orbit":
            path_poses = bench.orbit_camera(
                target=np.asarray(cam["center"], dtype=float),
                orbit_radius=float(cam["radius"]),
                height=float(cam.get("height", 0.0)),
                n_frames=n_frames,
                start_angle=float(cam.get("start", 0.0)),
                span=float(cam.get("span", np.pi / 2)),
            )
        elif kind == "poses":
            path_poses = [Pose.from_array(p) for p in cam["poses"]]
        else:
            raise ParseError(f"{path}: unknown camera kind {kind!r}")
        intr = (
            _intrinsics_from_dict(raw["intrinsics"], path)
            if raw.get("intrinsics")
            else default_intrinsics
        )
        base_seed = int(raw.get("seed", 0))
        seeds = [int(s) for s in raw.get("seeds", [base_seed])]
        config = bench.ScenarioConfig(
            joint_type=joint, axis=axis, motion=motion, camera_path=path_poses,
            pixel_noise_sigma=float(raw.get("pixel_noise_sigma", 0.0)),
            dropout_rate=float(raw.get("dropout_rate", 0.0)),
            frame_rate=frame_rate, seed=base_seed, intrinsics=intr,
            name=str(raw.get("name", Path(path).stem)),
        )
        return config, seeds
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e
