"""Pipeline driver: init, track, refine, query, bench, export.

Exit codes: 0 success, 1 input error (missing/malformed files, bad config),
2 numerical failure (degenerate geometry, non-convergence, unusable track).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from . import fileio
from .config import PipelineConfig
from .errors import (
    AllNoise,
    ArtigraphError,
    CollinearPoints,
    DegenerateConfiguration,
    DegenerateTrajectory,
    InsufficientTrack,
    NoConvergence,
)
from .graph import JointType
from .pipeline import build_graph
from .refine import AssociationKind, register_demonstration
from .tracking import track as run_track

_NUMERICAL = (
    NoConvergence,
    InsufficientTrack,
    DegenerateConfiguration,
    DegenerateTrajectory,
    CollinearPoints,
    AllNoise,
)


def _fail(err: BaseException):
    click.echo(f"error: {err}", err=True)
    sys.exit(2 if isinstance(err, _NUMERICAL) else 1)


def _load_config(ctx) -> PipelineConfig:
    path = ctx.obj.get("config")
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(_read_json(path))


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        _fail(fileio.ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}"))
    except OSError as e:
        _fail(e)


@click.group()
@click.option("--config", type=click.Path(), default=None, help="Pipeline config JSON.")
@click.option("--seed", type=int, default=None, help="Override scenario seeds (bench).")
@click.option("--output", type=click.Path(), default=None, help="Output path (meaning varies per command).")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              help="Report format for query/refine/bench.")
@click.pass_context
def main(ctx, config, seed, output, fmt):
    """Functional scene graphs of articulated objects from demonstrations."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, seed=seed, output=output, fmt=fmt)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.pass_context
def init(ctx, manifest):
    """Build the initial graph from a dataset MANIFEST."""
    out = Path(ctx.obj["output"] or "graph.json")
    try:
        cfg = _load_config(ctx)
        mani = fileio.read_manifest(manifest)
        graph, report = build_graph(mani, cfg)
        fileio.write_graph(out, graph)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    click.echo(
        f"wrote {out}: {report.n_objects} object nodes, {report.n_elements} element nodes, "
        f"{len(graph.edges)} edges ({report.n_dropped_groups} mask groups dropped)"
    )


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.argument("demo_id", type=int)
@click.pass_context
def track(ctx, manifest, demo_id):
    """Track demonstration DEMO_ID into a trajectory + joint verdict."""
    from .articulation import select_joint

    prefix = Path(ctx.obj["output"] or f"demo{demo_id}")
    try:
        cfg = _load_config(ctx)
        mani = fileio.read_manifest(manifest)
        if demo_id not in mani.demos:
            raise fileio.ParseError(f"{manifest}: no demo with id {demo_id}")
        if mani.sphere_model is None:
            raise fileio.ParseError(f"{manifest}: no sphere_model entry")
        detections = fileio.read_detections(mani.demos[demo_id])
        if not detections:
            raise InsufficientTrack(f"{mani.demos[demo_id]}: detections file is empty")
        frames = mani.load_frames(with_depth=False)
        sphere = fileio.read_sphere_model(mani.sphere_model)
        result = run_track(detections, frames, sphere, cfg.filter)
        verdict = select_joint(
            [p.position for _, p in result.trajectory], cfg.lambda_penalty
        )
        traj_path = prefix.with_suffix(".trajectory.jsonl")
        verdict_path = prefix.with_suffix(".verdict.json")
        fileio.write_trajectory(traj_path, result.trajectory)
        fileio.write_verdict(verdict_path, verdict)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    click.echo(
        f"wrote {traj_path} and {verdict_path}: {verdict.joint_type.value} "
        f"({result.n_used}/{result.n_frames} frames used, "
        f"mean reproj {result.mean_reproj_rmse:.3f} px"
        f"{', low confidence' if verdict.low_confidence else ''})"
    )


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.argument("demos", nargs=-1, required=True)
@click.pass_context
def refine(ctx, graph_file, demos):
    """Register demonstrations (path prefixes of track outputs) into GRAPH_FILE."""
    out = Path(ctx.obj["output"] or graph_file)
    reports = []
    try:
        cfg = _load_config(ctx)
        graph = fileio.read_graph(graph_file)
        for prefix in demos:
            prefix = Path(prefix)
            trajectory = fileio.read_trajectory(prefix.with_suffix(".trajectory.jsonl"))
            verdict = fileio.read_verdict(prefix.with_suffix(".verdict.json"))
            res = register_demonstration(
                graph, trajectory, verdict,
                threshold=cfg.association_threshold,
                parent_by_min_point_distance=cfg.parent_by_min_point_distance,
            )
            if res.kind == AssociationKind.MATCHED:
                line = f"matched element {res.element_id} (d={res.distance:.3f} m)"
            else:
                parent = graph.edges[res.element_id]
                line = f"new element {res.element_id} under object {parent}"
            reports.append({"demo": str(prefix), "kind": res.kind.value,
                            "element_id": res.element_id, "distance": res.distance,
                            "text": line})
        fileio.write_graph(out, graph)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    if ctx.obj["fmt"] == "json":
        click.echo(json.dumps(reports, indent=1))
    else:
        for r in reports:
            click.echo(r["text"])
        click.echo(f"wrote {out}: {len(graph.objects)} objects, {len(graph.elements)} elements")


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.argument("embedding", type=click.Path(exists=True))
@click.option("-k", "top_k", type=int, default=5, help="Number of results.")
@click.pass_context
def query(ctx, graph_file, embedding, top_k):
    """Rank graph nodes against a query EMBEDDING by cosine similarity."""
    try:
        graph = fileio.read_graph(graph_file)
        vec = fileio.read_embedding(embedding)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        results = graph.query(vec, top_k)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    rows = []
    for rank, (nid, score) in enumerate(results, 1):
        node = graph.objects.get(nid) or graph.elements[nid]
        kind = "object" if nid in graph.objects else "element"
        rows.append({"rank": rank, "id": nid, "kind": kind, "label": node.label, "score": score})
    if ctx.obj["fmt"] == "json":
        click.echo(json.dumps(rows, indent=1))
    else:
        for r in rows:
            click.echo(f"{r['rank']:3d}  node {r['id']:4d}  {r['score']:+.4f}  "
                       f"{r['kind']}:{r['label']}")


@main.command()
@click.argument("scenario_dir", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def bench(ctx, scenario_dir):
    """Run every scenario JSON in SCENARIO_DIR through the synthetic oracle."""
    try:
        cfg = _load_config(ctx)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    sphere = bench_mod.make_marker_sphere()
    scenario_files = sorted(Path(scenario_dir).glob("*.json"))
    if not scenario_files:
        _fail(fileio.ParseError(f"{scenario_dir}: no scenario files"))

    report, any_ok = [], False
    for path in scenario_files:
        try:
            config, seeds = fileio.read_scenario(path)
            if ctx.obj["seed"] is not None:
                seeds = [ctx.obj["seed"] + i for i in range(len(seeds))]
            runs = []
            for s in seeds:
                config.seed = s
                runs.append(bench_mod.run_scenario(config, sphere, cfg.filter, cfg.lambda_penalty))
            failures = [r for r in runs if r.error]
            ok = [r for r in runs if not r.error]
            entry = {
                "scenario": config.name,
                "runs": len(runs),
                "failed_runs": len(failures),
                "type_accuracy": (np.mean([r.joint_correct for r in ok]) if ok else 0.0),
                "t_err_median": (float(np.median([r.t_err for r in ok])) if ok else None),
                "theta_err_median": (float(np.median([r.theta_err for r in ok])) if ok else None),
                "d_err_median": (
                    float(np.median([r.d_err for r in ok if r.d_err is not None]))
                    if any(r.d_err is not None for r in ok)
                    else None
                ),
            }
            report.append(entry)
            any_ok = True
        except (ArtigraphError, OSError) as e:
            report.append({"scenario": str(path), "error": str(e)})
    if ctx.obj["output"]:
        fileio.atomic_write_text(ctx.obj["output"], json.dumps(report, indent=1))
    if ctx.obj["fmt"] == "json":
        click.echo(json.dumps(report, indent=1))
    else:
        hdr = f"{'scenario':<28}{'runs':>5}{'acc':>7}{'T_err m':>10}{'th_err deg':>12}{'d_err m':>10}"
        click.echo(hdr)
        for e in report:
            if "error" in e:
                click.echo(f"{e['scenario']:<28}  FAILED: {e['error']}")
                continue
            d = "-" if e["d_err_median"] is None else f"{e['d_err_median']:.5f}"
            t = "-" if e["t_err_median"] is None else f"{e['t_err_median']:.5f}"
            th = "-" if e["theta_err_median"] is None else f"{e['theta_err_median']:.4f}"
            click.echo(
                f"{e['scenario']:<28}{e['runs']:>5}{e['type_accuracy']:>7.2f}{t:>10}{th:>12}{d:>10}"
            )
    if not any_ok:
        sys.exit(1)


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.pass_context
def export(ctx, graph_file):
    """Write per-node PLY clouds plus axis / trajectory line sets."""
    outdir = Path(ctx.obj["output"] or "export")
    try:
        graph = fileio.read_graph(graph_file)
        outdir.mkdir(parents=True, exist_ok=True)
        n_files = _export_graph(graph, outdir)
    except (ArtigraphError, OSError) as e:
        _fail(e)
    click.echo(f"wrote {n_files} files to {outdir}")


def _node_color(nid: int) -> np.ndarray:
    rng = np.random.default_rng(nid)
    return rng.integers(60, 255, size=3).astype(np.uint8)


def _export_graph(graph, outdir: Path) -> int:
    n = 0
    for nid, node in sorted(graph.objects.items()):
        color = np.tile(_node_color(nid), (node.points.shape[0], 1))
        fileio.write_ply_points(outdir / f"object_{nid:03d}.ply", node.points, color)
        n += 1
    axis_verts, axis_edges, axis_colors = [], [], []
    traj_verts, traj_edges, traj_colors = [], [], []
    for nid, node in sorted(graph.elements.items()):
        if node.points.shape[0] > 0:
            color = np.tile(_node_color(nid), (node.points.shape[0], 1))
            fileio.write_ply_points(outdir / f"element_{nid:03d}.ply", node.points, color)
            n += 1
        if node.articulation is not None:
            ax = node.articulation
            half = ax.range / 2.0 if ax.joint_type == JointType.PRISMATIC else 0.25
            base = len(axis_verts)
            axis_verts += [ax.center - half * ax.direction, ax.center + half * ax.direction]
            axis_edges.append([base, base + 1])
            axis_colors += [_node_color(nid)] * 2
        if node.trajectory:
            base = len(traj_verts)
            pos = [p.position for p in node.trajectory]
            traj_verts += pos
            traj_edges += [[base + i, base + i + 1] for i in range(len(pos) - 1)]
            traj_colors += [_node_color(nid)] * len(pos)
    fileio.write_ply_lines(outdir / "axes.ply", np.asarray(axis_verts).reshape(-1, 3),
                           np.asarray(axis_edges, dtype=int).reshape(-1, 2),
                           np.asarray(axis_colors, dtype=np.uint8).reshape(-1, 3) if axis_colors else None)
    fileio.write_ply_lines(outdir / "trajectories.ply", np.asarray(traj_verts).reshape(-1, 3),
                           np.asarray(traj_edges, dtype=int).reshape(-1, 2),
                           np.asarray(traj_colors, dtype=np.uint8).reshape(-1, 3) if traj_colors else None)
    return n + 2


if __name__ == "__main__":
    main()
