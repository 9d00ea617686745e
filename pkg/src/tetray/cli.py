"""Command-line interface: render, bench, convert, validate.

Render settings come from a flat key=value config file, CLI flags
override; see README for the key list. Stats are emitted as one JSON
document.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from .bench import run_bench, write_report
from .ingestion import parse_tetgen
from .render import (
    Material,
    PointLight,
    RenderConfig,
    RenderResult,
    load_scene,
    render,
    write_image,
)
from .tetmesh import LAYOUTS, encode, reorder, validate


def parse_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def _triple(text) -> tuple:
    parts = [float(v) for v in str(text).replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected 3 numbers, got {text!r}")
    return tuple(parts)


def config_from_mapping(kv: dict) -> RenderConfig:
    cfg = RenderConfig()
    simple = {
        "scene": ("scene", str),
        "mesh": ("mesh", str),
        "layout": ("layout", str),
        "reorder": ("reorder", str),
        "accelerator": ("accelerator", str),
        "width": ("width", int),
        "height": ("height", int),
        "camera.position": ("camera_position", _triple),
        "camera.look_at": ("camera_look_at", _triple),
        "camera.up": ("camera_up", _triple),
        "camera.fov": ("fov", float),
        "max_depth": ("max_depth", int),
        "tile": ("tile", int),
        "threads": ("threads", int),
        "backend": ("backend", str),
    }
    lights: dict[int, PointLight] = {}
    materials: dict[int, Material] = {}
    for key, value in kv.items():
        if key in simple:
            attr, conv = simple[key]
            setattr(cfg, attr, conv(value))
            continue
        parts = key.split(".")
        if parts[0] == "light" and len(parts) == 3:
            idx = int(parts[1])
            light = lights.setdefault(idx, PointLight((0.0, 0.0, 0.0)))
            if parts[2] == "position":
                light.position = _triple(value)
            elif parts[2] == "intensity":
                light.intensity = float(value)
            else:
                raise ValueError(f"unknown light key {key!r}")
        elif parts[0] == "material" and len(parts) == 3:
            idx = int(parts[1])
            mat = materials.setdefault(idx, Material())
            if parts[2] == "kind":
                mat.kind = value
            elif parts[2] == "albedo":
                mat.albedo = _triple(value)
            elif parts[2] == "ior":
                mat.ior = float(value)
            else:
                raise ValueError(f"unknown material key {key!r}")
        else:
            raise ValueError(f"unknown config key {key!r}")
    if lights:
        cfg.lights = [lights[i] for i in sorted(lights)]
    if materials:
        cfg.materials = materials
    cfg.__post_init__()
    return cfg


def _apply_overrides(cfg: RenderConfig, args) -> RenderConfig:
    for flag, attr in (
        ("scene", "scene"),
        ("mesh", "mesh"),
        ("layout", "layout"),
        ("reorder", "reorder"),
        ("accelerator", "accelerator"),
        ("width", "width"),
        ("height", "height"),
        ("threads", "threads"),
        ("tile", "tile"),
        ("max_depth", "max_depth"),
        ("backend", "backend"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.__post_init__()
    return cfg


def _add_render_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--scene", help="fixture: URI or OBJ path")
    p.add_argument("--mesh", help="TetGen fileset basename (for OBJ scenes)")
    p.add_argument("--layout", choices=list(LAYOUTS))
    p.add_argument("--reorder", choices=["none", "hilbert", "hilbert_regions", "shuffle"])
    p.add_argument("--accelerator", choices=["tetmesh", "bvh", "brute"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--tile", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--backend", choices=["compiled", "pure"])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tetray",
        description="Ray tracing on compact xor-linked tetrahedral meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("render", help="render a frame")
    _add_render_flags(pr)
    pr.add_argument("--out", default="out.ppm", help="output PPM path")
    pr.add_argument("--stats", help="write stats JSON here")

    pb = sub.add_parser("bench", help="benchmark accelerator combinations")
    _add_render_flags(pb)
    pb.add_argument("--out", default="bench.json", help="report JSON path")
    pb.add_argument("--repeats", type=int, default=5)
    pb.add_argument("--quick", action="store_true", help="tet20 only, 1 repeat")

    pc = sub.add_parser("convert", help="TetGen fileset to compact layout on disk")
    pc.add_argument("mesh", help="TetGen fileset basename")
    pc.add_argument("--layout", choices=list(LAYOUTS), default="tet20")
    pc.add_argument(
        "--reorder",
        choices=["none", "hilbert", "hilbert_regions"],
        default="none",
    )
    pc.add_argument("--out", required=True, help="output .npz path")

    pv = sub.add_parser("validate", help="mesh integrity report")
    pv.add_argument("mesh", help="TetGen fileset basename or compact .npz")
    pv.add_argument("--layout", choices=list(LAYOUTS), default="tet20")

    args = parser.parse_args(argv)

    if args.command == "render":
        cfg = (
            config_from_mapping(parse_config_file(args.config))
            if args.config
            else RenderConfig()
        )
        cfg = _apply_overrides(cfg, args)
        result: RenderResult = render(cfg)
        write_image(result.image, args.out)
        if args.stats:
            with open(args.stats, "w") as fh:
                fh.write(result.stats.to_json())
                fh.write("\n")
        print(f"wrote {args.out} ({cfg.width}x{cfg.height}, {cfg.accelerator})")
        return 0

    if args.command == "bench":
        cfg = (
            config_from_mapping(parse_config_file(args.config))
            if args.config
            else RenderConfig(width=160, height=120)
        )
        cfg = _apply_overrides(cfg, args)
        if args.quick:
            report = run_bench(
                cfg,
                accelerators=("tetmesh", "brute"),
                layouts=("tet20",),
                reorders=("none",),
                repeats=1,
            )
        else:
            report = run_bench(cfg, repeats=args.repeats)
        write_report(report, args.out)
        print(f"wrote {args.out} ({len(report['combos'])} combos)")
        return 0

    if args.command == "convert":
        raw = parse_tetgen(args.mesh)
        mesh = encode(raw, args.layout)
        mesh = reorder(mesh, args.reorder)
        save_compact(mesh, args.out)
        print(
            f"wrote {args.out}: {mesh.n_tets} tets x {mesh.record_bytes} B"
            f" + {mesh.n_points} points = {mesh.accelerator_bytes} bytes"
        )
        return 0

    if args.command == "validate":
        if str(args.mesh).endswith(".npz"):
            mesh = load_compact(args.mesh)
        else:
            raw = parse_tetgen(args.mesh)
            mesh = encode(raw, args.layout)
        problems = validate(mesh)
        if problems:
            for p in problems:
                print(f"FAIL {p}")
            return 1
        print(
            f"OK {mesh.layout}: {mesh.n_tets} tets, {mesh.n_points} points,"
            f" {mesh.n_constrained} constrained faces"
        )
        return 0

    return 2


def save_compact(mesh, path) -> None:
    """Persist a compact mesh (and its scene soup) as .npz."""
    np.savez_compressed(
        path,
        layout=np.array(mesh.layout),
        points=mesh.points,
        records=mesh.records_u32(),
        side_verts=mesh.side_verts,
        side_neighbors=mesh.side_neighbors,
        cf_triangle=mesh.cf_triangle,
        cf_tets=mesh.cf_tets,
        cf_verts=mesh.cf_verts,
        source_tet=np.array(mesh.source_tet),
        soup_vertices=mesh.soup.vertices,
        soup_triangles=mesh.soup.triangles,
        soup_materials=mesh.soup.material_ids,
    )


def load_compact(path):
    from .tetmesh import LAYOUT_DTYPES, CompactMesh, SceneTriangleSoup

    data = np.load(path)
    layout = str(data["layout"])
    recs = np.ascontiguousarray(data["records"]).view(LAYOUT_DTYPES[layout]).reshape(-1)
    soup = SceneTriangleSoup(
        vertices=data["soup_vertices"],
        triangles=data["soup_triangles"],
        material_ids=data["soup_materials"],
    )
    return CompactMesh(
        layout=layout,
        points=np.ascontiguousarray(data["points"]),
        records=recs,
        side_verts=np.ascontiguousarray(data["side_verts"]),
        side_neighbors=np.ascontiguousarray(data["side_neighbors"]),
        cf_triangle=np.ascontiguousarray(data["cf_triangle"]),
        cf_tets=np.ascontiguousarray(data["cf_tets"]),
        cf_verts=np.ascontiguousarray(data["cf_verts"]),
        source_tet=int(data["source_tet"]),
        soup=soup,
    )


if __name__ == "__main__":
    sys.exit(main())
