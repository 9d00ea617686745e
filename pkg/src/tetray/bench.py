"""Benchmark harness: accelerators x layouts x reorder schemes x backends.

Each combination renders the same frame several times and the best wall
time is reported (best-of-R absorbs background noise). The report also
carries accelerator sizes, visited-tetrahedra statistics, and the
traversal locality metric for every reorder scheme, as machine-readable
JSON.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace

import numpy as np

from . import backend, batch
from .render import RenderConfig, render, visit_locality_metric, load_scene
from .tetmesh import LAYOUT_BYTES, encode, reorder


def run_bench(
    config: RenderConfig,
    *,
    accelerators=("tetmesh", "bvh", "brute"),
    layouts=("tet32", "tet20", "tet16"),
    reorders=("none", "hilbert", "hilbert_regions"),
    repeats: int = 5,
    backends=None,
) -> dict:
    """Render-benchmark every requested combination; returns the report."""
    if backends is None:
        backends = ["compiled", "pure"] if backend.has_compiled() else ["pure"]

    combos = []
    for accel in accelerators:
        if accel == "tetmesh":
            for lay in layouts:
                for ro in reorders:
                    for be in backends:
                        combos.append((accel, lay, ro, be))
        else:
            combos.append((accel, None, None, None))

    rows = []
    for accel, lay, ro, be in combos:
        cfg = replace(
            config,
            accelerator=accel,
            layout=lay or config.layout,
            reorder=ro or "none",
            backend=be,
            compute_locality=False,  # timed runs measure rendering only
        )
        best = np.inf
        result = None
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            result = render(cfg)
            best = min(best, time.perf_counter() - t0)
        rows.append(
            {
                "accelerator": accel,
                "layout": lay,
                "reorder": ro,
                "backend": be,
                "best_wall_s": best,
                "visited_mean": result.stats.visited["mean"],
                "visited_max": result.stats.visited["max"],
                "accelerator_bytes": result.stats.accelerator_bytes,
            }
        )

    report = {
        "image": {"width": config.width, "height": config.height},
        "scene": config.scene,
        "repeats": repeats,
        "combos": rows,
        "locality": locality_report(config),
        "layout_bytes": dict(LAYOUT_BYTES),
    }
    return report


def locality_report(config: RenderConfig) -> dict:
    """Traversal locality metric per reorder scheme (plus the shuffled
    baseline the schemes are judged against)."""
    base = replace(config, accelerator="tetmesh", reorder="none")
    mesh, _, _ = load_scene(base)
    out = {}
    for scheme in ("none", "hilbert", "hilbert_regions", "shuffle"):
        m = reorder(mesh, scheme)
        out[scheme] = visit_locality_metric(m)
    return out


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
