import numpy as np

from tetray import backend
from tetray.bench import locality_report, run_bench
from tetray.render import RenderConfig
from tetray.tetmesh import LAYOUT_BYTES


def test_bench_report_contents():
    cfg = RenderConfig(scene="fixture:pane-box?n=4", width=48, height=36)
    report = run_bench(
        cfg,
        accelerators=("tetmesh", "brute"),
        layouts=("tet32", "tet20", "tet16"),
        reorders=("none",),
        repeats=1,
        backends=["compiled"] if backend.has_compiled() else ["pure"],
    )
    rows = [r for r in report["combos"] if r["accelerator"] == "tetmesh"]
    assert len(rows) == 3
    # accelerator size = tet_count x layout_bytes + point bytes
    n_tets = 4 * 4 * 4 * 6
    n_points = 5 * 5 * 5
    for row in rows:
        assert row["best_wall_s"] > 0
        expect = n_tets * LAYOUT_BYTES[row["layout"]] + n_points * 12
        assert row["accelerator_bytes"] == expect
    # visited statistics nonzero and identical across layouts
    means = {row["visited_mean"] for row in rows}
    assert len(means) == 1 and means.pop() > 0
    maxes = {row["visited_max"] for row in rows}
    assert len(maxes) == 1
    assert {"none", "hilbert", "hilbert_regions", "shuffle"} <= set(report["locality"])


def test_bench_compares_backends_when_compiled():
    if not backend.has_compiled():
        import pytest

        pytest.skip("compiled kernels unavailable")
    cfg = RenderConfig(scene="fixture:empty-box?n=4", width=32, height=24)
    report = run_bench(
        cfg,
        accelerators=("tetmesh",),
        layouts=("tet20",),
        reorders=("none",),
        repeats=1,
    )
    backends = {row["backend"] for row in report["combos"]}
    assert backends == {"compiled", "pure"}
