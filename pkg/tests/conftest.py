from pathlib import Path

import numpy as np
import pytest

from tetray.ingestion import (
    associate_constrained_faces,
    build_box_fixture,
    load_obj,
    parse_tetgen,
)
from tetray.tetmesh import encode

DATA = Path(__file__).resolve().parent.parent / "data"

PANE_OCC = [(0, 2, (1, 1), (3, 3))]
REGION_OCC = [(axis, k, (1, 1), (3, 3)) for axis in range(3) for k in (1, 3)]


def make_fixture(n=4, occluders=(), layout="tet20", walls="constrained"):
    raw, soup = build_box_fixture(n, occluders=occluders, walls=walls)
    return encode(raw, layout, soup)


@pytest.fixture(scope="session")
def box1():
    return make_fixture(n=1)


@pytest.fixture(scope="session")
def box4():
    return make_fixture(n=4)


@pytest.fixture(scope="session")
def pane4():
    return make_fixture(n=4, occluders=PANE_OCC)


@pytest.fixture(scope="session")
def region4():
    return make_fixture(n=4, occluders=REGION_OCC)


@pytest.fixture(scope="session")
def open_box4():
    return make_fixture(n=4, walls="open")


@pytest.fixture(scope="session")
def model_mesh():
    raw = parse_tetgen(DATA / "model" / "blob.1")
    soup = load_obj(DATA / "model" / "blob.obj")
    faces = np.array([cf.vertex_ids for cf in raw.constrained_faces], dtype=np.int64)
    tri_ids = associate_constrained_faces(raw.points, faces, soup, tolerance=1e-9)
    for cf, tid in zip(raw.constrained_faces, tri_ids):
        cf.triangle_id = int(tid)
    return encode(raw, "tet20", soup)


def interior_rays(mesh, n, seed):
    """Random rays from strictly-interior points of random tetrahedra.

    Returns float32 (origins, dirs, start_tets); start_tets contain the
    origins by construction.
    """
    rng = np.random.default_rng(seed)
    ti = rng.integers(0, mesh.n_tets, n).astype(np.int32)
    bary = rng.dirichlet(np.ones(4) * 4.0, n)
    pts = mesh.points.astype(np.float64)
    o = np.einsum("ij,ijk->ik", bary, pts[mesh.side_verts[ti]])
    d = rng.normal(size=(n, 3))
    return o.astype(np.float32), d.astype(np.float32), ti
