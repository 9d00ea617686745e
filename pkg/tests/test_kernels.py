"""Backend parity: compiled extension vs pure-python wavefront vs scalar.

The backends must produce bit-identical traversals; these tests are what
justifies benchmarking them interchangeably.
"""

import numpy as np
import pytest

from conftest import interior_rays
from tetray import backend, batch
from tetray.geometry import Ray, Vec3
from tetray.tetmesh import LAYOUTS, relayout
from tetray.traversal import HitRecord, cast_ray

pytestmark = pytest.mark.skipif(
    not backend.has_compiled(), reason="compiled kernels unavailable"
)


@pytest.fixture(scope="module")
def kernels():
    return backend.get_kernels("pure"), backend.get_kernels("compiled")


@pytest.mark.parametrize("layout", LAYOUTS)
def test_cast_parity(pane4, kernels, layout):
    kp, kc = kernels
    mesh = relayout(pane4, layout)
    o, d, start = interior_rays(mesh, 4000, seed=40)
    hp = batch.cast_rays(mesh, o, d, start, kernels=kp)
    hc = batch.cast_rays(mesh, o, d, start, kernels=kc)
    assert np.array_equal(hp.status, hc.status)
    assert np.array_equal(hp.cf, hc.cf)
    assert np.array_equal(hp.visited, hc.visited)
    assert np.array_equal(hp.tet_front, hc.tet_front)
    assert np.array_equal(hp.tet_back, hc.tet_back)
    assert (hp.visited >= 1).all()
    hit = hp.triangle >= 0
    assert np.array_equal(hp.t[hit], hc.t[hit])


@pytest.mark.parametrize("layout", LAYOUTS)
def test_visit_sequence_parity(region4, kernels, layout):
    kp, kc = kernels
    mesh = relayout(region4, layout)
    o, d, start = interior_rays(mesh, 500, seed=41)
    _, vp, op = batch.cast_rays_visits(mesh, o, d, start, kernels=kp)
    _, vc, oc = batch.cast_rays_visits(mesh, o, d, start, kernels=kc)
    assert np.array_equal(op, oc)
    assert np.array_equal(vp, vc)


def test_batch_matches_scalar_engine(pane4, kernels):
    kp, kc = kernels
    o, d, start = interior_rays(pane4, 200, seed=42)
    h = batch.cast_rays(pane4, o, d, start, kernels=kc)
    for i in range(len(o)):
        res = cast_ray(Ray(Vec3(*o[i]), Vec3(*d[i])), int(start[i]), pane4)
        if isinstance(res, HitRecord):
            assert h.triangle[i] == res.triangle_id
            assert h.t[i] == res.t
            assert h.visited[i] == res.visited
            assert h.tet_front[i] == res.tet_front
            assert h.tet_back[i] == res.tet_back
        else:
            assert h.triangle[i] == -1
            assert h.visited[i] == res.visited


def test_locate_parity(region4, kernels):
    kp, kc = kernels
    rng = np.random.default_rng(43)
    q = rng.uniform(-0.5, 4.5, size=(3000, 3))  # includes outside points
    tp, vp = batch.locate_points(region4, q, kernels=kp)
    tc, vc = batch.locate_points(region4, q, kernels=kc)
    assert np.array_equal(tp, tc)
    assert np.array_equal(vp, vc)
    assert (tp == -1).any() and (tp >= 0).any()


def test_shadow_parity(pane4, kernels):
    kp, kc = kernels
    rng = np.random.default_rng(44)
    light = np.array([1.23, 2.91, 3.05])
    lt, _ = batch.locate_points(pane4, light[None], kernels=kp)
    p = rng.uniform(0.05, 3.95, size=(3000, 3))
    pt, _ = batch.locate_points(pane4, p, kernels=kp)
    op_, vp = batch.shadow_rays(pane4, p, light, pt, int(lt[0]), kernels=kp)
    oc_, vc = batch.shadow_rays(pane4, p, light, pt, int(lt[0]), kernels=kc)
    assert np.array_equal(op_, oc_)
    assert np.array_equal(vp, vc)
    assert 0.0 < op_.mean() < 1.0


def test_model_mesh_parity(model_mesh, kernels):
    kp, kc = kernels
    o, d, start = interior_rays(model_mesh, 2000, seed=45)
    hp = batch.cast_rays(model_mesh, o, d, start, kernels=kp)
    hc = batch.cast_rays(model_mesh, o, d, start, kernels=kc)
    assert np.array_equal(hp.cf, hc.cf)
    assert np.array_equal(hp.visited, hc.visited)
    assert np.array_equal(hp.status, hc.status)
