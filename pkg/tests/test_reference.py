import numpy as np
import pytest

from tetray.geometry import Ray, Vec2, Vec3
from tetray.ingestion import build_box_fixture
from tetray.reference import (
    barycentric_contains,
    brute_force_cast,
    brute_force_cast_batch,
    bvh_build,
    bvh_cast,
    moller_trumbore,
    point_in_triangle_2d,
    segment_occluded,
)

UNIT_TRI = (Vec3(-1.0, -1.0, 0.0), Vec3(1.0, -1.0, 0.0), Vec3(0.0, 1.0, 0.0))


def _plane_clip_t(o, d, tri):
    """Independent oracle: plane intersection + 2-D barycentric test."""
    a, b, c = (np.asarray([v.x, v.y, v.z]) for v in tri)
    n = np.cross(b - a, c - a)
    denom = n @ d
    if denom == 0:
        return None
    t = (n @ (a - o)) / denom
    if t < 0:
        return None
    q = o + t * d
    # solve barycentric via normal-dominant projection
    drop = int(np.argmax(np.abs(n)))
    keep = [i for i in range(3) if i != drop]
    a2, b2, c2, q2 = (v[keep] for v in (a, b, c, q))
    m = np.array([b2 - a2, c2 - a2]).T
    try:
        uv = np.linalg.solve(m, q2 - a2)
    except np.linalg.LinAlgError:
        return None
    u, v = uv
    if u < -1e-12 or v < -1e-12 or u + v > 1 + 1e-12:
        return None
    return t


class TestMollerTrumbore:
    def test_axis_case(self):
        t = moller_trumbore(Ray(Vec3(0.0, 0.0, -1.0), Vec3(0.0, 0.0, 1.0)), UNIT_TRI)
        assert t == pytest.approx(1.0)

    def test_parallel_ray_misses(self):
        t = moller_trumbore(Ray(Vec3(0.0, 0.0, 1.0), Vec3(1.0, 0.0, 0.0)), UNIT_TRI)
        assert t is None

    def test_behind_origin_misses(self):
        t = moller_trumbore(Ray(Vec3(0.0, 0.0, 1.0), Vec3(0.0, 0.0, 1.0)), UNIT_TRI)
        assert t is None

    def test_against_plane_clip_oracle(self):
        rng = np.random.default_rng(9)
        hits = 0
        for _ in range(100_000):
            o = rng.normal(size=3)
            d = rng.normal(size=3)
            tri_pts = rng.normal(size=(3, 3))
            tri = tuple(Vec3(*p) for p in tri_pts)
            t1 = moller_trumbore(Ray(Vec3(*o), Vec3(*d)), tri)
            t2 = _plane_clip_t(o, d, tri)
            if (t1 is None) != (t2 is None):
                # boundary-epsilon disagreement must involve a near-edge hit
                t = t1 if t1 is not None else t2
                q = o + t * d
                assert _near_edge(q, tri_pts), (t1, t2)
                continue
            if t1 is not None:
                assert t1 == pytest.approx(t2, rel=1e-8, abs=1e-10)
                hits += 1
        assert hits > 1000  # the sweep actually exercised the hit path


def _near_edge(q, tri, eps=1e-9):
    a, b, c = tri
    area = np.linalg.norm(np.cross(b - a, c - a))
    for p0, p1 in ((a, b), (b, c), (c, a)):
        e = p1 - p0
        d = np.linalg.norm(np.cross(e, q - p0)) / (np.linalg.norm(e) + 1e-300)
        if d < 1e-6 * (1 + area):
            return True
    return False


class TestBruteForce:
    def test_empty_scene_misses(self):
        from tetray.tetmesh import SceneTriangleSoup

        soup = SceneTriangleSoup(
            vertices=np.zeros((0, 3)),
            triangles=np.zeros((0, 3), dtype=np.int32),
            material_ids=np.zeros(0, dtype=np.int32),
        )
        assert brute_force_cast(Ray(Vec3(0, 0, 0), Vec3(1, 0, 0)), soup) is None

    def test_nearest_and_tie_break(self):
        raw, soup = build_box_fixture(2)
        res = brute_force_cast(Ray(Vec3(1.0, 0.7, 1.1), Vec3(1.0, 0.0, 0.0)), soup)
        assert res is not None
        tri_id, t = res
        assert t == pytest.approx(1.0)  # hits the x=2 wall
        coords = soup.triangle_coords()[tri_id]
        assert np.all(coords[:, 0] == 2.0)

    def test_batch_matches_scalar(self):
        raw, soup = build_box_fixture(2, occluders=[(0, 1, (0, 0), (2, 2))])
        rng = np.random.default_rng(10)
        o = rng.uniform(0.1, 1.9, size=(200, 3))
        d = rng.normal(size=(200, 3))
        ids, ts = brute_force_cast_batch(o, d, soup)
        for i in range(200):
            res = brute_force_cast(Ray(Vec3(*o[i]), Vec3(*d[i])), soup)
            if res is None:
                assert ids[i] == -1
            else:
                assert ids[i] == res[0]
                assert ts[i] == pytest.approx(res[1], rel=1e-12)


class TestPointInTriangle2d:
    A, B, C = Vec2(-1.0, -1.0), Vec2(1.0, -1.0), Vec2(0.0, 1.0)

    def test_origin_inside(self):
        assert point_in_triangle_2d(Vec2(0.0, 0.0), self.A, self.B, self.C)

    def test_far_point_outside(self):
        assert not point_in_triangle_2d(Vec2(5.0, 5.0), self.A, self.B, self.C)

    def test_vertex_counts_as_inside(self):
        assert point_in_triangle_2d(self.A, self.A, self.B, self.C)

    def test_winding_independent(self):
        assert point_in_triangle_2d(Vec2(0.0, 0.0), self.A, self.C, self.B)


class TestBarycentricContains:
    TET = (Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1))

    def test_centroid_inside(self):
        assert barycentric_contains((0.25, 0.25, 0.25), self.TET)

    def test_far_point_outside(self):
        assert not barycentric_contains((2.0, 2.0, 2.0), self.TET)

    def test_face_midpoint_boundary_inside(self):
        assert barycentric_contains((1 / 3, 1 / 3, 1 / 3), self.TET)

    def test_degenerate_tet_rejected(self):
        flat = (Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0))
        with pytest.raises(ValueError):
            barycentric_contains((0.1, 0.1, 0.0), flat)


class TestSegmentOccluded:
    def test_pane_blocks(self):
        raw, soup = build_box_fixture(4, occluders=[(0, 2, (0, 0), (4, 4))])
        assert segment_occluded((1.0, 2.0, 2.0), (3.0, 2.1, 1.9), soup)

    def test_open_line_of_sight(self):
        raw, soup = build_box_fixture(4, occluders=[(0, 2, (1, 1), (3, 3))])
        assert not segment_occluded((1.0, 0.5, 0.5), (3.0, 0.4, 0.6), soup)

    def test_endpoints_do_not_occlude(self):
        raw, soup = build_box_fixture(2)
        # both endpoints on walls; only strict interior crossings count
        assert not segment_occluded((0.0, 1.0, 1.0), (2.0, 1.0, 1.1), soup)


class TestBVH:
    @pytest.mark.parametrize(
        "occluders", [[], [(0, 2, (1, 1), (3, 3))], [(1, 2, (0, 0), (4, 4))]]
    )
    def test_matches_brute_force(self, occluders):
        raw, soup = build_box_fixture(4, occluders=occluders)
        bvh = bvh_build(soup)
        rng = np.random.default_rng(11)
        o = rng.uniform(0.2, 3.8, size=(300, 3))
        d = rng.normal(size=(300, 3))
        ids, ts = brute_force_cast_batch(o, d, soup)
        for i in range(300):
            res = bvh_cast(bvh, Ray(Vec3(*o[i]), Vec3(*d[i])))
            if ids[i] < 0:
                assert res is None
            else:
                assert res is not None
                assert res[0] == ids[i]
                assert res[1] == pytest.approx(ts[i], rel=1e-12)

    def test_reports_size(self):
        _, soup = build_box_fixture(2)
        bvh = bvh_build(soup)
        assert bvh.accelerator_bytes > 0
        assert bvh.node_count >= 1
