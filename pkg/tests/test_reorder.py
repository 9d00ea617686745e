import numpy as np
import pytest

from conftest import interior_rays
from tetray import batch
from tetray.tetmesh import LAYOUTS, relayout, reorder, validate
from tetray.render import visit_locality_metric


class TestReorder:
    def test_none_is_identity(self, box4):
        assert reorder(box4, "none") is box4

    def test_unknown_scheme_rejected(self, box4):
        with pytest.raises(ValueError):
            reorder(box4, "sorted")

    @pytest.mark.parametrize("scheme", ["hilbert", "hilbert_regions", "shuffle"])
    def test_is_pure_permutation(self, region4, scheme):
        m = reorder(region4, scheme)
        assert m.n_tets == region4.n_tets
        assert m.n_points == region4.n_points
        # same point multiset
        a = np.sort(m.points.view("f4").reshape(-1, 3), axis=0)
        b = np.sort(region4.points.view("f4").reshape(-1, 3), axis=0)
        assert np.array_equal(a, b)
        # same tet multiset in terms of coordinates
        ca = np.sort(m.points[m.side_verts].reshape(m.n_tets, -1), axis=1)
        cb = np.sort(region4.points[region4.side_verts].reshape(m.n_tets, -1), axis=1)
        assert np.array_equal(np.sort(ca, axis=0), np.sort(cb, axis=0))

    @pytest.mark.parametrize("scheme", ["hilbert", "hilbert_regions", "shuffle"])
    def test_validates_after_reorder(self, region4, scheme):
        assert validate(reorder(region4, scheme)) == []

    @pytest.mark.parametrize("layout", LAYOUTS)
    def test_traversal_invariant_under_reorder(self, pane4, layout):
        mesh = relayout(pane4, layout)
        o, d, start = interior_rays(mesh, 2000, seed=50)
        base = batch.cast_rays(mesh, o, d, start)
        for scheme in ("hilbert", "hilbert_regions", "shuffle"):
            m = reorder(mesh, scheme)
            starts2, _ = batch.locate_points(m, o.astype(np.float64))
            assert (starts2 >= 0).all()
            h = batch.cast_rays(m, o, d, starts2)
            assert np.array_equal(h.triangle, base.triangle)
            hit = base.triangle >= 0
            assert np.allclose(h.t[hit], base.t[hit], rtol=1e-9, atol=1e-12)

    def test_point_locality_improves_vs_shuffle(self, box4):
        def point_metric(mesh):
            # mean index distance to the spatially nearest other point
            pts = mesh.points.astype(np.float64)
            d2 = np.sum((pts[:, None] - pts[None]) ** 2, axis=-1)
            np.fill_diagonal(d2, np.inf)
            nearest = np.argmin(d2, axis=1)
            return float(np.abs(np.arange(len(pts)) - nearest).mean())

        hil = reorder(box4, "hilbert")
        shuf = reorder(box4, "shuffle")
        assert point_metric(hil) < point_metric(shuf)

    def test_visit_locality_improves_vs_shuffle(self, box4):
        m_h = visit_locality_metric(reorder(box4, "hilbert"))
        m_hr = visit_locality_metric(reorder(box4, "hilbert_regions"))
        m_s = visit_locality_metric(reorder(box4, "shuffle"))
        assert m_h <= m_s
        assert m_hr <= m_s

    def test_source_tet_remapped(self, box4):
        m = reorder(box4, "shuffle", seed=3)
        src_coords = box4.points[box4.side_verts[box4.source_tet]]
        new_coords = m.points[m.side_verts[m.source_tet]]
        assert np.array_equal(
            np.sort(src_coords.ravel()), np.sort(new_coords.ravel())
        )
