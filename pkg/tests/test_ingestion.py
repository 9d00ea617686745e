import numpy as np
import pytest

from tetray.ingestion import (
    AssociationError,
    ParseError,
    TetGenFileSet,
    associate_constrained_faces,
    build_box_fixture,
    load_obj,
    parse_tetgen,
    write_tetgen,
)
from tetray.tetmesh import (
    BOUNDARY_REF,
    SceneTriangleSoup,
    encode,
    is_boundary,
    is_constrained,
    ref_payload,
    validate,
    validate_raw,
)


class TestBoxFixture:
    def test_single_cell_combinatorics(self):
        raw, soup = build_box_fixture(1)
        assert raw.n_tets == 6
        assert len(raw.constrained_faces) == 12  # 2 triangles per wall
        assert soup.n_triangles == 12
        assert validate_raw(raw) == []
        assert validate(encode(raw, "tet32", soup)) == []

    def test_two_cell_grid(self):
        raw, soup = build_box_fixture(2)
        assert raw.n_tets == 48
        assert validate_raw(raw) == []

    def test_occluder_splits_regions(self):
        from tetray.tetmesh import detect_regions

        raw, _ = build_box_fixture(2, occluders=[(0, 1, (0, 0), (2, 2))])
        assert detect_regions(raw).max() == 1

    def test_off_lattice_occluder_rejected(self):
        with pytest.raises(ValueError):
            build_box_fixture(2, occluders=[(0, 1, (0, 0), (3, 2))])
        with pytest.raises(ValueError):
            build_box_fixture(2, occluders=[(0, 2, (0, 0), (2, 2))])  # on the wall
        with pytest.raises(ValueError):
            build_box_fixture(2, occluders=[(3, 1, (0, 0), (2, 2))])

    def test_open_walls_leave_boundary(self):
        raw, soup = build_box_fixture(2, walls="open")
        assert len(raw.constrained_faces) == 0
        assert soup.n_triangles == 0
        assert np.any(raw.neighbors == BOUNDARY_REF)
        assert validate_raw(raw) == []

    def test_wall_faces_map_many_to_one(self):
        raw, soup = build_box_fixture(4)
        tri_ids = [cf.triangle_id for cf in raw.constrained_faces]
        # 4x4 cells x 2 triangles per wall face all collapse onto 2 wall
        # triangles per wall
        assert len(tri_ids) == 6 * 16 * 2
        assert len(set(tri_ids)) == 12

    def test_interior_occluders_reference_both_tets(self):
        raw, _ = build_box_fixture(2, occluders=[(1, 1, (0, 0), (2, 2))])
        interior = [cf for cf in raw.constrained_faces if cf.tet_back >= 0]
        assert interior
        for cf in interior:
            for t in (cf.tet_front, cf.tet_back):
                refs = [
                    ref_payload(int(r))
                    for r in raw.neighbors[t]
                    if is_constrained(int(r))
                ]
                assert raw.constrained_faces.index(cf) in refs


def _write_two_tet_fileset(tmp_path, base_index=1, mark_faces=True):
    b = base_index
    node = tmp_path / "two.node"
    node.write_text(
        "# minimal two-tet mesh\n"
        "5 3 0 0\n"
        f"{b} 0 0 0\n{b+1} 1 0 0\n{b+2} 0 1 0\n{b+3} 0 0 1\n{b+4} 1 1 1\n"
    )
    (tmp_path / "two.ele").write_text(
        f"2 4 0\n{b} {b} {b+1} {b+2} {b+3}\n{b+1} {b+1} {b+2} {b+3} {b+4}\n"
    )
    (tmp_path / "two.neigh").write_text(f"2 4\n{b} {b+1} -1 -1 -1\n{b+1} -1 -1 -1 {b}\n")
    faces = [
        (b, b + 1, b + 2),  # z=0 wall of tet 0
        (b + 1, b + 2, b + 4),
    ]
    marker = 1 if mark_faces else 0
    (tmp_path / "two.face").write_text(
        "2 1\n" + "".join(f"{i+b} {f[0]} {f[1]} {f[2]} {marker}\n" for i, f in enumerate(faces))
    )
    return tmp_path / "two"


class TestParseTetgen:
    def test_minimal_fileset(self, tmp_path):
        raw = parse_tetgen(_write_two_tet_fileset(tmp_path))
        assert raw.n_points == 5 and raw.n_tets == 2
        assert validate_raw(raw) == []
        # mutual adjacency across the shared face
        plain0 = [r for r in raw.neighbors[0] if not is_boundary(int(r)) and not is_constrained(int(r))]
        assert plain0 == [1]

    def test_boundary_sentinel_mapping(self, tmp_path):
        raw = parse_tetgen(_write_two_tet_fileset(tmp_path, mark_faces=False))
        assert sum(is_boundary(int(r)) for r in raw.neighbors.ravel()) == 6
        assert len(raw.constrained_faces) == 0

    def test_marked_faces_become_constrained(self, tmp_path):
        raw = parse_tetgen(_write_two_tet_fileset(tmp_path))
        assert len(raw.constrained_faces) == 2

    def test_zero_and_one_based_twins_agree(self, tmp_path):
        d0 = tmp_path / "zero"
        d1 = tmp_path / "one"
        d0.mkdir()
        d1.mkdir()
        raw0 = parse_tetgen(_write_two_tet_fileset(d0, base_index=0))
        raw1 = parse_tetgen(_write_two_tet_fileset(d1, base_index=1))
        assert np.array_equal(raw0.points, raw1.points)
        assert np.array_equal(raw0.tets, raw1.tets)
        assert np.array_equal(raw0.neighbors, raw1.neighbors)

    def test_count_mismatch_reported(self, tmp_path):
        base = _write_two_tet_fileset(tmp_path)
        (tmp_path / "two.ele").write_text("3 4 0\n1 1 2 3 4\n2 2 3 4 5\n")
        with pytest.raises(ParseError):
            parse_tetgen(base)

    def test_index_out_of_range_reported(self, tmp_path):
        base = _write_two_tet_fileset(tmp_path)
        (tmp_path / "two.ele").write_text("2 4 0\n1 1 2 3 9\n2 2 3 4 5\n")
        with pytest.raises(ParseError) as err:
            parse_tetgen(base)
        assert "two.ele" in str(err.value)

    def test_adjacency_asymmetry_reported(self, tmp_path):
        base = _write_two_tet_fileset(tmp_path)
        (tmp_path / "two.neigh").write_text("2 4\n1 2 -1 -1 -1\n2 -1 -1 -1 -1\n")
        with pytest.raises(ParseError):
            parse_tetgen(base)

    def test_round_trip(self, tmp_path):
        raw, soup = build_box_fixture(2, occluders=[(2, 1, (0, 0), (2, 2))])
        fs = write_tetgen(raw, tmp_path / "rt", index_base=1)
        back = parse_tetgen(fs)
        assert np.array_equal(back.points, raw.points)
        assert np.array_equal(back.tets, raw.tets)
        assert len(back.constrained_faces) == len(raw.constrained_faces)
        cf_a = {cf.vertex_ids for cf in raw.constrained_faces}
        cf_b = {cf.vertex_ids for cf in back.constrained_faces}
        assert cf_a == cf_b
        assert validate_raw(back) == []

    def test_explicit_fileset_paths(self, tmp_path):
        base = _write_two_tet_fileset(tmp_path)
        fs = TetGenFileSet(
            node=base.with_name("two.node"),
            ele=base.with_name("two.ele"),
            neigh=base.with_name("two.neigh"),
            face=None,
        )
        raw = parse_tetgen(fs)
        assert len(raw.constrained_faces) == 0


class TestLoadObj:
    def test_quad_fans_to_two_triangles(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        soup = load_obj(p)
        assert soup.n_triangles == 2

    def test_cube_and_comments(self, tmp_path):
        verts = [
            (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
            (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
        ]
        quads = [
            (1, 4, 3, 2), (5, 6, 7, 8), (1, 2, 6, 5),
            (2, 3, 7, 6), (3, 4, 8, 7), (4, 1, 5, 8),
        ]
        text = "# a cube\n\n"
        text += "".join(f"v {x} {y} {z}\n" for x, y, z in verts)
        text += "\n# faces\n"
        text += "".join(f"f {a} {b} {c} {d}\n" for a, b, c, d in quads)
        p = tmp_path / "cube.obj"
        p.write_text(text)
        soup = load_obj(p)
        assert soup.n_triangles == 12
        assert np.all(soup.material_ids == 0)

    def test_slash_indices_and_negatives(self, tmp_path):
        p = tmp_path / "s.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 -1/3\n")
        assert load_obj(p).n_triangles == 1

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0\n")
        with pytest.raises(ParseError) as err:
            load_obj(p)
        assert err.value.line_no == 2

    def test_degenerate_triangle_rejected(self, tmp_path):
        p = tmp_path / "deg.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
        with pytest.raises(ParseError):
            load_obj(p)


class TestAssociation:
    def test_subdivided_face_maps_many_to_one(self):
        # one big triangle, four sub-triangles (midpoint subdivision)
        big = SceneTriangleSoup(
            vertices=np.array([[0, 0, 0], [4, 0, 0], [0, 4, 0]], dtype=np.float64),
            triangles=np.array([[0, 1, 2]], dtype=np.int32),
            material_ids=np.zeros(1, dtype=np.int32),
        )
        pts = np.array(
            [[0, 0, 0], [4, 0, 0], [0, 4, 0], [2, 0, 0], [2, 2, 0], [0, 2, 0]],
            dtype=np.float64,
        )
        subs = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]], dtype=np.int64)
        ids = associate_constrained_faces(pts, subs, big, tolerance=0.0)
        assert ids.tolist() == [0, 0, 0, 0]

    def test_exact_match_at_zero_tolerance(self):
        raw, soup = build_box_fixture(2)
        faces = np.array([cf.vertex_ids for cf in raw.constrained_faces])
        ids = associate_constrained_faces(raw.points, faces, soup, tolerance=0.0)
        assert len(ids) == len(faces)

    def test_unmatched_face_raises(self):
        soup = SceneTriangleSoup(
            vertices=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=np.float64),
            triangles=np.array([[0, 1, 2]], dtype=np.int32),
            material_ids=np.zeros(1, dtype=np.int32),
        )
        pts = np.array([[0, 0, 5], [1, 0, 5], [0, 1, 5]], dtype=np.float64)
        with pytest.raises(AssociationError):
            associate_constrained_faces(pts, np.array([[0, 1, 2]]), soup, tolerance=1e-9)
