"""Scene and mesh loading: TetGen filesets, OBJ, and analytic box fixtures.

No tetrahedralizer runs here; meshes come from committed filesets or from
the Kuhn-subdivision box generator, which produces meshes with exactly
known combinatorics for the tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tetmesh import (
    BOUNDARY_REF,
    NO_TET,
    ConstrainedFace,
    RawTetMesh,
    SceneTriangleSoup,
    face_ref,
    is_boundary,
    is_constrained,
    ref_payload,
    signed_volumes,
    validate_raw,
)


class ParseError(Exception):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class AssociationError(Exception):
    """A constrained mesh face could not be matched to a scene triangle."""


@dataclass(frozen=True)
class TetGenFileSet:
    node: Path
    ele: Path
    neigh: Path
    face: Path | None = None

    @classmethod
    def from_basename(cls, base) -> "TetGenFileSet":
        base = str(base)
        if base.endswith(".node"):
            base = base[: -len(".node")]
        face = Path(base + ".face")
        return cls(
            node=Path(base + ".node"),
            ele=Path(base + ".ele"),
            neigh=Path(base + ".neigh"),
            face=face if face.exists() else None,
        )


def _data_lines(path):
    """Yield (line_no, tokens) for non-comment, non-blank lines."""
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                yield line_no, stripped.split()


def _read_table(path, expect_cols, what):
    rows = []
    header = None
    for line_no, toks in _data_lines(path):
        if header is None:
            header = (line_no, toks)
            continue
        if len(toks) < expect_cols:
            raise ParseError(path, line_no, f"{what}: expected >= {expect_cols} fields")
        rows.append((line_no, toks))
    if header is None:
        raise ParseError(path, 0, f"{what}: empty file")
    return header, rows


def parse_tetgen(files: TetGenFileSet | str | Path) -> RawTetMesh:
    """Parse a TetGen ASCII fileset into a raw mesh.

    .face entries with a non-zero boundary marker become constrained faces;
    .neigh entries of -1 map to the boundary sentinel. The index base (0 or
    1) is auto-detected from the first node index. Negative-volume
    tetrahedra are reoriented by swapping two vertices along with their
    neighbor slots.
    """
    if not isinstance(files, TetGenFileSet):
        files = TetGenFileSet.from_basename(files)

    (hline, htoks), rows = _read_table(files.node, 4, "node")
    try:
        n_points = int(htoks[0])
        dim = int(htoks[1])
    except ValueError:
        raise ParseError(files.node, hline, "bad node header") from None
    if dim != 3:
        raise ParseError(files.node, hline, f"dimension {dim} != 3")
    if len(rows) != n_points:
        raise ParseError(files.node, hline, f"{len(rows)} nodes, header says {n_points}")
    base = int(rows[0][1][0]) if rows else 0
    if base not in (0, 1):
        raise ParseError(files.node, rows[0][0], f"first node index {base}, expected 0 or 1")
    points = np.empty((n_points, 3), dtype=np.float64)
    for k, (line_no, toks) in enumerate(rows):
        idx = int(toks[0]) - base
        if idx != k:
            raise ParseError(files.node, line_no, f"non-sequential node index {toks[0]}")
        try:
            points[k] = [float(toks[1]), float(toks[2]), float(toks[3])]
        except ValueError:
            raise ParseError(files.node, line_no, "bad coordinate") from None

    (hline, htoks), rows = _read_table(files.ele, 5, "ele")
    n_tets = int(htoks[0])
    if len(rows) != n_tets:
        raise ParseError(files.ele, hline, f"{len(rows)} tets, header says {n_tets}")
    tets = np.empty((n_tets, 4), dtype=np.int32)
    for k, (line_no, toks) in enumerate(rows):
        try:
            tets[k] = [int(t) - base for t in toks[1:5]]
        except ValueError:
            raise ParseError(files.ele, line_no, "bad vertex index") from None
        if tets[k].min() < 0 or tets[k].max() >= n_points:
            raise ParseError(files.ele, line_no, "vertex index out of range")

    (hline, htoks), rows = _read_table(files.neigh, 5, "neigh")
    if int(htoks[0]) != n_tets or len(rows) != n_tets:
        raise ParseError(files.neigh, hline, "neighbor count does not match .ele")
    neigh = np.empty((n_tets, 4), dtype=np.int64)
    for k, (line_no, toks) in enumerate(rows):
        try:
            neigh[k] = [int(t) for t in toks[1:5]]
        except ValueError:
            raise ParseError(files.neigh, line_no, "bad neighbor index") from None
    neigh[neigh >= 0] -= base if base else 0
    if neigh.max(initial=-1) >= n_tets:
        raise ParseError(files.neigh, 0, "neighbor index out of range")

    faces = []
    if files.face is not None:
        (hline, htoks), rows = _read_table(files.face, 4, "face")
        n_faces = int(htoks[0])
        if len(rows) != n_faces:
            raise ParseError(files.face, hline, f"{len(rows)} faces, header says {n_faces}")
        for line_no, toks in rows:
            try:
                corners = tuple(int(t) - base for t in toks[1:4])
                marker = int(toks[4]) if len(toks) > 4 else 1
            except ValueError:
                raise ParseError(files.face, line_no, "bad face record") from None
            if min(corners) < 0 or max(corners) >= n_points:
                raise ParseError(files.face, line_no, "face corner out of range")
            if marker != 0:
                faces.append(corners)

    # Reorient negative tets: swap vertices 1,2 and their neighbor slots.
    flip = np.nonzero(signed_volumes(points, tets) < 0)[0][:, None]
    tets[flip, [1, 2]] = tets[flip, [2, 1]]
    neigh[flip, [1, 2]] = neigh[flip, [2, 1]]

    refs = np.where(neigh < 0, np.int64(BOUNDARY_REF), neigh).astype(np.uint32)
    raw = RawTetMesh(points=points, tets=tets, neighbors=refs, constrained_faces=[])
    if faces:
        _mark_constrained(raw, faces, files.face)
    problems = validate_raw(raw)
    if problems:
        raise ParseError(files.neigh, 0, "; ".join(problems[:5]))
    return raw


def _face_incidence(tets: np.ndarray) -> dict[tuple[int, int, int], list[tuple[int, int]]]:
    """Map sorted vertex triple -> [(tet, opposite slot), ...]."""
    inc: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
    for t, quad in enumerate(np.asarray(tets)):
        q = [int(v) for v in quad]
        for j in range(4):
            key = tuple(sorted(q[:j] + q[j + 1 :]))
            inc.setdefault(key, []).append((t, j))
    return inc


def _mark_constrained(raw: RawTetMesh, face_triples, face_path) -> None:
    inc = _face_incidence(raw.tets)
    for corners in face_triples:
        key = tuple(sorted(corners))
        hits = inc.get(key)
        if not hits:
            raise ParseError(face_path, 0, f"marked face {corners} is not a mesh face")
        cf_idx = len(raw.constrained_faces)
        front = hits[0][0]
        back = hits[1][0] if len(hits) > 1 else NO_TET
        raw.constrained_faces.append(
            ConstrainedFace(
                triangle_id=cf_idx, tet_front=front, tet_back=back, vertex_ids=key
            )
        )
        for t, j in hits:
            raw.neighbors[t, j] = face_ref(cf_idx)


def write_tetgen(raw: RawTetMesh, base, index_base: int = 1) -> TetGenFileSet:
    """Write a raw mesh as a TetGen ASCII fileset (round-trip support)."""
    base = Path(base)
    b = index_base
    node, ele, neigh, face = (Path(f"{base}{ext}") for ext in (".node", ".ele", ".neigh", ".face"))
    with open(node, "w") as fh:
        fh.write(f"{raw.n_points} 3 0 0\n")
        for i, p in enumerate(raw.points):
            fh.write(f"{i + b} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    with open(ele, "w") as fh:
        fh.write(f"{raw.n_tets} 4 0\n")
        for i, q in enumerate(raw.tets):
            fh.write(f"{i + b} {q[0] + b} {q[1] + b} {q[2] + b} {q[3] + b}\n")
    with open(neigh, "w") as fh:
        fh.write(f"{raw.n_tets} 4\n")
        for i in range(raw.n_tets):
            out = []
            for j in range(4):
                ref = int(raw.neighbors[i, j])
                if is_boundary(ref):
                    out.append(-1)
                elif is_constrained(ref):
                    cf = raw.constrained_faces[ref_payload(ref)]
                    other = cf.tet_back if cf.tet_front == i else cf.tet_front
                    out.append(other + b if other != NO_TET else -1)
                else:
                    out.append(ref_payload(ref) + b)
            fh.write(f"{i + b} {out[0]} {out[1]} {out[2]} {out[3]}\n")
    with open(face, "w") as fh:
        fh.write(f"{len(raw.constrained_faces)} 1\n")
        for i, cf in enumerate(raw.constrained_faces):
            v = cf.vertex_ids
            fh.write(f"{i + b} {v[0] + b} {v[1] + b} {v[2] + b} 1\n")
    return TetGenFileSet(node=node, ele=ele, neigh=neigh, face=face)


def load_obj(path) -> SceneTriangleSoup:
    """Load a Wavefront OBJ subset: v and f records, fan triangulation."""
    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks or toks[0].startswith("#"):
                continue
            if toks[0] == "v":
                if len(toks) < 4:
                    raise ParseError(path, line_no, "vertex needs 3 coordinates")
                try:
                    verts.append([float(toks[1]), float(toks[2]), float(toks[3])])
                except ValueError:
                    raise ParseError(path, line_no, "bad vertex coordinate") from None
            elif toks[0] == "f":
                if len(toks) < 4:
                    raise ParseError(path, line_no, "face needs >= 3 vertices")
                try:
                    ids = [int(t.split("/")[0]) for t in toks[1:]]
                except ValueError:
                    raise ParseError(path, line_no, "bad face index") from None
                ids = [i - 1 if i > 0 else len(verts) + i for i in ids]
                if min(ids) < 0 or max(ids) >= len(verts):
                    raise ParseError(path, line_no, "face index out of range")
                for k in range(1, len(ids) - 1):
                    tris.append((ids[0], ids[k], ids[k + 1]))
            # normals/texcoords/materials are out of scope; ignore
    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(tris, dtype=np.int32).reshape(-1, 3)
    if len(triangles):
        coords = vertices[triangles]
        areas = np.linalg.norm(
            np.cross(coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]), axis=1
        )
        if np.any(areas == 0):
            raise ParseError(path, 0, "degenerate (zero-area) triangle in file")
    return SceneTriangleSoup(
        vertices=vertices,
        triangles=triangles,
        material_ids=np.zeros(len(triangles), dtype=np.int32),
    )


# ---------------------------------------------------------------------------
# Analytic box fixture (Kuhn subdivision)

_PERMS = list(itertools.permutations((0, 1, 2)))
_EYE = np.eye(3, dtype=np.int64)
_FREE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def _perm_sign(p) -> int:
    s = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def build_box_fixture(
    n: int,
    occluders=(),
    walls: str = "constrained",
) -> tuple[RawTetMesh, SceneTriangleSoup]:
    """n x n x n cell box, each cell split into 6 Kuhn tetrahedra.

    Occluders are axis-aligned rectangles on interior cell-face planes,
    given as (axis, k, (u0, v0), (u1, v1)) with lattice coordinates; their
    faces (and, by default, the outer walls) become constrained. The wall
    scene geometry is two large triangles per wall, so wall constrained
    faces map many-to-one onto scene triangles; occluder squares map 1:1.

    With walls="open" the hull is left unconstrained (boundary sentinel),
    which gives rays a way to leave the mesh.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if walls not in ("constrained", "open"):
        raise ValueError("walls must be 'constrained' or 'open'")
    occs = []
    for occ in occluders:
        axis, k, (u0, v0), (u1, v1) = occ
        ok = (
            axis in (0, 1, 2)
            and all(isinstance(x, (int, np.integer)) for x in (k, u0, v0, u1, v1))
            and 1 <= k <= n - 1
            and 0 <= u0 < u1 <= n
            and 0 <= v0 < v1 <= n
        )
        if not ok:
            raise ValueError(f"occluder {occ} is not on the interior cell-face lattice")
        occs.append((int(axis), int(k), int(u0), int(v0), int(u1), int(v1)))

    m = n + 1
    grid = np.stack(
        np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij"), axis=-1
    )
    points = grid.reshape(-1, 3).astype(np.float64)

    def pid(c):
        return int(c[0]) * m * m + int(c[1]) * m + int(c[2])

    tets = []
    for i, j, k in itertools.product(range(n), repeat=3):
        c0 = np.array((i, j, k), dtype=np.int64)
        for p in _PERMS:
            c1 = c0 + _EYE[p[0]]
            c2 = c1 + _EYE[p[1]]
            c3 = c0 + 1
            quad = [pid(c0), pid(c1), pid(c2), pid(c3)]
            if _perm_sign(p) < 0:
                quad[1], quad[2] = quad[2], quad[1]
            tets.append(quad)
    tets = np.asarray(tets, dtype=np.int32)

    inc = _face_incidence(tets)
    neighbors = np.full((len(tets), 4), BOUNDARY_REF, dtype=np.uint32)
    int_pts = points.astype(np.int64)

    def on_occluder(key) -> bool:
        pts = int_pts[list(key)]
        for axis, k, u0, v0, u1, v1 in occs:
            a, bx = _FREE_AXES[axis]
            if (
                np.all(pts[:, axis] == k)
                and pts[:, a].min() >= u0
                and pts[:, a].max() <= u1
                and pts[:, bx].min() >= v0
                and pts[:, bx].max() <= v1
            ):
                return True
        return False

    constrained_keys = []
    for key, hits in sorted(inc.items()):
        if len(hits) == 2:
            (t0, j0), (t1, j1) = hits
            if on_occluder(key):
                constrained_keys.append((key, hits))
            else:
                neighbors[t0, j0] = t1
                neighbors[t1, j1] = t0
        else:
            (t0, j0) = hits[0]
            if walls == "constrained":
                constrained_keys.append((key, hits))
            # else: leave the boundary sentinel

    soup = _box_soup(n, occs, walls)
    face_verts = np.array([key for key, _ in constrained_keys], dtype=np.int32).reshape(
        -1, 3
    )
    tri_ids = associate_constrained_faces(points, face_verts, soup, tolerance=0.0)

    cfs = []
    for cf_idx, ((key, hits), tri_id) in enumerate(zip(constrained_keys, tri_ids)):
        front = hits[0][0]
        back = hits[1][0] if len(hits) > 1 else NO_TET
        cfs.append(
            ConstrainedFace(
                triangle_id=int(tri_id), tet_front=front, tet_back=back, vertex_ids=key
            )
        )
        for t, j in hits:
            neighbors[t, j] = face_ref(cf_idx)

    raw = RawTetMesh(
        points=points, tets=tets, neighbors=neighbors, constrained_faces=cfs
    )
    return raw, soup


def _box_soup(n: int, occs, walls: str) -> SceneTriangleSoup:
    verts: list[tuple[float, float, float]] = []
    vid: dict[tuple[float, float, float], int] = {}
    tris: list[tuple[int, int, int]] = []
    mats: list[int] = []

    def v(c) -> int:
        key = (float(c[0]), float(c[1]), float(c[2]))
        if key not in vid:
            vid[key] = len(verts)
            verts.append(key)
        return vid[key]

    def quad(axis, plane, u0, v0, u1, v1, mat):
        # Split along the low->high diagonal: the same diagonal orientation
        # the Kuhn subdivision induces on cell faces, so every constrained
        # face is contained in exactly one scene triangle.
        a, bx = _FREE_AXES[axis]

        def pt(u, vv):
            c = [0.0, 0.0, 0.0]
            c[axis] = float(plane)
            c[a] = float(u)
            c[bx] = float(vv)
            return v(c)

        p00, p10, p11, p01 = pt(u0, v0), pt(u1, v0), pt(u1, v1), pt(u0, v1)
        tris.append((p00, p10, p11))
        mats.append(mat)
        tris.append((p00, p11, p01))
        mats.append(mat)

    if walls == "constrained":
        for axis in range(3):
            for plane in (0, n):
                quad(axis, plane, 0, 0, n, n, mat=0)
    for axis, k, u0, v0, u1, v1 in occs:
        for u in range(u0, u1):
            for vv in range(v0, v1):
                quad(axis, k, u, vv, u + 1, vv + 1, mat=1)

    return SceneTriangleSoup(
        vertices=np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        triangles=np.asarray(tris, dtype=np.int32).reshape(-1, 3),
        material_ids=np.asarray(mats, dtype=np.int32),
    )


def associate_constrained_faces(
    points: np.ndarray,
    face_verts: np.ndarray,
    soup: SceneTriangleSoup,
    tolerance: float = 1e-9,
) -> np.ndarray:
    """Match each constrained mesh face to the scene triangle containing it.

    A face matches a triangle when all three face vertices are coplanar
    with and inside it (within the tolerance); ambiguities are resolved by
    strict containment of the face centroid. Raises AssociationError for
    unmatched faces, listing the face vertices.
    """
    points = np.asarray(points, dtype=np.float64)
    face_verts = np.asarray(face_verts, dtype=np.int64).reshape(-1, 3)
    tri = soup.triangle_coords()  # (t, 3, 3)
    if len(tri) == 0:
        if len(face_verts):
            raise AssociationError("scene has no triangles")
        return np.zeros(0, dtype=np.int32)
    n_t = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n_len = np.linalg.norm(n_t, axis=1)
    if np.any(n_len == 0):
        raise AssociationError("degenerate scene triangle")
    n_hat = n_t / n_len[:, None]
    # Per-triangle dominant axis for the 2-D containment test.
    drop = np.argmax(np.abs(n_t), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[drop]  # (t, 2)
    tri2 = np.take_along_axis(tri, keep[:, None, :], axis=2)  # (t, 3, 2)
    e1 = tri2[:, 1] - tri2[:, 0]
    e2 = tri2[:, 2] - tri2[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    out = np.empty(len(face_verts), dtype=np.int32)
    for f, ids in enumerate(face_verts):
        pts = points[ids]  # (3, 3)
        centroid = pts.mean(axis=0)
        dist = np.abs(np.einsum("tj,tpj->tp", n_hat, pts[None] - tri[:, 0][:, None]))
        coplanar = dist.max(axis=1) <= tolerance + 1e-300
        cand = np.nonzero(coplanar)[0]
        if len(cand) == 0:
            raise AssociationError(f"face {pts.tolist()} is not coplanar with any triangle")
        matches = []
        for t in cand:
            if all(_inside_2d(tri2[t], area2[t], p[keep[t]], tolerance) for p in pts):
                matches.append(int(t))
        if len(matches) > 1:
            strict = [
                t
                for t in matches
                if _inside_2d(tri2[t], area2[t], centroid[keep[t]], -tolerance)
            ]
            if len(strict) == 1:
                matches = strict
        if len(matches) != 1:
            raise AssociationError(
                f"face {pts.tolist()} matched {len(matches)} scene triangles"
            )
        out[f] = matches[0]
    return out


def _inside_2d(t2, area, q, tol) -> bool:
    s = 1.0 if area > 0 else -1.0
    slack = tol * (abs(area) + 1.0)
    for i in range(3):
        a, b = t2[i], t2[(i + 1) % 3]
        e = ((b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])) * s
        if e < -slack:
            return False
    return True
