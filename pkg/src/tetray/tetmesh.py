"""Compact xor-linked tetrahedral mesh layouts and their maintenance.

Three per-tetrahedron record layouts are supported:

* ``tet32`` - first three (sorted) vertex indices, xor-sum of all four,
  and four neighbor references: 32 bytes.
* ``tet20`` - xor-sum plus four neighbor references sorted by their
  opposite vertex index: 20 bytes.
* ``tet16`` - xor-sum plus three xor-compressed neighbor links
  NXj = Nj ^ N3 (sorted-slot convention): 16 bytes.

A neighbor reference is a 32-bit word: the top bit marks a constrained
face (scene geometry), the low 31 bits carry either a tetrahedron index or
a constrained-face index, and an all-ones payload with the top bit clear
marks the mesh boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

TET32 = "tet32"
TET20 = "tet20"
TET16 = "tet16"
LAYOUTS = (TET32, TET20, TET16)

CONSTRAINED_BIT = 1 << 31
REF_PAYLOAD_MASK = CONSTRAINED_BIT - 1
BOUNDARY_REF = REF_PAYLOAD_MASK  # all-ones payload, constrained bit clear
NO_TET = -1

TET32_DTYPE = np.dtype(
    [(f, "<u4") for f in ("v0", "v1", "v2", "vx", "n0", "n1", "n2", "n3")]
)
TET20_DTYPE = np.dtype([(f, "<u4") for f in ("vx", "n0", "n1", "n2", "n3")])
TET16_DTYPE = np.dtype([(f, "<u4") for f in ("vx", "nx0", "nx1", "nx2")])
LAYOUT_DTYPES = {TET32: TET32_DTYPE, TET20: TET20_DTYPE, TET16: TET16_DTYPE}
LAYOUT_BYTES = {TET32: 32, TET20: 20, TET16: 16}

# The whole point of the layouts is their byte size; fail at import if the
# structured dtypes ever stop packing.
assert TET32_DTYPE.itemsize == 32
assert TET20_DTYPE.itemsize == 20
assert TET16_DTYPE.itemsize == 16


def face_ref(cf_index: int) -> int:
    """Neighbor reference tagging a constrained face."""
    return CONSTRAINED_BIT | int(cf_index)


def is_constrained(ref: int) -> bool:
    return bool(int(ref) & CONSTRAINED_BIT)


def is_boundary(ref: int) -> bool:
    return int(ref) == BOUNDARY_REF


def ref_payload(ref: int) -> int:
    """Tetrahedron or constrained-face index stored in a reference."""
    return int(ref) & REF_PAYLOAD_MASK


def decode_ref(ref: int) -> int:
    """Tet index for a plain reference, negative for boundary/constrained.

    This realizes the ``while tet_idx >= 0`` loop condition: boundary and
    constrained references both decode below zero.
    """
    r = int(ref)
    if r & CONSTRAINED_BIT or r == BOUNDARY_REF:
        return -1
    return r


def compute_xor_sum(v0: int, v1: int, v2: int, v3: int) -> int:
    """xor-sum of a tetrahedron's four vertex indices."""
    return v0 ^ v1 ^ v2 ^ v3


def recover_fourth_vertex(v0: int, v1: int, v2: int, vx: int) -> int:
    """Vertex omitted from (v0, v1, v2), recovered from the xor-sum."""
    return v0 ^ v1 ^ v2 ^ vx


class MeshError(Exception):
    """A structural problem in mesh data."""


@dataclass
class ConstrainedFace:
    """A tetrahedral-mesh face that coincides with scene geometry.

    tet_back is NO_TET (-1) when the face lies on the mesh hull. Several
    constrained faces may reference the same scene triangle.
    """

    triangle_id: int
    tet_front: int
    tet_back: int
    vertex_ids: tuple[int, int, int]


@dataclass
class SceneTriangleSoup:
    """Scene geometry: vertex positions, triangles, per-triangle material."""

    vertices: np.ndarray  # (p, 3) float64
    triangles: np.ndarray  # (t, 3) int32
    material_ids: np.ndarray  # (t,) int32

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_coords(self) -> np.ndarray:
        """(t, 3, 3) float64 vertex coordinates per triangle."""
        return self.vertices[self.triangles]


@dataclass
class RawTetMesh:
    """Mutable mesh as loaded/built, before compact encoding.

    neighbors[i, j] is the reference across vertex tets[i, j] (i.e. the
    face omitting that vertex). Tetrahedra are positively oriented.
    """

    points: np.ndarray  # (p, 3) float64
    tets: np.ndarray  # (t, 4) int32
    neighbors: np.ndarray  # (t, 4) uint32 refs
    constrained_faces: list[ConstrainedFace] = field(default_factory=list)
    source_tet: int = 0

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass
class CompactMesh:
    """Encoded mesh: hot arrays plus a cold side-table.

    The side tables (full vertex quadruples and explicit sorted neighbor
    references) exist so that traversal can be initialized at any
    tetrahedron and so validation can cross-check the xor-compressed
    records; the hot loop never touches them after initialization.
    """

    layout: str
    points: np.ndarray  # (p, 3) float32, C-contiguous
    records: np.ndarray  # structured array per layout
    side_verts: np.ndarray  # (t, 4) int32, ascending per row
    side_neighbors: np.ndarray  # (t, 4) uint32, sorted-slot refs
    cf_triangle: np.ndarray  # (c,) int32 scene triangle ids
    cf_tets: np.ndarray  # (c, 2) int32, [front, back]; back == -1 on hull
    cf_verts: np.ndarray  # (c, 3) int32
    source_tet: int
    soup: SceneTriangleSoup

    @property
    def n_tets(self) -> int:
        return len(self.side_verts)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_constrained(self) -> int:
        return len(self.cf_triangle)

    @property
    def record_bytes(self) -> int:
        return LAYOUT_BYTES[self.layout]

    @property
    def accelerator_bytes(self) -> int:
        """Hot accelerator footprint: tet records plus point data."""
        return self.records.nbytes + self.points.nbytes

    def records_u32(self) -> np.ndarray:
        """Records as a plain (t, k) uint32 view for the kernels."""
        k = LAYOUT_BYTES[self.layout] // 4
        return self.records.view("<u4").reshape(self.n_tets, k)

    def triangle_coords(self) -> np.ndarray:
        return self.soup.triangle_coords()


def soup_from_faces(points: np.ndarray, face_verts: np.ndarray) -> SceneTriangleSoup:
    """1:1 scene soup whose triangles are the constrained faces themselves."""
    return SceneTriangleSoup(
        vertices=np.asarray(points, dtype=np.float64).copy(),
        triangles=np.asarray(face_verts, dtype=np.int32).copy(),
        material_ids=np.zeros(len(face_verts), dtype=np.int32),
    )


def signed_volumes(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """6x the signed volume of each tetrahedron (float64)."""
    p = np.asarray(points, dtype=np.float64)[np.asarray(tets)]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c))


def validate_raw(raw: RawTetMesh) -> list[str]:
    """Invariant report for a raw mesh (empty list means valid)."""
    problems: list[str] = []
    tets = raw.tets
    nbrs = raw.neighbors
    n_tets = raw.n_tets

    if tets.min(initial=0) < 0 or tets.max(initial=-1) >= raw.n_points:
        problems.append("vertex index out of range")
        return problems

    vols = signed_volumes(raw.points, tets)
    bad = np.nonzero(vols <= 0)[0]
    for t in bad[:10]:
        problems.append(f"tet {t}: non-positive volume {vols[t]:g}")

    vert_sets = [frozenset(map(int, row)) for row in tets]
    for i in range(n_tets):
        if len(vert_sets[i]) != 4:
            problems.append(f"tet {i}: repeated vertex")
            continue
        for j in range(4):
            ref = int(nbrs[i, j])
            shared = vert_sets[i] - {int(tets[i, j])}
            if is_boundary(ref):
                continue
            if is_constrained(ref):
                cf_idx = ref_payload(ref)
                if cf_idx >= len(raw.constrained_faces):
                    problems.append(f"tet {i}: constrained ref {cf_idx} out of range")
                    continue
                cf = raw.constrained_faces[cf_idx]
                if set(cf.vertex_ids) != shared:
                    problems.append(
                        f"tet {i} slot {j}: constrained face {cf_idx} vertex mismatch"
                    )
                if i not in (cf.tet_front, cf.tet_back):
                    problems.append(
                        f"tet {i} slot {j}: constrained face {cf_idx} does not list it"
                    )
                continue
            other = ref_payload(ref)
            if other >= n_tets:
                problems.append(f"tet {i}: neighbor index {other} out of range")
                continue
            if shared - vert_sets[other]:
                problems.append(
                    f"tet {i} / neighbor {other}: face vertices not shared"
                )
            back = [
                k
                for k in range(4)
                if not is_constrained(int(nbrs[other, k]))
                and not is_boundary(int(nbrs[other, k]))
                and ref_payload(int(nbrs[other, k])) == i
            ]
            if not back:
                problems.append(f"adjacency not mutual between tets {i} and {other}")

    for c, cf in enumerate(raw.constrained_faces):
        refs = 0
        for t in (cf.tet_front, cf.tet_back):
            if t == NO_TET:
                continue
            if t < 0 or t >= n_tets:
                problems.append(f"constrained face {c}: tet {t} out of range")
                continue
            if any(
                is_constrained(int(nbrs[t, j])) and ref_payload(int(nbrs[t, j])) == c
                for j in range(4)
            ):
                refs += 1
        expect = 1 if cf.tet_back == NO_TET else 2
        if refs != expect:
            problems.append(
                f"constrained face {c}: referenced by {refs} tets, expected {expect}"
            )

    if not (0 <= raw.source_tet < n_tets):
        problems.append(f"source tet {raw.source_tet} out of range")
    return problems


def _records_from_tables(
    layout: str, side_verts: np.ndarray, side_neighbors: np.ndarray
) -> np.ndarray:
    n = len(side_verts)
    sv = side_verts.astype(np.uint32)
    vx = sv[:, 0] ^ sv[:, 1] ^ sv[:, 2] ^ sv[:, 3]
    rec = np.empty(n, dtype=LAYOUT_DTYPES[layout])
    rec["vx"] = vx
    if layout == TET32:
        for j in range(3):
            rec[f"v{j}"] = sv[:, j]
        for j in range(4):
            rec[f"n{j}"] = side_neighbors[:, j]
    elif layout == TET20:
        for j in range(4):
            rec[f"n{j}"] = side_neighbors[:, j]
    elif layout == TET16:
        for j in range(3):
            rec[f"nx{j}"] = side_neighbors[:, j] ^ side_neighbors[:, 3]
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return rec


def encode(
    raw: RawTetMesh, layout: str, soup: SceneTriangleSoup | None = None
) -> CompactMesh:
    """Encode a raw mesh into one of the compact layouts.

    Vertex quadruples are sorted ascending and neighbor slots follow their
    opposite vertex, which is what makes the Tet20/Tet16 slot arithmetic
    work (and is harmless for Tet32). Raises MeshError on invariant
    violations, naming the offending tetrahedra.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    problems = validate_raw(raw)
    if problems:
        raise MeshError("; ".join(problems[:5]))

    order = np.argsort(raw.tets, axis=1, kind="stable")
    side_verts = np.take_along_axis(raw.tets, order, axis=1).astype(np.int32)
    side_neighbors = np.take_along_axis(raw.neighbors, order, axis=1).astype(np.uint32)

    if soup is None:
        cf_faces = np.array(
            [cf.vertex_ids for cf in raw.constrained_faces], dtype=np.int32
        ).reshape(-1, 3)
        soup = soup_from_faces(raw.points, cf_faces)
        cf_triangle = np.arange(len(raw.constrained_faces), dtype=np.int32)
    else:
        cf_triangle = np.array(
            [cf.triangle_id for cf in raw.constrained_faces], dtype=np.int32
        )
    cf_tets = np.array(
        [(cf.tet_front, cf.tet_back) for cf in raw.constrained_faces], dtype=np.int32
    ).reshape(-1, 2)
    cf_verts = np.array(
        [cf.vertex_ids for cf in raw.constrained_faces], dtype=np.int32
    ).reshape(-1, 3)

    return CompactMesh(
        layout=layout,
        points=np.ascontiguousarray(raw.points, dtype=np.float32),
        records=_records_from_tables(layout, side_verts, side_neighbors),
        side_verts=side_verts,
        side_neighbors=side_neighbors,
        cf_triangle=cf_triangle,
        cf_tets=cf_tets,
        cf_verts=cf_verts,
        source_tet=int(raw.source_tet),
        soup=soup,
    )


def _plain_neighbor_matrix(side_neighbors: np.ndarray) -> np.ndarray:
    """(t, 4) int64 of plain neighbor tet indices, -1 where not a tet."""
    refs = side_neighbors.astype(np.int64)
    plain = (refs & CONSTRAINED_BIT) == 0
    plain &= refs != BOUNDARY_REF
    return np.where(plain, refs & REF_PAYLOAD_MASK, -1)


def _cross_links(side_neighbors: np.ndarray, cf_tets: np.ndarray) -> np.ndarray:
    """(t, 4) int64 neighbor matrix that also crosses constrained faces."""
    refs = side_neighbors.astype(np.int64)
    out = _plain_neighbor_matrix(side_neighbors)
    tagged = (refs & CONSTRAINED_BIT) != 0
    if tagged.any() and len(cf_tets):
        rows = np.arange(len(refs))[:, None].repeat(4, axis=1)
        cfs = (refs & REF_PAYLOAD_MASK)[tagged]
        here = rows[tagged]
        front = cf_tets[cfs, 0]
        back = cf_tets[cfs, 1]
        other = np.where(front == here, back, front)
        out[tagged] = other
    return out


def detect_regions(raw: RawTetMesh) -> np.ndarray:
    """Connected-component label per tetrahedron.

    Flood fill over neighbor links that does not cross constrained faces or
    the hull; labels are 0-based, contiguous, and deterministic (seeded in
    tetrahedron index order).
    """
    order = np.argsort(raw.tets, axis=1, kind="stable")
    side_neighbors = np.take_along_axis(raw.neighbors, order, axis=1).astype(np.uint32)
    return _regions_from_links(_plain_neighbor_matrix(side_neighbors))


def _regions_from_links(links: np.ndarray) -> np.ndarray:
    n = len(links)
    labels = np.full(n, -1, dtype=np.int32)
    next_label = 0
    for seed in range(n):
        if labels[seed] >= 0:
            continue
        stack = [seed]
        labels[seed] = next_label
        while stack:
            t = stack.pop()
            for nb in links[t]:
                if nb >= 0 and labels[nb] < 0:
                    labels[nb] = next_label
                    stack.append(int(nb))
        next_label += 1
    return labels


def _remap_refs(side_neighbors: np.ndarray, tet_old2new: np.ndarray) -> np.ndarray:
    refs = side_neighbors.astype(np.int64)
    plain = ((refs & CONSTRAINED_BIT) == 0) & (refs != BOUNDARY_REF)
    out = refs.copy()
    out[plain] = tet_old2new[refs[plain]]
    return out.astype(np.uint32)


def reorder(mesh: CompactMesh, scheme: str, *, order: int = 10, seed: int = 0) -> CompactMesh:
    """Reorder points and tetrahedra for cache locality.

    Schemes: ``none`` (identity), ``hilbert`` (points by position key, tets
    by centroid key), ``hilbert_regions`` (tets additionally grouped by
    enclosed region), and ``shuffle`` (seeded random permutation, the
    locality baseline used by the benchmark). All cross-references are
    remapped; traversal results are invariant under any scheme.
    """
    from . import hilbert

    if scheme == "none":
        return mesh
    if scheme not in ("hilbert", "hilbert_regions", "shuffle"):
        raise ValueError(f"unknown reorder scheme {scheme!r}")

    pts = mesh.points.astype(np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    centroids = pts[mesh.side_verts].mean(axis=1)

    if scheme == "shuffle":
        rng = np.random.default_rng(seed)
        point_perm = rng.permutation(mesh.n_points)
        tet_perm = rng.permutation(mesh.n_tets)
    else:
        point_keys = hilbert.hilbert_keys(hilbert.quantize(pts, lo, hi, order), order)
        point_perm = np.argsort(point_keys, kind="stable")
        tet_keys = hilbert.hilbert_keys(
            hilbert.quantize(centroids, lo, hi, order), order
        )
        if scheme == "hilbert_regions":
            regions = _regions_from_links(
                _plain_neighbor_matrix(mesh.side_neighbors)
            ).astype(np.uint64)
            # Shift region ids above any 30-bit Hilbert key.
            tet_keys = regions * np.uint64(1 << 32) + tet_keys
        tet_perm = np.argsort(tet_keys, kind="stable")

    point_old2new = np.empty(mesh.n_points, dtype=np.int64)
    point_old2new[point_perm] = np.arange(mesh.n_points)
    tet_old2new = np.empty(mesh.n_tets, dtype=np.int64)
    tet_old2new[tet_perm] = np.arange(mesh.n_tets)

    new_points = np.ascontiguousarray(mesh.points[point_perm])
    verts = point_old2new[mesh.side_verts[tet_perm]]
    nbrs = _remap_refs(mesh.side_neighbors[tet_perm], tet_old2new)

    # Renumbering changes the ascending order within each quadruple, so the
    # sorted-slot convention has to be re-established.
    row_order = np.argsort(verts, axis=1, kind="stable")
    side_verts = np.take_along_axis(verts, row_order, axis=1).astype(np.int32)
    side_neighbors = np.take_along_axis(nbrs, row_order, axis=1)

    cf_tets = mesh.cf_tets.copy()
    live = cf_tets >= 0
    cf_tets[live] = tet_old2new[cf_tets[live]].astype(np.int32)
    cf_verts = point_old2new[mesh.cf_verts].astype(np.int32)
    soup = mesh.soup  # scene triangles are not mesh-indexed; unchanged

    return CompactMesh(
        layout=mesh.layout,
        points=new_points,
        records=_records_from_tables(mesh.layout, side_verts, side_neighbors),
        side_verts=side_verts,
        side_neighbors=side_neighbors,
        cf_triangle=mesh.cf_triangle.copy(),
        cf_tets=cf_tets,
        cf_verts=cf_verts,
        source_tet=int(tet_old2new[mesh.source_tet]),
        soup=soup,
    )


def relayout(mesh: CompactMesh, layout: str) -> CompactMesh:
    """Same mesh re-encoded in a different record layout."""
    if layout == mesh.layout:
        return mesh
    return replace(
        mesh,
        layout=layout,
        records=_records_from_tables(layout, mesh.side_verts, mesh.side_neighbors),
    )


def validate(mesh: CompactMesh) -> list[str]:
    """Full integrity report for a compact mesh (empty list means valid).

    Covers record byte sizes, xor-sum and xor-link consistency against the
    cold side tables, the sorted-slot convention, mutual adjacency, the
    constrained-face cross references, and the xor-walk closure: starting
    from the source tetrahedron every reachable tetrahedron's vertex
    quadruple is reconstructed through xor links alone and compared with
    the ground truth.
    """
    problems: list[str] = []
    rec = mesh.records
    if rec.dtype.itemsize != LAYOUT_BYTES[mesh.layout]:
        problems.append(
            f"record size {rec.dtype.itemsize} != {LAYOUT_BYTES[mesh.layout]}"
        )
    sv = mesh.side_verts
    if np.any(np.diff(sv, axis=1) <= 0):
        bad = int(np.nonzero(np.any(np.diff(sv, axis=1) <= 0, axis=1))[0][0])
        problems.append(f"tet {bad}: side-table vertices not strictly ascending")

    vx_expect = (
        sv[:, 0].astype(np.uint32)
        ^ sv[:, 1].astype(np.uint32)
        ^ sv[:, 2].astype(np.uint32)
        ^ sv[:, 3].astype(np.uint32)
    )
    bad = np.nonzero(rec["vx"] != vx_expect)[0]
    for t in bad[:10]:
        problems.append(f"tet {t}: xor-sum mismatch")

    if mesh.layout == TET32:
        for j in range(3):
            bad = np.nonzero(rec[f"v{j}"] != sv[:, j].astype(np.uint32))[0]
            for t in bad[:5]:
                problems.append(f"tet {t}: stored vertex v{j} mismatch")
    if mesh.layout in (TET32, TET20):
        for j in range(4):
            bad = np.nonzero(rec[f"n{j}"] != mesh.side_neighbors[:, j])[0]
            for t in bad[:5]:
                problems.append(
                    f"tet {t}: neighbor slot {j} violates sorted-slot order"
                )
    if mesh.layout == TET16:
        for j in range(3):
            expect = mesh.side_neighbors[:, j] ^ mesh.side_neighbors[:, 3]
            bad = np.nonzero(rec[f"nx{j}"] != expect)[0]
            for t in bad[:5]:
                problems.append(f"tet {t}: xor link nx{j} mismatch")

    # Mutual adjacency + shared-face checks on the side tables.
    n_tets = mesh.n_tets
    vert_sets = [frozenset(map(int, row)) for row in sv]
    for i in range(n_tets):
        for j in range(4):
            ref = int(mesh.side_neighbors[i, j])
            if is_boundary(ref):
                continue
            shared = vert_sets[i] - {int(sv[i, j])}
            if is_constrained(ref):
                c = ref_payload(ref)
                if c >= mesh.n_constrained:
                    problems.append(f"tet {i}: constrained ref {c} out of range")
                elif set(map(int, mesh.cf_verts[c])) != shared:
                    problems.append(f"tet {i}: constrained face {c} vertex mismatch")
                elif i not in (int(mesh.cf_tets[c, 0]), int(mesh.cf_tets[c, 1])):
                    problems.append(f"tet {i}: constrained face {c} does not list it")
                continue
            other = ref_payload(ref)
            if other >= n_tets:
                problems.append(f"tet {i}: neighbor {other} out of range")
                continue
            if shared - vert_sets[other]:
                problems.append(f"tet {i} / neighbor {other}: face not shared")
            if not any(
                decode_ref(int(mesh.side_neighbors[other, k])) == i for k in range(4)
            ):
                problems.append(f"adjacency not mutual between tets {i} and {other}")

    vols = signed_volumes(mesh.points.astype(np.float64), sv)
    if np.any(vols == 0):
        t = int(np.nonzero(vols == 0)[0][0])
        problems.append(f"tet {t}: degenerate (zero volume) after f32 quantization")

    problems.extend(_xor_walk_closure(mesh))
    if not (0 <= mesh.source_tet < n_tets):
        problems.append(f"source tet {mesh.source_tet} out of range")
    return problems


def _xor_walk_closure(mesh: CompactMesh) -> list[str]:
    problems: list[str] = []
    n = mesh.n_tets
    vx = mesh.records["vx"]
    links = _cross_links(mesh.side_neighbors, mesh.cf_tets)
    known: dict[int, frozenset[int]] = {
        mesh.source_tet: frozenset(map(int, mesh.side_verts[mesh.source_tet]))
    }
    stack = [mesh.source_tet]
    while stack:
        t = stack.pop()
        quad = known[t]
        truth = frozenset(map(int, mesh.side_verts[t]))
        if quad != truth:
            problems.append(f"tet {t}: xor-walk quadruple mismatch")
            continue
        for j in range(4):
            nb = int(links[t, j])
            if nb < 0 or nb in known:
                continue
            shared = quad - {int(mesh.side_verts[t, j])}
            a, b, c = sorted(shared)
            fourth = a ^ b ^ c ^ int(vx[nb])
            known[nb] = shared | {fourth}
            stack.append(nb)
    if len(known) < n:
        problems.append(
            f"xor-walk closure: only {len(known)} of {n} tets reachable from source"
        )
    return problems
