"""Ray traversal over compact tetrahedral meshes (scalar engine).

This is the readable per-ray implementation of the traversal loops for the
three record layouts. It is the reference the batch kernels (compiled and
vectorized fallback) are parity-tested against, and the path the counting
instrumentation runs on. Bulk work should go through tetray.batch.

Per step the loop fetches exactly one point: the fourth vertex of the next
tetrahedron is recovered from the xor-sum and the three shared vertex ids,
projected into the ray's 2-D basis, and the exit face falls out of at most
two determinant sign tests.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .geometry import Ray, ScaledBasis, Vec2, Vec3, build_scaled_basis, project_point
from .tetmesh import (
    BOUNDARY_REF,
    NO_TET,
    TET16,
    TET20,
    TET32,
    CompactMesh,
    face_ref,
    is_boundary,
    is_constrained,
    ref_payload,
)

REAL = np.float64 if os.environ.get("TETRAY_FP64") else np.float32

SHADOW_EPS = 1e-4


class InvalidStartError(Exception):
    """The ray origin is not inside the claimed start tetrahedron."""


class CorruptMeshError(Exception):
    """Traversal exceeded the tetrahedron count (impossible on valid meshes)."""


@dataclass
class HitRecord:
    """A ray terminated on a constrained face.

    tet_front is the tetrahedron the ray was inside when it hit (the
    incident side); tet_back the one behind the face, NO_TET on the hull.
    """

    cf_index: int
    triangle_id: int
    t: float
    hit_point: Vec3
    tet_front: int
    tet_back: int
    visited: int


@dataclass
class Miss:
    """The ray left the mesh through an unconstrained boundary face."""

    visited: int


@dataclass
class TraversalState:
    """Rolling traversal window: the shared face triple plus the new vertex.

    (p[0], p[1], p[2]) is the current exit face, counter-clockwise in the
    projected frame and containing the 2-D origin; idx are the matching
    vertex ids. idx3/p3 hold the most recently fetched fourth vertex.
    """

    basis: ScaledBasis
    idx: list
    p: list
    idx3: int
    p3: Vec2
    tet_idx: int
    prev_ref: int
    next_ref: int
    visited: int


def get_exit_face(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2) -> int:
    """Exit face index given the projected face triple and the new point.

    Index f means the exit face is opposite p_f. The determinant signs are
    evaluated as cross-comparisons (a.x*b.y < a.y*b.x), so the cost is four
    multiplications and two comparisons and the tie conventions are exactly
    the </>= of the selection procedure.
    """
    if p3.x * p0.y < p3.y * p0.x:  # det(p3, p0) < 0
        if p3.x * p2.y >= p3.y * p2.x:  # det(p3, p2) >= 0
            return 1
        return 0
    if p3.x * p1.y < p3.y * p1.x:  # det(p3, p1) < 0
        return 2
    return 0


# Face opposite slot j of an ascending quadruple, in slot order; the slot
# order winding is outward for even j on a positively oriented quadruple
# and flips with either parity.
_SLOT_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def _orient_sign(points: np.ndarray, quad) -> float:
    p = points[np.asarray(quad)].astype(np.float64)
    a, b, c = p[1] - p[0], p[2] - p[0], p[3] - p[0]
    return float(a @ np.cross(b, c))


def _fetch_vec3(points, i: int) -> Vec3:
    row = points[i]
    return Vec3(row[0], row[1], row[2])


def _select_exit_2d(quad, q2, rho_positive: bool):
    """(slot j, oriented point triple, id triple) of the face the ray exits.

    The exit face is the one whose outward winding projects counter-
    clockwise (front-facing) with the 2-D origin inside; containment and
    orientation collapse into three origin-edge determinants per face.
    """
    best_j, best_m, best_tri, best_ids = -1, None, None, None
    for j in range(4):
        a, b, c = _SLOT_FACES[j]
        if (j % 2 == 0) != rho_positive:
            b, c = c, b
        A, B, C = q2[a], q2[b], q2[c]
        d0 = A.x * B.y - A.y * B.x
        d1 = B.x * C.y - B.y * C.x
        d2 = C.x * A.y - C.y * A.x
        m = min(d0, d1, d2)
        if m >= 0 and (d0 > 0 or d1 > 0 or d2 > 0):
            return j, (A, B, C), (quad[a], quad[b], quad[c])
        if best_m is None or m > best_m:
            best_j, best_m = j, m
            best_tri, best_ids = (A, B, C), (quad[a], quad[b], quad[c])
    # Degenerate projection (grazing/tied); fall back to the least-violated
    # face so traversal still terminates deterministically.
    return best_j, best_tri, best_ids


def _tet_contains(mesh, tet: int, q, rel_eps: float = 1e-10) -> bool:
    p = mesh.points[mesh.side_verts[tet]].astype(np.float64)
    qq = np.asarray([q[0], q[1], q[2]], dtype=np.float64)
    vol = float((p[1] - p[0]) @ np.cross(p[2] - p[0], p[3] - p[0]))
    s = 1.0 if vol > 0 else -1.0
    eps = rel_eps * abs(vol) + 1e-300
    for j in range(4):
        sub = p.copy()
        sub[j] = qq
        d = float((sub[1] - sub[0]) @ np.cross(sub[2] - sub[0], sub[3] - sub[0]))
        if s * d < -eps:
            return False
    return True


def _coerce_ray(ray: Ray) -> Ray:
    o, d = ray.origin, ray.direction
    return Ray(
        Vec3(REAL(o.x), REAL(o.y), REAL(o.z)),
        Vec3(REAL(d.x), REAL(d.y), REAL(d.z)),
    )


def init_traversal(
    ray: Ray, start_tet: int, mesh: CompactMesh, *, check_start: bool = True
) -> TraversalState:
    """Project the start tetrahedron and select its exit face.

    All four vertices are read from the cold side table (the only time a
    full quadruple is fetched); afterwards the loop fetches one point per
    tetrahedron. Raises InvalidStartError when the origin is not inside
    start_tet (checked in 3-D since the projection cannot see along the
    ray axis).
    """
    if check_start and not _tet_contains(mesh, start_tet, ray.origin):
        raise InvalidStartError(f"ray origin not inside tet {start_tet}")
    ray = _coerce_ray(ray)
    basis = build_scaled_basis(ray)
    quad = [int(v) for v in mesh.side_verts[start_tet]]
    pts = mesh.points
    q2 = [project_point(basis, _fetch_vec3(pts, i)) for i in quad]
    rho = _orient_sign(pts, quad)
    j, tri, ids = _select_exit_2d(quad, q2, rho > 0)
    state = TraversalState(
        basis=basis,
        idx=list(ids),
        p=list(tri),
        idx3=quad[j],
        p3=q2[j],
        tet_idx=start_tet,
        prev_ref=start_tet,
        next_ref=int(mesh.side_neighbors[start_tet, j]),
        visited=1,
    )
    return state


def _rank(i0: int, i1: int, i2: int, i3: int, x: int) -> int:
    """Sorted position of x among the four vertex ids."""
    return (i0 < x) + (i1 < x) + (i2 < x) + (i3 < x)


def next_tet_16(tet_idx: int, prev_ref: int, order_a: int, order_b: int, mesh) -> int:
    """Next neighbor reference from the xor-compressed Tet16 links.

    prev_ref must be the raw reference stored across sorted slot order_a
    (for ray connectivity that is the previous tetrahedron index);
    order_b is the exit slot.
    """
    rec = mesh.records[tet_idx]
    nref = int(prev_ref)
    if order_a != 3:
        nref ^= int(rec[f"nx{order_a}"])
    if order_b != 3:
        nref ^= int(rec[f"nx{order_b}"])
    return nref


def _step(state: TraversalState, mesh, nxt: int, entry_ref: int) -> int:
    """Advance the state into tetrahedron nxt; returns the new exit ref."""
    rec = mesh.records[nxt]
    i0, i1, i2 = state.idx
    i3 = i0 ^ i1 ^ i2 ^ int(rec["vx"])
    p3 = project_point(state.basis, _fetch_vec3(mesh.points, i3))
    f = get_exit_face(state.p[0], state.p[1], state.p[2], p3)
    idx_exit = state.idx[f]

    layout = mesh.layout
    if layout == TET32:
        nref = int(rec["n3"])
        for i in range(3):
            if int(rec[f"v{i}"]) == idx_exit:
                nref = int(rec[f"n{i}"])
    elif layout == TET20:
        nref = int(rec[f"n{_rank(i0, i1, i2, i3, idx_exit)}"])
    else:
        order_a = _rank(i0, i1, i2, i3, i3)
        order_b = _rank(i0, i1, i2, i3, idx_exit)
        nref = next_tet_16(nxt, entry_ref, order_a, order_b, mesh)

    state.idx[f] = i3
    state.p[f] = p3
    state.idx3 = i3
    state.p3 = p3
    state.prev_ref = nxt
    state.tet_idx = nxt
    state.next_ref = nref
    state.visited += 1
    return nref


def _check_ccw(state: TraversalState) -> None:
    p0, p1, p2 = state.p
    w = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x)
    if not w > 0:
        raise CorruptMeshError(f"CCW invariant violated at tet {state.tet_idx}")
    for a, b in ((p0, p1), (p1, p2), (p2, p0)):
        if a.x * b.y - a.y * b.x < 0:
            raise CorruptMeshError(
                f"origin left the exit face at tet {state.tet_idx}"
            )


def _hit_from(state_visited, mesh, ref, cur, ray32) -> HitRecord:
    cf = ref_payload(ref)
    tri_id = int(mesh.cf_triangle[cf])
    tri = mesh.soup.vertices[mesh.soup.triangles[tri_id]]
    t = _ray_triangle_t(ray32, tri)
    front = cur
    a, b = int(mesh.cf_tets[cf, 0]), int(mesh.cf_tets[cf, 1])
    back = b if a == cur else a
    o, d = ray32.origin, ray32.direction
    hp = Vec3(
        float(o.x) + t * float(d.x),
        float(o.y) + t * float(d.y),
        float(o.z) + t * float(d.z),
    )
    return HitRecord(
        cf_index=cf,
        triangle_id=tri_id,
        t=t,
        hit_point=hp,
        tet_front=front,
        tet_back=back,
        visited=state_visited,
    )


def _ray_triangle_t(ray: Ray, tri) -> float:
    """Hit parameter against a scene triangle (float64).

    The traversal decides *which* face is hit; this only recovers t, so a
    plane-intersection fallback covers the degenerate cases the walk can
    reach that the barycentric form rejects.
    """
    ax, ay, az = float(tri[0][0]), float(tri[0][1]), float(tri[0][2])
    e1 = (float(tri[1][0]) - ax, float(tri[1][1]) - ay, float(tri[1][2]) - az)
    e2 = (float(tri[2][0]) - ax, float(tri[2][1]) - ay, float(tri[2][2]) - az)
    o = (float(ray.origin.x), float(ray.origin.y), float(ray.origin.z))
    d = (float(ray.direction.x), float(ray.direction.y), float(ray.direction.z))
    px = d[1] * e2[2] - d[2] * e2[1]
    py = d[2] * e2[0] - d[0] * e2[2]
    pz = d[0] * e2[1] - d[1] * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if det != 0.0:
        inv = 1.0 / det
        tv = (o[0] - ax, o[1] - ay, o[2] - az)
        qx = tv[1] * e1[2] - tv[2] * e1[1]
        qy = tv[2] * e1[0] - tv[0] * e1[2]
        qz = tv[0] * e1[1] - tv[1] * e1[0]
        return (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    # Ray parallel to the triangle plane: distance via the plane normal.
    nx = e1[1] * e2[2] - e1[2] * e2[1]
    ny = e1[2] * e2[0] - e1[0] * e2[2]
    nz = e1[0] * e2[1] - e1[1] * e2[0]
    denom = nx * d[0] + ny * d[1] + nz * d[2]
    if denom == 0.0:
        return 0.0
    return (nx * (ax - o[0]) + ny * (ay - o[1]) + nz * (az - o[2])) / denom


def cast_ray(
    ray: Ray,
    start_tet: int,
    mesh: CompactMesh,
    *,
    check_start: bool = False,
    debug: bool = False,
    visits: list | None = None,
) -> HitRecord | Miss:
    """Walk the mesh from start_tet until scene geometry or the boundary.

    The caller locates the start tetrahedron (see locate_point); any
    tetrahedron the forward ray passes through works. With debug=True the
    CCW/containment invariant is verified after every step. `visits`
    collects the visited tetrahedron sequence when a list is passed.
    """
    state = init_traversal(ray, start_tet, mesh, check_start=check_start)
    ray32 = _coerce_ray(ray)
    if visits is not None:
        visits.append(start_tet)
    if debug:
        _check_ccw(state)
    n_tets = mesh.n_tets
    ref = state.next_ref
    cur = start_tet
    while True:
        if is_boundary(ref):
            return Miss(visited=state.visited)
        if is_constrained(ref):
            return _hit_from(state.visited, mesh, ref, cur, ray32)
        nxt = ref_payload(ref)
        ref = _step(state, mesh, nxt, cur)
        cur = nxt
        if visits is not None:
            visits.append(nxt)
        if debug:
            _check_ccw(state)
        if state.visited > n_tets:
            raise CorruptMeshError("traversal visited more tets than the mesh has")


def locate_point(q, mesh: CompactMesh, hint_tet: int | None = None) -> int | None:
    """Tetrahedron containing q, walking from hint_tet; None outside hull.

    Uses the same projected traversal as ray casting but crosses
    constrained faces (point location ignores occluders) and stops when
    the current tetrahedron contains q.
    """
    hint = mesh.source_tet if hint_tet is None else int(hint_tet)
    if _tet_contains(mesh, hint, q):
        return hint
    pts = mesh.points[mesh.side_verts[hint]].astype(np.float64)
    c = pts.mean(axis=0)
    qv = np.asarray([q[0], q[1], q[2]], dtype=np.float64)
    d = qv - c
    if not np.any(d):
        return None
    ray = Ray(Vec3(*c), Vec3(*d))
    state = init_traversal(ray, hint, mesh, check_start=False)
    ref = state.next_ref
    n_tets = mesh.n_tets
    while True:
        if is_boundary(ref):
            return None
        if is_constrained(ref):
            cf = ref_payload(ref)
            a, b = int(mesh.cf_tets[cf, 0]), int(mesh.cf_tets[cf, 1])
            nxt = b if a == state.tet_idx else a
            if nxt == NO_TET:
                return None
            entry = face_ref(cf)
        else:
            nxt = ref_payload(ref)
            entry = state.tet_idx
        ref = _step(state, mesh, nxt, entry)
        if _tet_contains(mesh, nxt, q):
            return nxt
        if state.visited > n_tets:
            raise CorruptMeshError("point location visited more tets than the mesh has")


def cast_shadow_ray(
    from_point,
    from_tet: int,
    light_point,
    light_tet: int,
    mesh: CompactMesh,
    *,
    eps: float = SHADOW_EPS,
) -> bool:
    """True when scene geometry blocks the open segment to the light.

    The walk terminates as soon as it reaches the tetrahedron containing
    the light; constrained faces crossed outside (eps, 1-eps) of the
    segment parameter do not occlude and are stepped through.
    """
    if from_tet == light_tet:
        return False
    fp = np.asarray([from_point[0], from_point[1], from_point[2]], dtype=np.float64)
    lp = np.asarray([light_point[0], light_point[1], light_point[2]], dtype=np.float64)
    ray = Ray(Vec3(*fp), Vec3(*(lp - fp)))
    ray32 = _coerce_ray(ray)
    state = init_traversal(ray, from_tet, mesh, check_start=False)
    ref = state.next_ref
    n_tets = mesh.n_tets
    while True:
        if is_boundary(ref):
            return False
        if is_constrained(ref):
            cf = ref_payload(ref)
            tri_id = int(mesh.cf_triangle[cf])
            tri = mesh.soup.vertices[mesh.soup.triangles[tri_id]]
            t = _ray_triangle_t(ray32, tri)
            if t >= 1.0 - eps:
                return False  # at or beyond the light; nothing closer remains
            if t > eps:
                return True
            a, b = int(mesh.cf_tets[cf, 0]), int(mesh.cf_tets[cf, 1])
            nxt = b if a == state.tet_idx else a
            if nxt == NO_TET:
                return False
            entry = face_ref(cf)
        else:
            nxt = ref_payload(ref)
            entry = state.tet_idx
        if nxt == light_tet:
            return False
        ref = _step(state, mesh, nxt, entry)
        if state.visited > n_tets:
            raise CorruptMeshError("shadow walk visited more tets than the mesh has")


def spawn_secondary(hit: HitRecord, kind: str, direction: Vec3):
    """Continuation ray for a hit: (Ray, start_tet), or None on the hull.

    Reflections continue from the incident-side tetrahedron, refractions
    from the one behind the face; starting in the correct tetrahedron (not
    epsilon-offsetting) is what prevents re-intersecting the same face.
    """
    if kind == "reflection":
        start = hit.tet_front
    elif kind == "refraction":
        start = hit.tet_back
    else:
        raise ValueError(f"unknown secondary kind {kind!r}")
    if start == NO_TET:
        return None
    return Ray(hit.hit_point, direction), int(start)


def sctp_exit_face(ray: Ray, verts, entry_face: int | None = None) -> int:
    """Exit face via scalar-triple-product sign tests (baseline method).

    verts are the four tetrahedron vertices; the returned index is the
    face opposite verts[j]. Cross-validation oracle and benchmark
    baseline, not a hot path.
    """
    p = np.asarray([[v[0], v[1], v[2]] for v in verts], dtype=np.float64)
    o = np.asarray([ray.origin.x, ray.origin.y, ray.origin.z], dtype=np.float64)
    d = np.asarray([ray.direction.x, ray.direction.y, ray.direction.z], dtype=np.float64)
    rho = float((p[1] - p[0]) @ np.cross(p[2] - p[0], p[3] - p[0]))
    best_j, best_m = -1, -np.inf
    for j in range(4):
        if j == entry_face:
            continue
        a, b, c = _SLOT_FACES[j]
        if (j % 2 == 0) != (rho > 0):
            b, c = c, b
        A, B, C = p[a] - o, p[b] - o, p[c] - o
        s0 = float(d @ np.cross(A, B))
        s1 = float(d @ np.cross(B, C))
        s2 = float(d @ np.cross(C, A))
        m = min(s0, s1, s2)
        if m >= 0 and max(s0, s1, s2) > 0:
            return j
        if m > best_m:
            best_j, best_m = j, m
    return best_j


def first_exit_face(ray: Ray, verts) -> int:
    """Exit face of a free-standing tetrahedron under the 2-D projection.

    Same selection as traversal initialization, for a tetrahedron given by
    its four vertices; returns the slot index opposite the exit face.
    """
    ray = _coerce_ray(ray)
    basis = build_scaled_basis(ray)
    p = [Vec3(float(v[0]), float(v[1]), float(v[2])) for v in verts]
    q2 = [project_point(basis, v) for v in p]
    pp = np.asarray([[v.x, v.y, v.z] for v in p], dtype=np.float64)
    rho = float((pp[1] - pp[0]) @ np.cross(pp[2] - pp[0], pp[3] - pp[0]))
    j, _, _ = _select_exit_2d([0, 1, 2, 3], q2, rho > 0)
    return j


def hull_faces(mesh: CompactMesh) -> list[tuple[int, int]]:
    """(tet, slot) pairs of boundary faces (sentinel or hull-backed cf)."""
    out = []
    for t in range(mesh.n_tets):
        for j in range(4):
            ref = int(mesh.side_neighbors[t, j])
            if is_boundary(ref):
                out.append((t, j))
            elif is_constrained(ref):
                cf = ref_payload(ref)
                if int(mesh.cf_tets[cf, 1]) == NO_TET and int(mesh.cf_tets[cf, 0]) == t:
                    out.append((t, j))
    return out


def cast_ray_auto(ray: Ray, mesh: CompactMesh) -> HitRecord | Miss:
    """Cast without a start tetrahedron: locate, or clip to the hull.

    Origins outside the hull are handled by intersecting the boundary
    faces brute-force (initialization cost only) and starting the walk in
    the entry tetrahedron; an entry through a constrained hull face is an
    immediate hit.
    """
    start = locate_point(ray.origin, mesh)
    if start is not None:
        return cast_ray(ray, start, mesh)
    ray32 = _coerce_ray(ray)
    best = None
    for t, j in hull_faces(mesh):
        ids = [int(mesh.side_verts[t, k]) for k in range(4) if k != j]
        tri = mesh.points[ids].astype(np.float64)
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        o = np.asarray([ray32.origin.x, ray32.origin.y, ray32.origin.z], dtype=np.float64)
        d = np.asarray(
            [ray32.direction.x, ray32.direction.y, ray32.direction.z], dtype=np.float64
        )
        pv = np.cross(d, e2)
        det = float(e1 @ pv)
        if det == 0.0:
            continue
        inv = 1.0 / det
        tv = o - tri[0]
        u = float(tv @ pv) * inv
        qv = np.cross(tv, e1)
        v = float(d @ qv) * inv
        tt = float(e2 @ qv) * inv
        if u < 0 or v < 0 or u + v > 1 or tt < 0:
            continue
        if best is None or tt < best[0]:
            best = (tt, t, j)
    if best is None:
        return Miss(visited=0)
    _, t, j = best
    ref = int(mesh.side_neighbors[t, j])
    if is_constrained(ref):
        hit = _hit_from(0, mesh, ref, NO_TET, ray32)
        hit.tet_back = t  # entering from outside: the mesh side is behind
        hit.tet_front = NO_TET
        return hit
    return cast_ray(ray, t, mesh)
