"""Pure-python batch kernels: wavefront-vectorized traversal over numpy.

Fallback backend used when the compiled extension is unavailable. All
float32 operations are written in the same order as the compiled kernels
and the scalar engine, so the three produce bit-identical traversals.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"

_CONSTRAINED = np.int64(1 << 31)
_PAYLOAD = np.int64((1 << 31) - 1)
_BOUNDARY = np.int64((1 << 31) - 1)

_SLOT_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

STATUS_MISS = 0
STATUS_HIT = 1
STATUS_ERROR = 2


def _axes_of(d):
    """Vectorized (min, max, other) axis selection, lowest index on ties."""
    a = np.abs(d)
    mn = np.argmin(a, axis=1)
    r0 = np.array([1, 0, 0])[mn]
    r1 = np.array([2, 2, 1])[mn]
    rows = np.arange(len(d))
    mx = np.where(a[rows, r0] >= a[rows, r1], r0, r1)
    return mn, mx, 3 - mn - mx


def _basis_of(o, d):
    """Per-ray scaled-basis scalars (float32, fixed op order)."""
    rows = np.arange(len(d))
    mn, mx, ot = _axes_of(d)
    d_mx = d[rows, mx]
    d_ot = d[rows, ot]
    umax = -(d_ot / d_mx)
    u = np.zeros_like(d)
    u[rows, ot] = np.float32(1.0)
    u[rows, mx] = umax
    t = np.cross(d, u)
    tmn = t[rows, mn]
    sgn = np.where(tmn > 0, np.float32(1.0), np.float32(-1.0))
    tabs = np.abs(tmn)
    vmax = t[rows, mx] / tabs
    voth = t[rows, ot] / tabs
    omx = o[rows, mx]
    oot = o[rows, ot]
    omn = o[rows, mn]
    pox = umax * omx + oot
    poy = (vmax * omx + voth * oot) + sgn * omn
    return mn, mx, ot, umax, vmax, voth, sgn, pox, poy


def _project(state, pts_rows):
    """Project fetched points (rows already gathered) into the 2-D frame."""
    rows = np.arange(len(pts_rows))
    qmn = pts_rows[rows, state["mn"]]
    qmx = pts_rows[rows, state["mx"]]
    qot = pts_rows[rows, state["ot"]]
    px = (state["umax"] * qmx + qot) - state["pox"]
    py = ((state["vmax"] * qmx + state["voth"] * qot) + state["sgn"] * qmn) - state[
        "poy"
    ]
    return px, py


def _init_state(mesh, o32, d32, start):
    """Shared initialization: basis, projected start quad, first exit face."""
    n = len(start)
    rows = np.arange(n)
    o = np.asarray(o32, dtype=np.float32)
    d = np.asarray(d32, dtype=np.float32)
    mn, mx, ot, umax, vmax, voth, sgn, pox, poy = _basis_of(o, d)
    state = {
        "mn": mn,
        "mx": mx,
        "ot": ot,
        "umax": umax,
        "vmax": vmax,
        "voth": voth,
        "sgn": sgn,
        "pox": pox,
        "poy": poy,
    }
    pts = mesh.points
    quad = mesh.side_verts[start].astype(np.int64)  # (n, 4)
    q2 = np.empty((n, 4, 2), dtype=np.float32)
    for j in range(4):
        px, py = _project(state, pts[quad[:, j]])
        q2[:, j, 0] = px
        q2[:, j, 1] = py

    p64 = pts.astype(np.float64)[quad]  # (n, 4, 3)
    rho = np.einsum(
        "ij,ij->i",
        p64[:, 1] - p64[:, 0],
        np.cross(p64[:, 2] - p64[:, 0], p64[:, 3] - p64[:, 0]),
    )
    rho_pos = rho > 0

    tri_pts = np.empty((n, 4, 3, 2), dtype=np.float32)
    tri_ids = np.empty((n, 4, 3), dtype=np.int64)
    mins = np.empty((n, 4), dtype=np.float32)
    passes = np.zeros((n, 4), dtype=bool)
    for j in range(4):
        a, b, c = _SLOT_FACES[j]
        swap = (j % 2 == 0) != rho_pos  # outward winding needs b<->c
        ib = np.where(swap, c, b)
        ic = np.where(swap, b, c)
        A = q2[rows, a]
        B = q2[rows, ib]
        C = q2[rows, ic]
        d0 = A[:, 0] * B[:, 1] - A[:, 1] * B[:, 0]
        d1 = B[:, 0] * C[:, 1] - B[:, 1] * C[:, 0]
        d2 = C[:, 0] * A[:, 1] - C[:, 1] * A[:, 0]
        m = np.minimum(np.minimum(d0, d1), d2)
        mins[:, j] = m
        passes[:, j] = (m >= 0) & ((d0 > 0) | (d1 > 0) | (d2 > 0))
        tri_pts[:, j, 0] = A
        tri_pts[:, j, 1] = B
        tri_pts[:, j, 2] = C
        tri_ids[:, j, 0] = quad[:, a]
        tri_ids[:, j, 1] = quad[rows, ib]
        tri_ids[:, j, 2] = quad[rows, ic]

    j_sel = np.where(passes.any(axis=1), np.argmax(passes, axis=1), np.argmax(mins, axis=1))
    state["idx"] = tri_ids[rows, j_sel]  # (n, 3)
    state["p"] = tri_pts[rows, j_sel]  # (n, 3, 2)
    state["ref"] = mesh.side_neighbors[start, j_sel].astype(np.int64)
    state["cur"] = start.astype(np.int64)
    state["prev"] = start.astype(np.int64)
    return state


def _advance(mesh, recs, layout_code, state, nxt):
    """One traversal step into tets `nxt` for every active lane."""
    rows = np.arange(len(nxt))
    idx = state["idx"]
    p = state["p"]
    vx_col = 3 if layout_code == 32 else 0
    vx = recs[nxt, vx_col].astype(np.int64)
    i3 = idx[:, 0] ^ idx[:, 1] ^ idx[:, 2] ^ vx
    px, py = _project(state, mesh.points[i3])

    p0x, p0y = p[:, 0, 0], p[:, 0, 1]
    p1x, p1y = p[:, 1, 0], p[:, 1, 1]
    p2x, p2y = p[:, 2, 0], p[:, 2, 1]
    c1 = px * p0y < py * p0x
    c2 = px * p2y >= py * p2x
    c3 = px * p1y < py * p1x
    f = np.where(c1, np.where(c2, 1, 0), np.where(c3, 2, 0))
    idxf = idx[rows, f]

    if layout_code == 32:
        nref = recs[nxt, 7].astype(np.int64)
        for i in range(3):
            nref = np.where(recs[nxt, i] == idxf, recs[nxt, 4 + i].astype(np.int64), nref)
    elif layout_code == 20:
        rank = (
            (idx[:, 0] < idxf).astype(np.int64)
            + (idx[:, 1] < idxf)
            + (idx[:, 2] < idxf)
            + (i3 < idxf)
        )
        nref = recs[nxt, 1 + rank].astype(np.int64)
    else:
        order_a = (
            (idx[:, 0] < i3).astype(np.int64) + (idx[:, 1] < i3) + (idx[:, 2] < i3)
        )
        order_b = (
            (idx[:, 0] < idxf).astype(np.int64)
            + (idx[:, 1] < idxf)
            + (idx[:, 2] < idxf)
            + (i3 < idxf)
        )
        nref = state["prev"].copy()
        nxa = recs[nxt, 1 + np.minimum(order_a, 2)].astype(np.int64)
        nref = np.where(order_a != 3, nref ^ nxa, nref)
        nxb = recs[nxt, 1 + np.minimum(order_b, 2)].astype(np.int64)
        nref = np.where(order_b != 3, nref ^ nxb, nref)

    idx[rows, f] = i3
    p[rows, f, 0] = px
    p[rows, f, 1] = py
    state["prev"] = nxt.astype(np.int64)
    state["cur"] = nxt.astype(np.int64)
    state["ref"] = nref


def _compact(state, keep):
    for key in ("mn", "mx", "ot", "umax", "vmax", "voth", "sgn", "pox", "poy",
                "idx", "p", "ref", "cur", "prev"):
        state[key] = state[key][keep]


def _layout_code(mesh) -> int:
    return {"tet32": 32, "tet20": 20, "tet16": 16}[mesh.layout]


def cast_rays(mesh, o32, d32, start, visits_sink=None):
    """Batch traversal. Returns (status, cf, tet, visited) arrays.

    status: 0 miss, 1 hit (cf = constrained face index, tet = incident
    tetrahedron), 2 cycle-guard error. visits_sink, when given, is a list
    collecting (original_ray_indices, entered_tets) per step for visit
    reconstruction.
    """
    start = np.asarray(start, dtype=np.int64)
    n = len(start)
    status = np.full(n, STATUS_MISS, dtype=np.uint8)
    cf_out = np.full(n, -1, dtype=np.int32)
    tet_out = np.full(n, -1, dtype=np.int32)
    visited = np.ones(n, dtype=np.int32)
    if n == 0:
        return status, cf_out, tet_out, visited

    state = _init_state(mesh, o32, d32, start)
    alive = np.arange(n)
    recs = mesh.records_u32()
    code = _layout_code(mesh)
    n_tets = mesh.n_tets
    if visits_sink is not None:
        visits_sink.append((alive.copy(), start.copy()))

    while len(alive):
        ref = state["ref"]
        constrained = (ref & _CONSTRAINED) != 0
        boundary = ref == _BOUNDARY
        done = constrained | boundary
        if done.any():
            orig = alive[done]
            hit = constrained[done]
            status[orig] = np.where(hit, STATUS_HIT, STATUS_MISS).astype(np.uint8)
            cf_out[orig[hit]] = (ref[done][hit] & _PAYLOAD).astype(np.int32)
            tet_out[orig] = state["cur"][done].astype(np.int32)
            keep = ~done
            alive = alive[keep]
            _compact(state, keep)
            if not len(alive):
                break
        nxt = state["ref"] & _PAYLOAD
        _advance(mesh, recs, code, state, nxt)
        visited[alive] += 1
        if visits_sink is not None:
            visits_sink.append((alive.copy(), nxt.copy()))
        over = visited[alive] > n_tets
        if over.any():
            status[alive[over]] = STATUS_ERROR
            tet_out[alive[over]] = state["cur"][over].astype(np.int32)
            alive = alive[~over]
            _compact(state, ~over)
    return status, cf_out, tet_out, visited


def locate_points(mesh, q, hints):
    """Batch point location. Returns (tet, visited); tet -1 = outside hull."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    hints = np.asarray(hints, dtype=np.int64)
    n = len(q)
    out = np.full(n, -1, dtype=np.int32)
    visited = np.ones(n, dtype=np.int32)
    if n == 0:
        return out, visited
    pts64 = mesh.points.astype(np.float64)

    inside = _contains(pts64, mesh.side_verts, hints, q)
    out[inside] = hints[inside].astype(np.int32)
    todo = np.nonzero(~inside)[0]
    if not len(todo):
        return out, visited

    centroid = pts64[mesh.side_verts[hints[todo]]].mean(axis=1)
    d = q[todo] - centroid
    moving = np.any(d != 0.0, axis=1)
    todo = todo[moving]
    if not len(todo):
        return out, visited
    o32 = centroid[moving].astype(np.float32)
    d32 = d[moving].astype(np.float32)

    state = _init_state(mesh, o32, d32, hints[todo])
    alive = np.arange(len(todo))
    recs = mesh.records_u32()
    code = _layout_code(mesh)
    n_tets = mesh.n_tets
    cf_tets = mesh.cf_tets

    while len(alive):
        ref = state["ref"]
        boundary = ref == _BOUNDARY
        constrained = (ref & _CONSTRAINED) != 0
        nxt = np.where(constrained, 0, ref & _PAYLOAD)
        entry = state["cur"].copy()
        if constrained.any():
            cfs = (ref & _PAYLOAD)[constrained]
            a = cf_tets[cfs, 0].astype(np.int64)
            b = cf_tets[cfs, 1].astype(np.int64)
            other = np.where(a == state["cur"][constrained], b, a)
            nxt[constrained] = other
            entry[constrained] = _CONSTRAINED | cfs
        dead = boundary | (nxt < 0)
        if dead.any():
            keep = ~dead
            alive = alive[keep]
            _compact(state, keep)
            nxt = nxt[keep]
            entry = entry[keep]
            if not len(alive):
                break
        state["prev"] = entry
        _advance(mesh, recs, code, state, nxt)
        orig = todo[alive]
        visited[orig] += 1
        found = _contains(pts64, mesh.side_verts, nxt, q[orig])
        over = visited[orig] > n_tets
        stop = found | over
        if stop.any():
            out[orig[found]] = nxt[found].astype(np.int32)
            keep = ~stop
            alive = alive[keep]
            _compact(state, keep)
    return out, visited


def shadow_rays(mesh, p, light, p_tet, light_tet, eps=1e-4):
    """Batch occlusion tests along segments to the light.

    Returns (occluded bool array, visited counts).
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    light = np.asarray(light, dtype=np.float64).reshape(-1, 3)
    p_tet = np.asarray(p_tet, dtype=np.int64)
    light_tet = np.broadcast_to(np.asarray(light_tet, dtype=np.int64), (len(p),))
    n = len(p)
    occ = np.zeros(n, dtype=bool)
    visited = np.ones(n, dtype=np.int32)
    if n == 0:
        return occ, visited

    todo = np.nonzero(p_tet != light_tet)[0]
    if not len(todo):
        return occ, visited
    seg = light[todo] - p[todo]
    o32 = p[todo].astype(np.float32)
    d32 = seg.astype(np.float32)
    state = _init_state(mesh, o32, d32, p_tet[todo])
    alive = np.arange(len(todo))
    recs = mesh.records_u32()
    code = _layout_code(mesh)
    n_tets = mesh.n_tets
    cf_tets = mesh.cf_tets
    cf_triangle = mesh.cf_triangle
    tris = mesh.triangle_coords()

    while len(alive):
        orig = todo[alive]
        ref = state["ref"]
        boundary = ref == _BOUNDARY
        constrained = (ref & _CONSTRAINED) != 0
        nxt = np.where(constrained, 0, ref & _PAYLOAD)
        entry = state["cur"].copy()
        dead = boundary.copy()
        if constrained.any():
            rows = np.nonzero(constrained)[0]
            cfs = (ref & _PAYLOAD)[rows]
            # t from the f32-cast segment, as every backend computes it
            t = _mt_t(
                o32[alive[rows]].astype(np.float64),
                d32[alive[rows]].astype(np.float64),
                tris[cf_triangle[cfs]],
            )
            beyond = t >= 1.0 - eps
            blocking = (~beyond) & (t > eps)
            occ[orig[rows[blocking]]] = True
            dead[rows[beyond | blocking]] = True
            crossing = ~(beyond | blocking)
            crows = rows[crossing]
            ccfs = cfs[crossing]
            a = cf_tets[ccfs, 0].astype(np.int64)
            b = cf_tets[ccfs, 1].astype(np.int64)
            other = np.where(a == state["cur"][crows], b, a)
            nxt[crows] = other
            entry[crows] = _CONSTRAINED | ccfs
            dead[crows[other < 0]] = True
        reached = nxt == light_tet[orig]
        dead |= reached & ~dead
        if dead.any():
            keep = ~dead
            alive = alive[keep]
            _compact(state, keep)
            nxt = nxt[keep]
            entry = entry[keep]
            if not len(alive):
                break
        state["prev"] = entry
        _advance(mesh, recs, code, state, nxt)
        orig = todo[alive]
        visited[orig] += 1
        over = visited[orig] > n_tets
        if over.any():
            alive = alive[~over]
            _compact(state, ~over)
    return occ, visited


def _contains(pts64, side_verts, tets, q, rel_eps=1e-10):
    """Vectorized point-in-tet test against f64-cast mesh points."""
    p = pts64[side_verts[tets]]  # (n, 4, 3)
    vol = np.einsum(
        "ij,ij->i",
        p[:, 1] - p[:, 0],
        np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]),
    )
    s = np.where(vol > 0, 1.0, -1.0)
    eps = rel_eps * np.abs(vol) + 1e-300
    ok = np.ones(len(q), dtype=bool)
    for j in range(4):
        sub = p.copy()
        sub[:, j] = q
        d = np.einsum(
            "ij,ij->i",
            sub[:, 1] - sub[:, 0],
            np.cross(sub[:, 2] - sub[:, 0], sub[:, 3] - sub[:, 0]),
        )
        ok &= s * d >= -eps
    return ok


def _mt_t(o, d, tri):
    """Per-row ray/triangle parameter (float64); misses become +inf."""
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    pv = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pv)
    tv = o - tri[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(det != 0.0, 1.0 / det, 0.0)
        t = np.einsum("ij,ij->i", e2, np.cross(tv, e1)) * inv
    # parallel rays: plane distance (matches the scalar fallback)
    par = det == 0.0
    if par.any():
        nrm = np.cross(e1[par], e2[par])
        denom = np.einsum("ij,ij->i", nrm, d[par])
        num = np.einsum("ij,ij->i", nrm, tri[par, 0] - o[par])
        with np.errstate(divide="ignore", invalid="ignore"):
            tp = np.where(denom != 0.0, num / denom, 0.0)
        t[par] = tp
    return t
