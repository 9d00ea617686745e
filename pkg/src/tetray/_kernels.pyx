# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batch kernels: per-ray tetrahedral traversal in C float32.

Every float32 operation is written in the same order as the pure-python
fallback (tetray._kernels_py) and the scalar engine, and the module is
compiled with -ffp-contract=off, so all backends produce bit-identical
traversals.
"""

import numpy as np

from libc.math cimport fabs, fabsf
from libc.stdint cimport int32_t, int64_t, uint8_t, uint32_t

BACKEND_NAME = "compiled"

STATUS_MISS = 0
STATUS_HIT = 1
STATUS_ERROR = 2

cdef uint8_t C_MISS = 0
cdef uint8_t C_HIT = 1
cdef uint8_t C_ERROR = 2

cdef int64_t CONSTRAINED = <int64_t>1 << 31
cdef int64_t PAYLOAD = CONSTRAINED - 1
cdef int64_t BOUNDARY = CONSTRAINED - 1


cdef struct Basis:
    int mn
    int mx
    int ot
    float umax
    float vmax
    float voth
    float sgn
    float pox
    float poy


cdef inline void build_basis(const float* o, const float* d, Basis* b) noexcept nogil:
    cdef float a0 = fabsf(d[0])
    cdef float a1 = fabsf(d[1])
    cdef float a2 = fabsf(d[2])
    cdef int mn = 0
    if a1 < a0:
        mn = 1
        if a2 < a1:
            mn = 2
    elif a2 < a0:
        mn = 2
    cdef int r0, r1, mx
    if mn == 0:
        r0 = 1; r1 = 2
    elif mn == 1:
        r0 = 0; r1 = 2
    else:
        r0 = 0; r1 = 1
    cdef float ar0 = a1 if r0 == 1 else a0
    cdef float ar1 = a2 if r1 == 2 else a1
    mx = r0 if ar0 >= ar1 else r1
    cdef int ot = 3 - mn - mx
    b.mn = mn
    b.mx = mx
    b.ot = ot
    cdef float umax = -(d[ot] / d[mx])
    b.umax = umax
    cdef float u[3]
    u[0] = 0.0
    u[1] = 0.0
    u[2] = 0.0
    u[ot] = 1.0
    u[mx] = umax
    cdef float t[3]
    t[0] = d[1] * u[2] - d[2] * u[1]
    t[1] = d[2] * u[0] - d[0] * u[2]
    t[2] = d[0] * u[1] - d[1] * u[0]
    cdef float tmn = t[mn]
    cdef float sgn = 1.0 if tmn > 0 else -1.0
    cdef float tabs = tmn if tmn > 0 else -tmn
    b.sgn = sgn
    b.vmax = t[mx] / tabs
    b.voth = t[ot] / tabs
    b.pox = umax * o[mx] + o[ot]
    b.poy = (b.vmax * o[mx] + b.voth * o[ot]) + sgn * o[mn]


cdef inline void project(const Basis* b, const float* q, float* out) noexcept nogil:
    out[0] = (b.umax * q[b.mx] + q[b.ot]) - b.pox
    out[1] = ((b.vmax * q[b.mx] + b.voth * q[b.ot]) + b.sgn * q[b.mn]) - b.poy


cdef inline int exit_face(float px, float py, const float* p) noexcept nogil:
    # p holds p0x p0y p1x p1y p2x p2y; determinant signs as cross-compares.
    if px * p[1] < py * p[0]:
        if px * p[5] >= py * p[4]:
            return 1
        return 0
    if px * p[3] < py * p[2]:
        return 2
    return 0


cdef int SLOT_A[4]
cdef int SLOT_B[4]
cdef int SLOT_C[4]
SLOT_A[0] = 1; SLOT_B[0] = 2; SLOT_C[0] = 3
SLOT_A[1] = 0; SLOT_B[1] = 2; SLOT_C[1] = 3
SLOT_A[2] = 0; SLOT_B[2] = 1; SLOT_C[2] = 3
SLOT_A[3] = 0; SLOT_B[3] = 1; SLOT_C[3] = 2


cdef inline int init_ray(
    const float* o,
    const float* d,
    int start,
    const float[:, ::1] pts,
    const int32_t[:, ::1] sv,
    Basis* b,
    int64_t* idx,
    float* p,
) noexcept nogil:
    """Project the start quadruple and select the exit face (slot index)."""
    build_basis(o, d, b)
    cdef int64_t quad[4]
    cdef float q2[8]
    cdef int i
    for i in range(4):
        quad[i] = sv[start, i]
        project(b, &pts[quad[i], 0], &q2[2 * i])

    cdef double e1x = <double>pts[quad[1], 0] - <double>pts[quad[0], 0]
    cdef double e1y = <double>pts[quad[1], 1] - <double>pts[quad[0], 1]
    cdef double e1z = <double>pts[quad[1], 2] - <double>pts[quad[0], 2]
    cdef double e2x = <double>pts[quad[2], 0] - <double>pts[quad[0], 0]
    cdef double e2y = <double>pts[quad[2], 1] - <double>pts[quad[0], 1]
    cdef double e2z = <double>pts[quad[2], 2] - <double>pts[quad[0], 2]
    cdef double e3x = <double>pts[quad[3], 0] - <double>pts[quad[0], 0]
    cdef double e3y = <double>pts[quad[3], 1] - <double>pts[quad[0], 1]
    cdef double e3z = <double>pts[quad[3], 2] - <double>pts[quad[0], 2]
    cdef double rho = (
        e1x * (e2y * e3z - e2z * e3y)
        + e1y * (e2z * e3x - e2x * e3z)
        + e1z * (e2x * e3y - e2y * e3x)
    )
    cdef bint rho_pos = rho > 0

    cdef int j, ia, ib, ic, tmp, sel
    cdef float ax, ay, bx, by, cx, cy, d0, d1, d2, m
    cdef int best_j = -1
    cdef float best_m = -3.4e38
    sel = -1
    for j in range(4):
        ia = SLOT_A[j]
        ib = SLOT_B[j]
        ic = SLOT_C[j]
        if (j % 2 == 0) != rho_pos:
            tmp = ib; ib = ic; ic = tmp
        ax = q2[2 * ia]; ay = q2[2 * ia + 1]
        bx = q2[2 * ib]; by = q2[2 * ib + 1]
        cx = q2[2 * ic]; cy = q2[2 * ic + 1]
        d0 = ax * by - ay * bx
        d1 = bx * cy - by * cx
        d2 = cx * ay - cy * ax
        m = d0
        if d1 < m:
            m = d1
        if d2 < m:
            m = d2
        if m >= 0 and (d0 > 0 or d1 > 0 or d2 > 0):
            sel = j
            break
        if m > best_m:
            best_m = m
            best_j = j
    if sel < 0:
        sel = best_j
        j = sel
        ia = SLOT_A[j]
        ib = SLOT_B[j]
        ic = SLOT_C[j]
        if (j % 2 == 0) != rho_pos:
            tmp = ib; ib = ic; ic = tmp

    idx[0] = quad[ia]
    idx[1] = quad[ib]
    idx[2] = quad[ic]
    p[0] = q2[2 * ia]; p[1] = q2[2 * ia + 1]
    p[2] = q2[2 * ib]; p[3] = q2[2 * ib + 1]
    p[4] = q2[2 * ic]; p[5] = q2[2 * ic + 1]
    return sel


cdef inline int64_t next_ref(
    int code,
    const uint32_t* rec,
    const int64_t* idx,
    int64_t i3,
    int64_t idxf,
    int64_t prev,
) noexcept nogil:
    cdef int i, rank
    cdef int64_t nref
    if code == 32:
        nref = rec[7]
        for i in range(3):
            if rec[i] == <uint32_t>idxf:
                nref = rec[4 + i]
        return nref
    rank = 0
    if idx[0] < idxf:
        rank += 1
    if idx[1] < idxf:
        rank += 1
    if idx[2] < idxf:
        rank += 1
    if i3 < idxf:
        rank += 1
    if code == 20:
        return rec[1 + rank]
    # tet16: rank of i3 (entry slot) has no self-comparison term
    cdef int order_a = 0
    if idx[0] < i3:
        order_a += 1
    if idx[1] < i3:
        order_a += 1
    if idx[2] < i3:
        order_a += 1
    nref = prev
    if order_a != 3:
        nref = nref ^ <int64_t>rec[1 + order_a]
    if rank != 3:
        nref = nref ^ <int64_t>rec[1 + rank]
    return nref


cdef inline int64_t advance(
    int code,
    const float[:, ::1] pts,
    const uint32_t[:, ::1] recs,
    Basis* b,
    int64_t* idx,
    float* p,
    int64_t nxt,
    int64_t prev,
) noexcept nogil:
    """One step into tet nxt; updates idx/p, returns the new exit ref."""
    cdef int vx_col = 3 if code == 32 else 0
    cdef int64_t i3 = idx[0] ^ idx[1] ^ idx[2] ^ <int64_t>recs[nxt, vx_col]
    cdef float q2[2]
    project(b, &pts[i3, 0], q2)
    cdef int f = exit_face(q2[0], q2[1], p)
    cdef int64_t idxf = idx[f]
    cdef int64_t nref = next_ref(code, &recs[nxt, 0], idx, i3, idxf, prev)
    idx[f] = i3
    p[2 * f] = q2[0]
    p[2 * f + 1] = q2[1]
    return nref


cdef inline int layout_code(mesh):
    layout = mesh.layout
    if layout == "tet32":
        return 32
    if layout == "tet20":
        return 20
    return 16


def cast_rays(mesh, o32, d32, start, visits_sink=None):
    """Batch traversal; same contract as the pure-python kernel."""
    cdef const float[:, ::1] o = np.ascontiguousarray(o32, dtype=np.float32)
    cdef const float[:, ::1] d = np.ascontiguousarray(d32, dtype=np.float32)
    cdef const int32_t[::1] st = np.ascontiguousarray(start, dtype=np.int32)
    cdef const float[:, ::1] pts = mesh.points
    cdef const uint32_t[:, ::1] recs = np.ascontiguousarray(mesh.records_u32())
    cdef const int32_t[:, ::1] sv = mesh.side_verts
    cdef const uint32_t[:, ::1] sn = mesh.side_neighbors
    cdef int code = layout_code(mesh)
    cdef Py_ssize_t n = o.shape[0]
    cdef int n_tets = <int>mesh.n_tets

    status_arr = np.full(n, STATUS_MISS, dtype=np.uint8)
    cf_arr = np.full(n, -1, dtype=np.int32)
    tet_arr = np.full(n, -1, dtype=np.int32)
    visited_arr = np.ones(n, dtype=np.int32)
    cdef uint8_t[::1] status = status_arr
    cdef int32_t[::1] cf = cf_arr
    cdef int32_t[::1] tet = tet_arr
    cdef int32_t[::1] visited = visited_arr

    cdef bint record = visits_sink is not None
    seq_buf = None
    cdef int32_t[::1] seq = None
    if record:
        seq_buf = np.empty(n_tets + 2, dtype=np.int32)
        seq = seq_buf

    cdef Py_ssize_t r
    cdef Basis b
    cdef int64_t idx[3]
    cdef float p[6]
    cdef int j, vis, nseq
    cdef int64_t ref, cur, prev, nxt

    if record:
        for r in range(n):
            cur = st[r]
            j = init_ray(&o[r, 0], &d[r, 0], <int>cur, pts, sv, &b, idx, p)
            ref = sn[<int>cur, j]
            prev = cur
            vis = 1
            seq[0] = <int32_t>cur
            nseq = 1
            while True:
                if ref == BOUNDARY:
                    status[r] = C_MISS
                    tet[r] = <int32_t>cur
                    break
                if ref & CONSTRAINED:
                    status[r] = C_HIT
                    cf[r] = <int32_t>(ref & PAYLOAD)
                    tet[r] = <int32_t>cur
                    break
                nxt = ref & PAYLOAD
                ref = advance(code, pts, recs, &b, idx, p, nxt, prev)
                prev = nxt
                cur = nxt
                vis += 1
                seq[nseq] = <int32_t>cur
                nseq += 1
                if vis > n_tets:
                    status[r] = C_ERROR
                    tet[r] = <int32_t>cur
                    break
            visited[r] = vis
            visits_sink.append(
                (np.full(nseq, r, dtype=np.int64), np.asarray(seq_buf[:nseq]).copy())
            )
        return status_arr, cf_arr, tet_arr, visited_arr

    with nogil:
        for r in range(n):
            cur = st[r]
            j = init_ray(&o[r, 0], &d[r, 0], <int>cur, pts, sv, &b, idx, p)
            ref = sn[<int>cur, j]
            prev = cur
            vis = 1
            while True:
                if ref == BOUNDARY:
                    status[r] = C_MISS
                    tet[r] = <int32_t>cur
                    break
                if ref & CONSTRAINED:
                    status[r] = C_HIT
                    cf[r] = <int32_t>(ref & PAYLOAD)
                    tet[r] = <int32_t>cur
                    break
                nxt = ref & PAYLOAD
                ref = advance(code, pts, recs, &b, idx, p, nxt, prev)
                prev = nxt
                cur = nxt
                vis += 1
                if vis > n_tets:
                    status[r] = C_ERROR
                    tet[r] = <int32_t>cur
                    break
            visited[r] = vis
    return status_arr, cf_arr, tet_arr, visited_arr


cdef inline bint contains(
    const float[:, ::1] pts, const int32_t[:, ::1] sv, int64_t t, const double* q
) noexcept nogil:
    cdef double P[4][3]
    cdef int i, j, k
    cdef int64_t vid
    for i in range(4):
        vid = sv[t, i]
        for k in range(3):
            P[i][k] = pts[vid, k]
    cdef double vol = _det3(
        P[1][0] - P[0][0], P[1][1] - P[0][1], P[1][2] - P[0][2],
        P[2][0] - P[0][0], P[2][1] - P[0][1], P[2][2] - P[0][2],
        P[3][0] - P[0][0], P[3][1] - P[0][1], P[3][2] - P[0][2],
    )
    cdef double s = 1.0 if vol > 0 else -1.0
    cdef double eps = 1e-10 * fabs(vol) + 1e-300
    cdef double S[4][3]
    cdef double dd
    for j in range(4):
        for i in range(4):
            for k in range(3):
                S[i][k] = P[i][k]
        for k in range(3):
            S[j][k] = q[k]
        dd = _det3(
            S[1][0] - S[0][0], S[1][1] - S[0][1], S[1][2] - S[0][2],
            S[2][0] - S[0][0], S[2][1] - S[0][1], S[2][2] - S[0][2],
            S[3][0] - S[0][0], S[3][1] - S[0][1], S[3][2] - S[0][2],
        )
        if s * dd < -eps:
            return False
    return True


cdef inline double _det3(
    double ax, double ay, double az,
    double bx, double by, double bz,
    double cx, double cy, double cz,
) noexcept nogil:
    return ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)


def locate_points(mesh, q, hints):
    """Batch point location; same contract as the pure-python kernel."""
    cdef const double[:, ::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    cdef const int32_t[::1] hint = np.ascontiguousarray(hints, dtype=np.int32)
    cdef const float[:, ::1] pts = mesh.points
    cdef const uint32_t[:, ::1] recs = np.ascontiguousarray(mesh.records_u32())
    cdef const int32_t[:, ::1] sv = mesh.side_verts
    cdef const uint32_t[:, ::1] sn = mesh.side_neighbors
    cdef const int32_t[:, ::1] cft = mesh.cf_tets
    cdef int code = layout_code(mesh)
    cdef Py_ssize_t n = qq.shape[0]
    cdef int n_tets = <int>mesh.n_tets

    out_arr = np.full(n, -1, dtype=np.int32)
    visited_arr = np.ones(n, dtype=np.int32)
    cdef int32_t[::1] out = out_arr
    cdef int32_t[::1] visited = visited_arr

    cdef Py_ssize_t r
    cdef Basis b
    cdef int64_t idx[3]
    cdef float p[6]
    cdef float o32[3]
    cdef float d32[3]
    cdef double c[3]
    cdef int i, j, vis
    cdef int64_t ref, cur, prev, nxt, entry, cfi, ta, tb
    cdef bint dead

    with nogil:
        for r in range(n):
            cur = hint[r]
            if contains(pts, sv, cur, &qq[r, 0]):
                out[r] = <int32_t>cur
                continue
            c[0] = 0.0; c[1] = 0.0; c[2] = 0.0
            for i in range(4):
                for j in range(3):
                    c[j] += <double>pts[sv[cur, i], j]
            for j in range(3):
                c[j] = c[j] / 4.0
            d32[0] = <float>(qq[r, 0] - c[0])
            d32[1] = <float>(qq[r, 1] - c[1])
            d32[2] = <float>(qq[r, 2] - c[2])
            if d32[0] == 0 and d32[1] == 0 and d32[2] == 0:
                continue
            o32[0] = <float>c[0]
            o32[1] = <float>c[1]
            o32[2] = <float>c[2]
            j = init_ray(o32, d32, <int>cur, pts, sv, &b, idx, p)
            ref = sn[<int>cur, j]
            prev = cur
            vis = 1
            while True:
                if ref == BOUNDARY:
                    break
                if ref & CONSTRAINED:
                    cfi = ref & PAYLOAD
                    ta = cft[cfi, 0]
                    tb = cft[cfi, 1]
                    nxt = tb if ta == cur else ta
                    if nxt < 0:
                        break
                    entry = ref
                else:
                    nxt = ref & PAYLOAD
                    entry = cur
                ref = advance(code, pts, recs, &b, idx, p, nxt, entry)
                cur = nxt
                vis += 1
                if contains(pts, sv, nxt, &qq[r, 0]):
                    out[r] = <int32_t>nxt
                    break
                if vis > n_tets:
                    break
            visited[r] = vis
    return out_arr, visited_arr


cdef inline double seg_tri_t(
    const double* o, const double* d, const double* a, const double* bb, const double* cc
) noexcept nogil:
    """Segment/triangle parameter, +inf outside; mirrors _mt_t exactly."""
    cdef double e1x = bb[0] - a[0]
    cdef double e1y = bb[1] - a[1]
    cdef double e1z = bb[2] - a[2]
    cdef double e2x = cc[0] - a[0]
    cdef double e2y = cc[1] - a[1]
    cdef double e2z = cc[2] - a[2]
    cdef double pvx = d[1] * e2z - d[2] * e2y
    cdef double pvy = d[2] * e2x - d[0] * e2z
    cdef double pvz = d[0] * e2y - d[1] * e2x
    cdef double det = e1x * pvx + e1y * pvy + e1z * pvz
    cdef double tvx = o[0] - a[0]
    cdef double tvy = o[1] - a[1]
    cdef double tvz = o[2] - a[2]
    cdef double qx, qy, qz, nx, ny, nz, denom
    if det != 0.0:
        qx = tvy * e1z - tvz * e1y
        qy = tvz * e1x - tvx * e1z
        qz = tvx * e1y - tvy * e1x
        return (e2x * qx + e2y * qy + e2z * qz) / det
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    denom = nx * d[0] + ny * d[1] + nz * d[2]
    if denom == 0.0:
        return 0.0
    return (nx * (a[0] - o[0]) + ny * (a[1] - o[1]) + nz * (a[2] - o[2])) / denom


def shadow_rays(mesh, p, light, p_tet, light_tet, eps=1e-4):
    """Batch occlusion tests; same contract as the pure-python kernel."""
    cdef const double[:, ::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    n_rays = pp.shape[0]
    cdef const double[:, ::1] ll = np.array(
        np.broadcast_to(np.asarray(light, dtype=np.float64).reshape(-1, 3), (n_rays, 3)),
        dtype=np.float64, order="C",
    )
    cdef const int32_t[::1] ptet = np.ascontiguousarray(p_tet, dtype=np.int32)
    lt_arr = np.array(
        np.broadcast_to(np.asarray(light_tet, dtype=np.int32), (n_rays,)), order="C"
    )
    cdef const int32_t[::1] ltet = lt_arr
    cdef const float[:, ::1] pts = mesh.points
    cdef const uint32_t[:, ::1] recs = np.ascontiguousarray(mesh.records_u32())
    cdef const int32_t[:, ::1] sv = mesh.side_verts
    cdef const uint32_t[:, ::1] sn = mesh.side_neighbors
    cdef const int32_t[:, ::1] cft = mesh.cf_tets
    cdef const int32_t[::1] cftri = mesh.cf_triangle
    cdef const double[:, :, ::1] tris = np.ascontiguousarray(mesh.triangle_coords())
    cdef int code = layout_code(mesh)
    cdef Py_ssize_t n = pp.shape[0]
    cdef int n_tets = <int>mesh.n_tets
    cdef double epsv = float(eps)

    occ_arr = np.zeros(n, dtype=bool)
    visited_arr = np.ones(n, dtype=np.int32)
    cdef uint8_t[::1] occ = occ_arr.view(np.uint8)
    cdef int32_t[::1] visited = visited_arr

    cdef Py_ssize_t r
    cdef Basis b
    cdef int64_t idx[3]
    cdef float p2[6]
    cdef float o32[3]
    cdef float d32[3]
    cdef double o64[3]
    cdef double d64[3]
    cdef int j, vis
    cdef int64_t ref, cur, prev, nxt, entry, cfi, ta, tb, tri
    cdef double t

    with nogil:
        for r in range(n):
            cur = ptet[r]
            if cur == ltet[r]:
                continue
            for j in range(3):
                d32[j] = <float>(ll[r, j] - pp[r, j])
                o32[j] = <float>pp[r, j]
                o64[j] = o32[j]
                d64[j] = d32[j]
            j = init_ray(o32, d32, <int>cur, pts, sv, &b, idx, p2)
            ref = sn[<int>cur, j]
            prev = cur
            vis = 1
            while True:
                if ref == BOUNDARY:
                    break
                if ref & CONSTRAINED:
                    cfi = ref & PAYLOAD
                    tri = cftri[cfi]
                    t = seg_tri_t(
                        o64, d64, &tris[tri, 0, 0], &tris[tri, 1, 0], &tris[tri, 2, 0]
                    )
                    if t >= 1.0 - epsv:
                        break
                    if t > epsv:
                        occ[r] = 1
                        break
                    ta = cft[cfi, 0]
                    tb = cft[cfi, 1]
                    nxt = tb if ta == cur else ta
                    if nxt < 0:
                        break
                    entry = ref
                else:
                    nxt = ref & PAYLOAD
                    entry = cur
                if nxt == ltet[r]:
                    break
                ref = advance(code, pts, recs, &b, idx, p2, nxt, entry)
                cur = nxt
                vis += 1
                if vis > n_tets:
                    break
            visited[r] = vis
    return occ_arr, visited_arr
