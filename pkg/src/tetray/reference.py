"""Independent oracles and baselines.

Everything here is deliberately implementation-independent of the
traversal engine (only the Vec types are shared): brute-force ray casting
is the ground truth the accelerated paths are judged against, and the
median-split BVH is a comparison baseline for the benchmark harness, not a
reproduction of any production BVH.
"""

from __future__ import annotations

import numpy as np

from .geometry import Ray, Vec2, Vec3
from .tetmesh import SceneTriangleSoup


def moller_trumbore(ray: Ray, tri, *, t_min: float = 0.0) -> float | None:
    """Ray/triangle intersection parameter, or None.

    tri is a sequence of three Vec3 (or 3-sequences). Boundary hits count;
    hits behind t_min are rejected.
    """
    a = np.asarray([tri[0][0], tri[0][1], tri[0][2]], dtype=np.float64)
    b = np.asarray([tri[1][0], tri[1][1], tri[1][2]], dtype=np.float64)
    c = np.asarray([tri[2][0], tri[2][1], tri[2][2]], dtype=np.float64)
    o = np.asarray([ray.origin.x, ray.origin.y, ray.origin.z], dtype=np.float64)
    d = np.asarray(
        [ray.direction.x, ray.direction.y, ray.direction.z], dtype=np.float64
    )
    e1 = b - a
    e2 = c - a
    p = np.cross(d, e2)
    det = float(e1 @ p)
    if det == 0.0:
        return None
    inv = 1.0 / det
    tv = o - a
    u = float(tv @ p) * inv
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(tv, e1)
    v = float(d @ q) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ q) * inv
    if t < t_min:
        return None
    return t


def _batch_mt(o, d, tri):
    """Möller-Trumbore over (r, 3) rays x (t, 3, 3) triangles.

    Returns (t, u, v, det) arrays of shape (r, t); misses are +inf in t.
    """
    a = tri[:, 0][None]  # (1, t, 3)
    e1 = (tri[:, 1] - tri[:, 0])[None]
    e2 = (tri[:, 2] - tri[:, 0])[None]
    p = np.cross(d[:, None], e2)  # (r, t, 3)
    det = np.sum(e1 * p, axis=-1)
    tv = o[:, None] - a
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(det != 0.0, 1.0 / det, 0.0)
        u = np.sum(tv * p, axis=-1) * inv
        q = np.cross(tv, np.broadcast_to(e1, tv.shape))
        v = np.sum(d[:, None] * q, axis=-1) * inv
        t = np.sum(e2 * q, axis=-1) * inv
    ok = (det != 0.0) & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0)
    return np.where(ok, t, np.inf), u, v, det


def brute_force_cast(ray: Ray, soup: SceneTriangleSoup, *, t_min: float = 0.0):
    """Nearest (triangle_id, t) over every scene triangle, or None.

    Exact minimum over all triangles; min-t ties break to the lowest id.
    """
    ids, ts = brute_force_cast_batch(
        np.array([[ray.origin.x, ray.origin.y, ray.origin.z]]),
        np.array([[ray.direction.x, ray.direction.y, ray.direction.z]]),
        soup,
        t_min=t_min,
    )
    if ids[0] < 0:
        return None
    return int(ids[0]), float(ts[0])


def brute_force_cast_batch(
    origins,
    dirs,
    soup: SceneTriangleSoup,
    *,
    t_min: float | np.ndarray = 0.0,
    exclude=None,
    chunk: int = 4096,
):
    """Vectorized brute-force cast. Returns (ids, ts); id -1 means miss.

    exclude, when given, is a per-ray triangle id that cannot be reported
    (used for secondary rays spawned from a surface).
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    tri = soup.triangle_coords()
    n = len(o)
    ids = np.full(n, -1, dtype=np.int64)
    ts = np.full(n, np.inf, dtype=np.float64)
    if len(tri) == 0:
        return ids, ts
    tmin_arr = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))
    excl = None if exclude is None else np.asarray(exclude, dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        t, _, _, _ = _batch_mt(o[s:e], d[s:e], tri)
        t = np.where(t >= tmin_arr[s:e, None], t, np.inf)
        if excl is not None:
            rows = np.arange(e - s)
            sel = excl[s:e] >= 0
            t[rows[sel], excl[s:e][sel]] = np.inf
        best = np.argmin(t, axis=1)  # lowest id wins ties
        bt = t[np.arange(e - s), best]
        hit = np.isfinite(bt)
        ids[s:e] = np.where(hit, best, -1)
        ts[s:e] = np.where(hit, bt, np.inf)
    return ids, ts


def grazing_rays(origins, dirs, soup: SceneTriangleSoup, margin: float = 1e-9):
    """Mask of rays passing within `margin` (barycentric) of a triangle edge.

    Used to exclude edge-grazing samples from oracle-equivalence checks.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    tri = soup.triangle_coords()
    out = np.zeros(len(o), dtype=bool)
    for s in range(0, len(o), 4096):
        e = min(len(o), s + 4096)
        t, u, v, det = _batch_mt(o[s:e], d[s:e], tri)
        w = 1.0 - u - v
        near = (
            (det != 0.0)
            & (u >= -margin)
            & (v >= -margin)
            & (w >= -margin)
            & (np.minimum(np.minimum(np.abs(u), np.abs(v)), np.abs(w)) < margin)
        )
        out[s:e] = near.any(axis=1)
    return out


def segment_occluded(p, q, soup: SceneTriangleSoup, eps: float = 1e-4) -> bool:
    """True when some triangle crosses the open segment (p, q).

    Crossings with parameter within eps of either endpoint do not count.
    """
    return bool(
        segment_occluded_batch(
            np.asarray(p, dtype=np.float64)[None],
            np.asarray(q, dtype=np.float64)[None],
            soup,
            eps=eps,
        )[0]
    )


def segment_occluded_batch(p, q, soup: SceneTriangleSoup, eps: float = 1e-4):
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    tri = soup.triangle_coords()
    out = np.zeros(len(p), dtype=bool)
    if len(tri) == 0:
        return out
    for s in range(0, len(p), 4096):
        e = min(len(p), s + 4096)
        t, _, _, _ = _batch_mt(p[s:e], q[s:e] - p[s:e], tri)
        out[s:e] = ((t > eps) & (t < 1.0 - eps)).any(axis=1)
    return out


def point_in_triangle_2d(q: Vec2, a: Vec2, b: Vec2, c: Vec2) -> bool:
    """Sign-consistent edge-function test; the boundary counts as inside."""
    e0 = (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x)
    e1 = (c.x - b.x) * (q.y - b.y) - (c.y - b.y) * (q.x - b.x)
    e2 = (a.x - c.x) * (q.y - c.y) - (a.y - c.y) * (q.x - c.x)
    return (e0 >= 0 and e1 >= 0 and e2 >= 0) or (e0 <= 0 and e1 <= 0 and e2 <= 0)


def barycentric_contains(q, tet, rel_eps: float = 1e-12) -> bool:
    """True when q lies inside the tetrahedron (boundary inclusive).

    All four signed sub-volumes must carry the tetrahedron's orientation
    sign, within a relative epsilon. Raises for degenerate tetrahedra.
    """
    p = np.asarray(
        [[v[0], v[1], v[2]] for v in tet], dtype=np.float64
    )
    qq = np.asarray([q[0], q[1], q[2]], dtype=np.float64)
    vol = _det3(p[1] - p[0], p[2] - p[0], p[3] - p[0])
    scale = np.abs(p).max() + 1.0
    if abs(vol) <= 1e-300 or abs(vol) < 1e-14 * scale**3:
        raise ValueError("degenerate tetrahedron")
    s = 1.0 if vol > 0 else -1.0
    eps = rel_eps * abs(vol)
    for j in range(4):
        sub = p.copy()
        sub[j] = qq
        if s * _det3(sub[1] - sub[0], sub[2] - sub[0], sub[3] - sub[0]) < -eps:
            return False
    return True


def barycentric_contains_batch(q, tet_pts, rel_eps: float = 1e-12):
    """Vectorized containment: q (n, 3) against tet_pts (n, 4, 3)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    p = np.asarray(tet_pts, dtype=np.float64).reshape(-1, 4, 3)
    vol = np.einsum(
        "ij,ij->i",
        p[:, 1] - p[:, 0],
        np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]),
    )
    s = np.where(vol > 0, 1.0, -1.0)
    eps = rel_eps * np.abs(vol)
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


def _det3(a, b, c) -> float:
    return float(a @ np.cross(b, c))


# ---------------------------------------------------------------------------
# Median-split BVH baseline


class BVH:
    """Median-split bounding volume hierarchy over scene triangles.

    A desk-scale baseline for the benchmark harness. Results must (and are
    tested to) match brute_force_cast exactly.
    """

    def __init__(self, soup: SceneTriangleSoup, leaf_size: int = 4):
        self.soup = soup
        tri = soup.triangle_coords()
        n = len(tri)
        self.order = np.arange(n, dtype=np.int64)
        self._tri = tri
        # node arrays: bbox lo/hi, (left, right) children, or leaf (start, count)
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.start: list[int] = []
        self.count: list[int] = []
        if n:
            cent = tri.mean(axis=1)
            self._build(0, n, cent, leaf_size)

    def _build(self, s, e, cent, leaf_size) -> int:
        idx = len(self.lo)
        sel = self.order[s:e]
        pts = self._tri[sel].reshape(-1, 3)
        self.lo.append(pts.min(axis=0))
        self.hi.append(pts.max(axis=0))
        self.left.append(-1)
        self.right.append(-1)
        self.start.append(s)
        self.count.append(e - s)
        if e - s > leaf_size:
            axis = int(np.argmax(self.hi[idx] - self.lo[idx]))
            order = np.argsort(cent[self.order[s:e], axis], kind="stable")
            self.order[s:e] = self.order[s:e][order]
            mid = s + (e - s) // 2
            self.count[idx] = 0
            self.left[idx] = self._build(s, mid, cent, leaf_size)
            self.right[idx] = self._build(mid, e, cent, leaf_size)
        return idx

    @property
    def node_count(self) -> int:
        return len(self.lo)

    @property
    def accelerator_bytes(self) -> int:
        # 2 corners x 3 f32-equivalent fields + 4 int32 per node, plus the
        # triangle order array; reported for the bench comparison table.
        return self.node_count * (6 * 4 + 4 * 4) + self.order.nbytes

    def cast(self, ray: Ray, *, t_min: float = 0.0):
        """(triangle_id, t) of the nearest hit, or None."""
        if not self.lo:
            return None
        o = np.array([ray.origin.x, ray.origin.y, ray.origin.z], dtype=np.float64)
        d = np.array(
            [ray.direction.x, ray.direction.y, ray.direction.z], dtype=np.float64
        )
        with np.errstate(divide="ignore"):
            inv = np.where(d != 0, 1.0 / d, np.inf)
        best_t = np.inf
        best_id = -1
        stack = [0]
        while stack:
            node = stack.pop()
            t0 = (self.lo[node] - o) * inv
            t1 = (self.hi[node] - o) * inv
            near = np.minimum(t0, t1).max()
            far = np.maximum(t0, t1).min()
            if near > far or far < t_min or near > best_t:
                continue
            if self.count[node]:
                s = self.start[node]
                for tri_id in self.order[s : s + self.count[node]]:
                    t = moller_trumbore(ray, self._tri[tri_id], t_min=t_min)
                    if t is None:
                        continue
                    if t < best_t or (t == best_t and tri_id < best_id):
                        best_t, best_id = t, int(tri_id)
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        if best_id < 0:
            return None
        return best_id, best_t


def bvh_build(soup: SceneTriangleSoup, leaf_size: int = 4) -> BVH:
    return BVH(soup, leaf_size=leaf_size)


def bvh_cast(bvh: BVH, ray: Ray, *, t_min: float = 0.0):
    return bvh.cast(ray, t_min=t_min)
