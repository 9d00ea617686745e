"""Batch ray operations on top of the kernel backends.

The kernels walk the mesh and report which constrained face ended each
ray; this layer turns that into hit data (scene triangle, float64 t, the
two tetrahedra sharing the face) shared by every backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .tetmesh import NO_TET, CompactMesh
from ._kernels_py import STATUS_ERROR, STATUS_HIT, _mt_t


@dataclass
class BatchHits:
    """Per-ray results of a batch cast; triangle -1 means miss."""

    status: np.ndarray  # (n,) uint8
    cf: np.ndarray  # (n,) int32
    triangle: np.ndarray  # (n,) int32, -1 on miss
    t: np.ndarray  # (n,) float64, +inf on miss
    tet_front: np.ndarray  # (n,) int32 incident tet
    tet_back: np.ndarray  # (n,) int32, -1 on hull
    visited: np.ndarray  # (n,) int32

    def __len__(self) -> int:
        return len(self.status)


def _as_f32(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float32).reshape(-1, 3))


def cast_rays(
    mesh: CompactMesh,
    origins,
    dirs,
    start_tets,
    *,
    kernels=None,
) -> BatchHits:
    """Cast a batch of rays from known start tetrahedra."""
    k = kernels or backend.get_kernels()
    o32 = _as_f32(origins)
    d32 = _as_f32(dirs)
    start = np.ascontiguousarray(np.asarray(start_tets, dtype=np.int32))
    status, cf, tet, visited = k.cast_rays(mesh, o32, d32, start)
    if np.any(status == STATUS_ERROR):
        bad = int(np.nonzero(status == STATUS_ERROR)[0][0])
        raise RuntimeError(f"traversal cycle guard tripped for ray {bad}")

    n = len(o32)
    triangle = np.full(n, -1, dtype=np.int32)
    t = np.full(n, np.inf, dtype=np.float64)
    back = np.full(n, NO_TET, dtype=np.int32)
    hit = status == STATUS_HIT
    if hit.any():
        cfs = cf[hit]
        triangle[hit] = mesh.cf_triangle[cfs]
        tris = mesh.triangle_coords()[mesh.cf_triangle[cfs]]
        t[hit] = _mt_t(
            o32[hit].astype(np.float64), d32[hit].astype(np.float64), tris
        )
        a = mesh.cf_tets[cfs, 0]
        b = mesh.cf_tets[cfs, 1]
        back[hit] = np.where(a == tet[hit], b, a)
    return BatchHits(
        status=status,
        cf=cf,
        triangle=triangle,
        t=t,
        tet_front=tet,
        tet_back=back,
        visited=visited,
    )


def cast_rays_visits(
    mesh: CompactMesh, origins, dirs, start_tets, *, kernels=None
) -> tuple[BatchHits, np.ndarray, np.ndarray]:
    """Batch cast that also returns the visited-tet sequences.

    Returns (hits, visits, offsets): ray i visited
    visits[offsets[i]:offsets[i+1]] in order.
    """
    k = kernels or backend.get_kernels()
    o32 = _as_f32(origins)
    d32 = _as_f32(dirs)
    start = np.ascontiguousarray(np.asarray(start_tets, dtype=np.int32))
    sink: list = []
    status, cf, tet, visited = k.cast_rays(mesh, o32, d32, start, visits_sink=sink)
    if np.any(status == STATUS_ERROR):
        bad = int(np.nonzero(status == STATUS_ERROR)[0][0])
        raise RuntimeError(f"traversal cycle guard tripped for ray {bad}")

    offsets = np.zeros(len(o32) + 1, dtype=np.int64)
    np.cumsum(visited, out=offsets[1:])
    visits = np.empty(int(offsets[-1]), dtype=np.int32)
    pos = offsets[:-1].copy()
    for rays, tets in sink:
        if len(rays) and rays[0] == rays[-1] and (rays == rays[0]).all():
            i = int(rays[0])
            k_ = len(tets)
            visits[pos[i] : pos[i] + k_] = tets
            pos[i] += k_
        else:
            visits[pos[rays]] = tets
            pos[rays] += 1

    n = len(o32)
    triangle = np.full(n, -1, dtype=np.int32)
    t = np.full(n, np.inf, dtype=np.float64)
    back = np.full(n, NO_TET, dtype=np.int32)
    hit = status == STATUS_HIT
    if hit.any():
        cfs = cf[hit]
        triangle[hit] = mesh.cf_triangle[cfs]
        tris = mesh.triangle_coords()[mesh.cf_triangle[cfs]]
        t[hit] = _mt_t(o32[hit].astype(np.float64), d32[hit].astype(np.float64), tris)
        a = mesh.cf_tets[cfs, 0]
        b = mesh.cf_tets[cfs, 1]
        back[hit] = np.where(a == tet[hit], b, a)
    hits = BatchHits(
        status=status,
        cf=cf,
        triangle=triangle,
        t=t,
        tet_front=tet,
        tet_back=back,
        visited=visited,
    )
    return hits, visits, offsets


def locate_points(mesh: CompactMesh, points, hints=None, *, kernels=None):
    """Batch point location; returns (tets, visited), tet -1 = outside."""
    k = kernels or backend.get_kernels()
    q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if hints is None:
        hints = np.full(len(q), mesh.source_tet, dtype=np.int32)
    else:
        hints = np.broadcast_to(np.asarray(hints, dtype=np.int32), (len(q),)).copy()
    return k.locate_points(mesh, q, hints)


def shadow_rays(
    mesh: CompactMesh, points, light, point_tets, light_tet, *, eps=1e-4, kernels=None
):
    """Batch shadow tests; returns (occluded, visited)."""
    k = kernels or backend.get_kernels()
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    l = np.broadcast_to(np.asarray(light, dtype=np.float64).reshape(-1, 3), p.shape)
    pt = np.asarray(point_tets, dtype=np.int32)
    return k.shadow_rays(mesh, p, np.ascontiguousarray(l), pt, light_tet, eps)
