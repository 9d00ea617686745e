"""Tile-based CPU renderer and its scene/config plumbing.

The image is split into tiles dispatched to a thread pool; each tile owns
a disjoint pixel block and its own traversal state, so output is
bit-identical for any thread count. Camera and point lights are located
from the source tetrahedron once per frame. Shading is Lambertian plus
perfect mirror/glass secondaries (one ray per bounce, no Fresnel split).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import backend, batch, reference
from .ingestion import build_box_fixture, load_obj, parse_tetgen, associate_constrained_faces
from .tetmesh import NO_TET, CompactMesh, SceneTriangleSoup, encode, reorder


@dataclass
class Material:
    kind: str = "diffuse"  # diffuse | mirror | glass
    albedo: tuple = (0.8, 0.8, 0.8)
    ior: float = 1.5


@dataclass
class PointLight:
    position: tuple
    intensity: float = 10.0


@dataclass
class RenderConfig:
    scene: str = "fixture:empty-box?n=4"
    mesh: str | None = None
    layout: str = "tet20"
    reorder: str = "none"
    accelerator: str = "tetmesh"
    width: int = 320
    height: int = 240
    camera_position: tuple = (0.47, 2.13, 2.09)
    camera_look_at: tuple = (3.9, 1.83, 1.94)
    camera_up: tuple = (0.0, 1.0, 0.0)
    fov: float = 68.0
    lights: list = field(default_factory=lambda: [PointLight((1.27, 2.93, 3.17), 14.0)])
    materials: dict = field(default_factory=dict)
    max_depth: int = 2
    tile: int = 16
    threads: int = 1
    backend: str | None = None
    aux_channels: bool = False
    compute_locality: bool = True

    def __post_init__(self):
        if not (self.width >= 1 and self.height >= 1):
            raise ValueError("image dimensions must be >= 1")
        if not (0.0 < self.fov < 180.0):
            raise ValueError("fov must be in (0, 180)")
        if self.max_depth < 0:
            raise ValueError("max depth must be >= 0")


@dataclass
class RenderStats:
    wall_time: dict
    rays: dict
    visited: dict
    accelerator_bytes: int
    locality_metric: float | None

    def to_json(self) -> str:
        return json.dumps(
            {
                "wall_time": self.wall_time,
                "rays": self.rays,
                "visited": self.visited,
                "accelerator_bytes": self.accelerator_bytes,
                "locality_metric": self.locality_metric,
            },
            indent=2,
            sort_keys=True,
        )


@dataclass
class RenderResult:
    image: np.ndarray  # (h, w, 3) uint8
    stats: RenderStats
    aux: dict | None


class SceneError(Exception):
    pass


_FIXTURE_DEFAULT_MATERIALS = {
    0: Material("diffuse", (0.82, 0.80, 0.78)),
    1: Material("mirror", (0.90, 0.90, 0.92)),
}


def load_scene(config: RenderConfig):
    """Resolve config.scene into (raw mesh or None, CompactMesh, soup).

    fixture: URIs build analytic Kuhn boxes; anything else is an OBJ path
    with config.mesh naming the TetGen fileset for the same geometry.
    """
    spec = config.scene
    if spec.startswith("fixture:"):
        parsed = urlparse(spec)
        kind = parsed.path
        params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        n = int(params.get("n", 4))
        pane_mat = params.get("pane", "mirror")
        if kind == "empty-box":
            raw, soup = build_box_fixture(n)
        elif kind == "pane-box":
            # central square pane: primary rays both hit it and pass around it
            lo, hi = max(1, n // 4), min(n - 1, (3 * n) // 4)
            if hi <= lo:
                lo, hi = 0, n
            raw, soup = build_box_fixture(n, occluders=[(0, n // 2, (lo, lo), (hi, hi))])
        elif kind == "full-pane-box":
            raw, soup = build_box_fixture(n, occluders=[(0, n // 2, (0, 0), (n, n))])
        elif kind == "region-box":
            if n < 3:
                raise SceneError("region-box needs n >= 3")
            lo, hi = 1, n - 1
            occ = []
            for axis in range(3):
                for k in (lo, hi):
                    occ.append((axis, k, (lo, lo), (hi, hi)))
            raw, soup = build_box_fixture(n, occluders=occ)
        else:
            raise SceneError(f"unknown fixture {kind!r}")
        materials = dict(_FIXTURE_DEFAULT_MATERIALS)
        if pane_mat != "mirror":
            materials[1] = Material(pane_mat, (0.9, 0.9, 0.92))
        for mid, mat in config.materials.items():
            materials[mid] = mat
        mesh = encode(raw, config.layout, soup)
        mesh = reorder(mesh, config.reorder)
        return mesh, soup, materials

    if config.mesh is None:
        raise SceneError("non-fixture scenes need --mesh (TetGen basename)")
    soup = load_obj(config.scene)
    raw = parse_tetgen(config.mesh)
    faces = np.array(
        [cf.vertex_ids for cf in raw.constrained_faces], dtype=np.int64
    ).reshape(-1, 3)
    tri_ids = associate_constrained_faces(raw.points, faces, soup, tolerance=1e-9)
    for cf, tid in zip(raw.constrained_faces, tri_ids):
        cf.triangle_id = int(tid)
    mesh = encode(raw, config.layout, soup)
    mesh = reorder(mesh, config.reorder)
    materials = {0: Material()}
    materials.update(config.materials)
    return mesh, soup, materials


def camera_rays(config: RenderConfig, xs, ys):
    """Float32 ray origins/directions through the given pixel centers."""
    pos = np.asarray(config.camera_position, dtype=np.float64)
    look = np.asarray(config.camera_look_at, dtype=np.float64)
    up = np.asarray(config.camera_up, dtype=np.float64)
    fwd = look - pos
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    up2 = np.cross(right, fwd)
    half_h = np.tan(np.radians(config.fov) * 0.5)
    half_w = half_h * config.width / config.height
    sx = ((xs + 0.5) / config.width * 2.0 - 1.0) * half_w
    sy = (1.0 - (ys + 0.5) / config.height * 2.0) * half_h
    d = fwd[None] + sx[:, None] * right[None] + sy[:, None] * up2[None]
    o = np.broadcast_to(pos, d.shape)
    return o.astype(np.float32), d.astype(np.float32)


# ---------------------------------------------------------------------------
# Accelerator adapters: identical cast/occlusion surface over the three paths.


class _TetAccel:
    name = "tetmesh"

    def __init__(self, mesh: CompactMesh, kernels):
        self.mesh = mesh
        self.kernels = kernels
        self.bytes = mesh.accelerator_bytes

    def locate(self, points):
        tets, _ = batch.locate_points(self.mesh, points, kernels=self.kernels)
        return tets

    def cast(self, o32, d32, start, exclude):
        h = batch.cast_rays(self.mesh, o32, d32, start, kernels=self.kernels)
        return h.triangle, h.t, h.tet_front, h.tet_back, h.visited

    def occluded(self, p32, light32, p_tets, light_tet):
        occ, _ = batch.shadow_rays(
            self.mesh, p32, light32, p_tets, light_tet, kernels=self.kernels
        )
        return occ


class _BruteAccel:
    name = "brute"

    def __init__(self, soup: SceneTriangleSoup):
        self.soup = soup
        self.bytes = 0

    def locate(self, points):
        return np.zeros(len(np.atleast_2d(points)), dtype=np.int32)

    def cast(self, o32, d32, start, exclude):
        ids, ts = reference.brute_force_cast_batch(
            o32.astype(np.float64), d32.astype(np.float64), self.soup, exclude=exclude
        )
        n = len(ids)
        none = np.full(n, NO_TET, dtype=np.int32)
        return ids.astype(np.int32), ts, none, none, np.zeros(n, dtype=np.int32)

    def occluded(self, p32, light32, p_tets, light_tet):
        l64 = np.broadcast_to(
            np.asarray(light32, dtype=np.float64), (len(p32), 3)
        )
        return reference.segment_occluded_batch(p32.astype(np.float64), l64, self.soup)


class _BVHAccel:
    name = "bvh"

    def __init__(self, soup: SceneTriangleSoup):
        from .geometry import Ray, Vec3

        self.soup = soup
        self.bvh = reference.bvh_build(soup)
        self.bytes = self.bvh.accelerator_bytes
        self._ray = lambda o, d: Ray(Vec3(*o), Vec3(*d))

    def locate(self, points):
        return np.zeros(len(np.atleast_2d(points)), dtype=np.int32)

    def cast(self, o32, d32, start, exclude):
        n = len(o32)
        ids = np.full(n, -1, dtype=np.int32)
        ts = np.full(n, np.inf, dtype=np.float64)
        for i in range(n):
            best = None
            res = self.bvh.cast(self._ray(o32[i].astype(np.float64), d32[i].astype(np.float64)))
            if res is not None and exclude is not None and res[0] == exclude[i]:
                # nearest is the excluded source triangle; retry past it
                res2 = reference.brute_force_cast_batch(
                    o32[i : i + 1].astype(np.float64),
                    d32[i : i + 1].astype(np.float64),
                    self.soup,
                    exclude=exclude[i : i + 1],
                )
                res = (
                    (int(res2[0][0]), float(res2[1][0])) if res2[0][0] >= 0 else None
                )
            best = res
            if best is not None:
                ids[i], ts[i] = best
        none = np.full(n, NO_TET, dtype=np.int32)
        return ids, ts, none, none, np.zeros(n, dtype=np.int32)

    def occluded(self, p32, light32, p_tets, light_tet):
        l64 = np.broadcast_to(np.asarray(light32, dtype=np.float64), (len(p32), 3))
        return reference.segment_occluded_batch(p32.astype(np.float64), l64, self.soup)


def _reflect(d, n):
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def _refract(d, n, eta):
    """Refract unit d about unit n (n facing the incoming side).

    Returns (dir, tir_mask); total internal reflection rows fall back to
    the reflected direction.
    """
    cosi = -np.sum(d * n, axis=-1, keepdims=True)
    sin2t = eta * eta * (1.0 - cosi * cosi)
    tir = (sin2t > 1.0).ravel()
    cost = np.sqrt(np.maximum(0.0, 1.0 - sin2t))
    refr = eta * d + (eta * cosi - cost) * n
    refl = _reflect(d, n)
    return np.where(tir[:, None], refl, refr), tir


def _shade_tile(job):
    (config, accel, soup, materials, lights, light_tets, cam_tet, x0, y0, x1, y1) = job
    w = x1 - x0
    h = y1 - y0
    k = w * h
    ys, xs = np.mgrid[y0:y1, x0:x1]
    o32, d32 = camera_rays(config, xs.ravel().astype(np.float64), ys.ravel().astype(np.float64))

    color = np.zeros((k, 3), dtype=np.float64)
    throughput = np.ones((k, 3), dtype=np.float64)
    primary = np.full(k, -1, dtype=np.int32)
    shadow_mask = np.zeros(k, dtype=bool)
    secondary = np.full(k, -2, dtype=np.int32)

    counts = {"camera": k, "shadow": 0, "reflection": 0, "refraction": 0}
    visited_sum = 0
    visited_max = 0
    visited_rays = 0

    tri_coords = soup.triangle_coords()
    mat_ids = soup.material_ids
    live = np.arange(k)
    start = np.full(k, cam_tet, dtype=np.int32)
    exclude = np.full(k, -1, dtype=np.int32)
    cur_o, cur_d = o32.copy(), d32.copy()

    for bounce in range(config.max_depth + 1):
        if not len(live):
            break
        tri, t, front, back, visited = accel.cast(
            cur_o, cur_d, start, exclude if bounce else None
        )
        if accel.name == "tetmesh":
            visited_sum += int(visited.sum())
            visited_max = max(visited_max, int(visited.max(initial=0)))
            visited_rays += len(visited)
        if bounce == 0:
            primary[live] = tri
        elif bounce == 1:
            secondary[live] = tri

        hit = tri >= 0
        if not hit.any():
            break
        live = live[hit]
        tri = tri[hit]
        t = t[hit]
        front = front[hit]
        back = back[hit]
        o64 = cur_o[hit].astype(np.float64)
        d64 = cur_d[hit].astype(np.float64)
        hp = o64 + t[:, None] * d64
        tc = tri_coords[tri]
        n = np.cross(tc[:, 1] - tc[:, 0], tc[:, 2] - tc[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        d_unit = d64 / np.linalg.norm(d64, axis=1, keepdims=True)
        flip = np.sum(n * d_unit, axis=1) > 0
        n[flip] = -n[flip]

        kinds = np.array(
            [materials.get(int(m), Material()).kind for m in mat_ids[tri]]
        )
        albedo = np.array(
            [materials.get(int(m), Material()).albedo for m in mat_ids[tri]]
        )
        iors = np.array(
            [materials.get(int(m), Material()).ior for m in mat_ids[tri]]
        )

        diff = kinds == "diffuse"
        if diff.any():
            rows = np.nonzero(diff)[0]
            p32 = hp[rows].astype(np.float32)
            for light, ltet in zip(lights, light_tets):
                l32 = np.asarray(light.position, dtype=np.float32)
                counts["shadow"] += len(rows)
                occ = accel.occluded(p32, l32, front[rows], ltet)
                if bounce == 0:
                    shadow_mask[live[rows]] |= occ
                lit = ~occ
                if lit.any():
                    lv = np.asarray(light.position, dtype=np.float64) - hp[rows][lit]
                    dist2 = np.sum(lv * lv, axis=1)
                    lhat = lv / np.sqrt(dist2)[:, None]
                    lam = np.maximum(0.0, np.sum(n[rows][lit] * lhat, axis=1))
                    contrib = (
                        throughput[live[rows][lit]]
                        * albedo[rows][lit]
                        * (light.intensity * lam / dist2)[:, None]
                    )
                    color[live[rows][lit]] += contrib

        spec = ~diff
        if bounce == config.max_depth or not spec.any():
            break
        rows = np.nonzero(spec)[0]
        mirror = kinds[rows] == "mirror"
        glass = kinds[rows] == "glass"
        new_dir = np.zeros((len(rows), 3), dtype=np.float64)
        new_start = np.full(len(rows), -1, dtype=np.int32)
        keep = np.zeros(len(rows), dtype=bool)
        if mirror.any():
            m = rows[mirror]
            new_dir[mirror] = _reflect(d_unit[m], n[m])
            new_start[mirror] = front[m]
            keep[mirror] = front[m] >= 0
            counts["reflection"] += int(mirror.sum())
        if glass.any():
            g = rows[glass]
            entering_eta = 1.0 / iors[g]
            refr, tir = _refract(d_unit[g], n[g], entering_eta[:, None])
            new_dir[glass] = refr
            # refraction continues behind the face; TIR bounces back in front
            ns = np.where(tir, front[g], back[g])
            new_start[glass] = ns
            keep[glass] = ns >= 0
            counts["refraction"] += int(glass.sum())

        if accel.name != "tetmesh":
            keep = np.ones(len(rows), dtype=bool)
        sel = rows[keep]
        throughput_new = throughput[live[sel]] * albedo[sel]
        live = live[sel]
        throughput[live] = throughput_new
        cur_o = hp[sel].astype(np.float32)
        cur_d = new_dir[keep].astype(np.float32)
        start = new_start[keep]
        exclude = tri[sel].astype(np.int32)

    img = color.reshape(h, w, 3)
    return {
        "x0": x0,
        "y0": y0,
        "img": img,
        "primary": primary.reshape(h, w),
        "shadow": shadow_mask.reshape(h, w),
        "secondary": secondary.reshape(h, w),
        "counts": counts,
        "visited_sum": visited_sum,
        "visited_max": visited_max,
        "visited_rays": visited_rays,
    }


def srgb_u8(linear: np.ndarray) -> np.ndarray:
    """Linear RGB to 8-bit sRGB (clamped); bit-exact for identical input."""
    c = np.clip(linear, 0.0, 1.0)
    srgb = np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)
    return (np.round(srgb * 255.0)).astype(np.uint8)


def write_image(image: np.ndarray, path) -> None:
    """Write an (h, w, 3) uint8 image as binary PPM (P6)."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def render(config: RenderConfig) -> RenderResult:
    """Render a frame; returns the image, stats, and aux id channels."""
    wall = {}
    t0 = time.perf_counter()
    mesh, soup, materials = load_scene(config)
    kernels = backend.get_kernels(config.backend)
    if config.accelerator == "tetmesh":
        accel = _TetAccel(mesh, kernels)
    elif config.accelerator == "brute":
        accel = _BruteAccel(soup)
    elif config.accelerator == "bvh":
        accel = _BVHAccel(soup)
    else:
        raise ValueError(f"unknown accelerator {config.accelerator!r}")
    wall["build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cam_tet = -1
    light_tets = [-1] * len(config.lights)
    if config.accelerator == "tetmesh":
        tet_locator = _TetAccel(mesh, kernels)
        cam = tet_locator.locate([config.camera_position])[0]
        if cam < 0:
            raise SceneError("camera is outside the tetrahedralized volume")
        cam_tet = int(cam)
        light_tets = []
        for light in config.lights:
            lt = int(tet_locator.locate([light.position])[0])
            if lt < 0:
                raise SceneError("light is outside the tetrahedralized volume")
            light_tets.append(lt)
    wall["locate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tiles = []
    ts = max(1, int(config.tile))
    for y0 in range(0, config.height, ts):
        for x0 in range(0, config.width, ts):
            tiles.append(
                (
                    config,
                    accel,
                    soup,
                    materials,
                    config.lights,
                    light_tets,
                    cam_tet,
                    x0,
                    y0,
                    min(config.width, x0 + ts),
                    min(config.height, y0 + ts),
                )
            )
    img = np.zeros((config.height, config.width, 3), dtype=np.float64)
    primary = np.full((config.height, config.width), -1, dtype=np.int32)
    shadow = np.zeros((config.height, config.width), dtype=bool)
    secondary = np.full((config.height, config.width), -2, dtype=np.int32)
    counts = {"camera": 0, "shadow": 0, "reflection": 0, "refraction": 0}
    visited_sum = 0
    visited_max = 0
    visited_rays = 0

    def handle(res):
        nonlocal visited_sum, visited_max, visited_rays
        x0, y0 = res["x0"], res["y0"]
        th, tw = res["img"].shape[:2]
        img[y0 : y0 + th, x0 : x0 + tw] = res["img"]
        primary[y0 : y0 + th, x0 : x0 + tw] = res["primary"]
        shadow[y0 : y0 + th, x0 : x0 + tw] = res["shadow"]
        secondary[y0 : y0 + th, x0 : x0 + tw] = res["secondary"]
        for key in counts:
            counts[key] += res["counts"][key]
        visited_sum += res["visited_sum"]
        visited_max = max(visited_max, res["visited_max"])
        visited_rays += res["visited_rays"]

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for res in pool.map(_shade_tile, tiles):
                handle(res)
    else:
        for job in tiles:
            handle(_shade_tile(job))
    wall["render"] = time.perf_counter() - t0

    locality = None
    if config.accelerator == "tetmesh" and config.compute_locality:
        locality = visit_locality_metric(mesh, kernels=kernels)

    stats = RenderStats(
        wall_time=wall,
        rays=counts,
        visited={
            "mean": (visited_sum / visited_rays) if visited_rays else 0.0,
            "max": visited_max,
        },
        accelerator_bytes=accel.bytes,
        locality_metric=locality,
    )
    aux = {"primary_tri": primary, "shadow_mask": shadow, "secondary_tri": secondary}
    return RenderResult(image=srgb_u8(img), stats=stats, aux=aux)


def visit_locality_metric(
    mesh: CompactMesh, n_rays: int = 1024, seed: int = 5, kernels=None
) -> float:
    """Mean |index distance| between consecutively visited tetrahedra.

    Smaller means consecutive traversal steps touch nearby records, the
    point of the Hilbert reordering.
    """
    rng = np.random.default_rng(seed)
    pts = mesh.points.astype(np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    o = rng.uniform(lo + 0.02 * span, hi - 0.02 * span, size=(n_rays, 3))
    d = rng.normal(size=(n_rays, 3))
    starts, _ = batch.locate_points(mesh, o, kernels=kernels)
    ok = starts >= 0
    _, visits, offsets = batch.cast_rays_visits(
        mesh, o[ok], d[ok], starts[ok], kernels=kernels
    )
    deltas = []
    for i in range(len(offsets) - 1):
        seq = visits[offsets[i] : offsets[i + 1]]
        if len(seq) > 1:
            deltas.append(np.abs(np.diff(seq.astype(np.int64))))
    if not deltas:
        return 0.0
    return float(np.concatenate(deltas).mean())
