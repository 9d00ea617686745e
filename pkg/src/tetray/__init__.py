"""tetray: ray tracing on compact xor-linked tetrahedral meshes.

A tetrahedralization of the scene's empty space doubles as a ray-tracing
acceleration structure: walking from tetrahedron to tetrahedron through
2-D exit-face tests finds the nearest surface without a hierarchy. The
per-tetrahedron records come in 32/20/16-byte layouts that recover vertex
and neighbor indices through xor sums, and the mesh can be reordered along
a Hilbert curve for cache locality.

Hot kernels live in a compiled extension when available, with a
vectorized pure-python fallback selected at import (see tetray.backend).
"""

from .geometry import Ray, ScaledBasis, Vec2, Vec3, build_scaled_basis, det2, orthonormal_basis, project_point
from .tetmesh import (
    BOUNDARY_REF,
    CONSTRAINED_BIT,
    LAYOUT_BYTES,
    LAYOUTS,
    NO_TET,
    TET16,
    TET20,
    TET32,
    CompactMesh,
    ConstrainedFace,
    RawTetMesh,
    SceneTriangleSoup,
    compute_xor_sum,
    detect_regions,
    encode,
    recover_fourth_vertex,
    relayout,
    reorder,
    validate,
)
from .traversal import (
    HitRecord,
    Miss,
    cast_ray,
    cast_ray_auto,
    cast_shadow_ray,
    get_exit_face,
    init_traversal,
    locate_point,
    spawn_secondary,
)

__version__ = "0.1.0"

__all__ = [
    "Ray",
    "ScaledBasis",
    "Vec2",
    "Vec3",
    "build_scaled_basis",
    "det2",
    "orthonormal_basis",
    "project_point",
    "BOUNDARY_REF",
    "CONSTRAINED_BIT",
    "LAYOUT_BYTES",
    "LAYOUTS",
    "NO_TET",
    "TET16",
    "TET20",
    "TET32",
    "CompactMesh",
    "ConstrainedFace",
    "RawTetMesh",
    "SceneTriangleSoup",
    "compute_xor_sum",
    "detect_regions",
    "encode",
    "recover_fourth_vertex",
    "relayout",
    "reorder",
    "validate",
    "HitRecord",
    "Miss",
    "cast_ray",
    "cast_ray_auto",
    "cast_shadow_ray",
    "get_exit_face",
    "init_traversal",
    "locate_point",
    "spawn_secondary",
]
