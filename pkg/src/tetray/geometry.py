"""Vector math, rays, and the scaled 2-D projection basis.

The traversal engine works in a 2-D coordinate system derived from the ray:
both basis vectors are orthogonal to the ray direction, and they are scaled
(not normalized) so that projecting a 3-D point costs 3 multiplications and
3 additions/subtractions, plus 2 subtractions for the projected origin.
All functions here are dtype-agnostic: they run on plain floats, numpy
float32/float64 scalars, or any duck-typed numeric (used by the counting
instrumentation in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __add__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def __mul__(self, s) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __getitem__(self, i: int):
        return (self.x, self.y, self.z)[i]

    def dot(self, o: "Vec3"):
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o: "Vec3") -> "Vec3":
        return Vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )

    def norm(self) -> float:
        return math.sqrt(float(self.dot(self)))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def is_zero(self) -> bool:
        return self.x == 0.0 and self.y == 0.0 and self.z == 0.0


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float


@dataclass(frozen=True)
class Ray:
    """A ray; the direction need not be unit length."""

    origin: Vec3
    direction: Vec3


@dataclass(frozen=True)
class ScaledBasis:
    """Ray-derived 2-D basis with exact-zero/exact-one components.

    u[min_axis] == 0 and u[other_axis] == 1 exactly, |v[min_axis]| == 1
    exactly (sign recorded in sign_v_min), and the frame (u, v, direction)
    is right-handed: det2 of two projected vectors has the sign of
    (a x b) . direction.
    """

    min_axis: int
    max_axis: int
    other_axis: int
    u: Vec3
    v: Vec3
    sign_v_min: int
    projected_origin: Vec2


def det2(a: Vec2, b: Vec2):
    """2-D determinant a.x*b.y - a.y*b.x."""
    return a.x * b.y - a.y * b.x


def orthonormal_basis(direction: Vec3) -> tuple[Vec3, Vec3]:
    """Branchless orthonormal frame for a direction.

    Returns unit vectors (u, v), both orthogonal to the direction and to
    each other, with (u x v) . direction > 0. Used as the reference frame
    the scaled basis is checked against.
    """
    if direction.is_zero():
        raise ValueError("direction must be non-zero")
    d = direction.normalized()
    s = math.copysign(1.0, d.z)
    a = -1.0 / (s + d.z)
    b = d.x * d.y * a
    u = Vec3(1.0 + s * d.x * d.x * a, s * b, -s * d.x)
    v = Vec3(b, s + d.y * d.y * a, -d.y)
    return u, v


def pick_axes(nx, ny, nz) -> tuple[int, int, int]:
    """(min, max, other) axis indices by absolute component magnitude.

    Ties break to the lowest index; max is chosen among the two non-min
    axes so the pair is always distinct.
    """
    ax = -nx if nx < 0 else nx
    ay = -ny if ny < 0 else ny
    az = -nz if nz < 0 else nz
    a = (ax, ay, az)
    mn = 0
    if a[1] < a[mn]:
        mn = 1
    if a[2] < a[mn]:
        mn = 2
    r0, r1 = ((1, 2), (0, 2), (0, 1))[mn]
    mx = r0 if a[r0] >= a[r1] else r1
    return mn, mx, 3 - mn - mx


def _make_projector(mn: int, mx: int, ot: int, positive: bool):
    # One specialization per (min, max, sign) case; the component indices
    # and the sign of the q[min] term are baked in, so a projection is
    # exactly 3 multiplications and 5 additions/subtractions.
    if positive:

        def proj(u_max, v_max, v_other, po_x, po_y, q):
            x = (u_max * q[mx] + q[ot]) - po_x
            y = ((v_max * q[mx] + v_other * q[ot]) + q[mn]) - po_y
            return x, y

    else:

        def proj(u_max, v_max, v_other, po_x, po_y, q):
            x = (u_max * q[mx] + q[ot]) - po_x
            y = ((v_max * q[mx] + v_other * q[ot]) - q[mn]) - po_y
            return x, y

    return proj


_PROJECTORS = {
    (mn, mx, sgn): _make_projector(mn, mx, 3 - mn - mx, sgn > 0)
    for mn in range(3)
    for mx in range(3)
    if mx != mn
    for sgn in (1, -1)
}


def build_scaled_basis(ray: Ray) -> ScaledBasis:
    """Construct the scaled 2-D basis for a ray.

    u is built by zeroing the min axis and dividing by the max component
    (then sign-flipped if needed so u[other] == +1); v is the cross product
    n x u scaled by 1/|t[min]| so the frame stays right-handed and
    |v[min]| == 1 exactly. The projected ray origin is precomputed so the
    hot loop translates in 2-D.
    """
    n = ray.direction
    if n.is_zero():
        raise ValueError("ray direction must be non-zero")
    mn, mx, ot = pick_axes(n.x, n.y, n.z)

    # First basis vector: u[mn] = 0, u[(mn+1)%3] = n[(mn-1)%3]/n[mx],
    # u[(mn-1)%3] = -n[(mn+1)%3]/n[mx]. Exactly one of the two computed
    # entries lands on the other axis with value +-1; after normalizing
    # that sign to +1 both cases collapse to u[mx] = -n[ot]/n[mx].
    u_max = -(n[ot] / n[mx])
    uc = [None, None, None]
    uc[mn] = 0.0
    uc[ot] = 1.0
    uc[mx] = u_max
    u = Vec3(uc[0], uc[1], uc[2])

    t = n.cross(u)
    t_min = t[mn]
    if t_min > 0:
        sgn = 1
        t_abs = t_min
    else:
        sgn = -1
        t_abs = -t_min
    vc = [None, None, None]
    vc[mn] = 1.0 if sgn > 0 else -1.0
    vc[mx] = t[mx] / t_abs
    vc[ot] = t[ot] / t_abs
    v = Vec3(vc[0], vc[1], vc[2])

    o = ray.origin
    po_x, po_y = _PROJECTORS[(mn, mx, sgn)](
        u_max, vc[mx], vc[ot], 0.0, 0.0, (o.x, o.y, o.z)
    )
    return ScaledBasis(
        min_axis=mn,
        max_axis=mx,
        other_axis=ot,
        u=u,
        v=v,
        sign_v_min=sgn,
        projected_origin=Vec2(po_x, po_y),
    )


def project_point(basis: ScaledBasis, point: Vec3) -> Vec2:
    """Project a 3-D point into the basis plane (origin-relative)."""
    proj = _PROJECTORS[(basis.min_axis, basis.max_axis, basis.sign_v_min)]
    x, y = proj(
        basis.u[basis.max_axis],
        basis.v[basis.max_axis],
        basis.v[basis.other_axis],
        basis.projected_origin.x,
        basis.projected_origin.y,
        (point.x, point.y, point.z),
    )
    return Vec2(x, y)
