"""Planar rigid-body geometry for layout solving.

Poses live in SE(2) and are written (x, y, theta) with theta in radians,
counter-clockwise, zero facing +x.  Object footprints are rectangles centered
on their pose.  Collision pre-checks use the axis-aligned proxy box spanned by
the rotated footprint; exact overlap uses convex polygon clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Map an angle in radians to the interval (-pi, pi]."""
    a = math.fmod(theta, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (x, y, theta).  theta is stored unnormalized."""

    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @staticmethod
    def from_array(v) -> "Pose2D":
        return Pose2D(float(v[0]), float(v[1]), float(v[2]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @property
    def heading(self) -> np.ndarray:
        """Unit vector the pose faces: (cos theta, sin theta)."""
        return np.array([math.cos(self.theta), math.sin(self.theta)])


IDENTITY = Pose2D(0.0, 0.0, 0.0)


def compose(outer: Pose2D, inner: Pose2D) -> Pose2D:
    """Pose composition: apply `inner` in the frame defined by `outer`.

    (x, y) = outer.xy + R(outer.theta) @ inner.xy, angles add.
    """
    c, s = math.cos(outer.theta), math.sin(outer.theta)
    return Pose2D(
        outer.x + c * inner.x - s * inner.y,
        outer.y + s * inner.x + c * inner.y,
        outer.theta + inner.theta,
    )


def invert(p: Pose2D) -> Pose2D:
    """Inverse pose: compose(invert(p), p) is the identity."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2D(-(c * p.x + s * p.y), s * p.x - c * p.y, -p.theta)


def relative(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of `b` expressed in the frame of `a`: invert(a) composed with b."""
    return compose(invert(a), b)


def transform_point(pose: Pose2D, point) -> np.ndarray:
    """Map a point from the pose's local frame to the world frame."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    px, py = float(point[0]), float(point[1])
    return np.array([pose.x + c * px - s * py, pose.y + s * px + c * py])


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] on one axis."""

    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def overlap(self, other: "Interval") -> float:
        """Signed overlap length; negative when the intervals are disjoint."""
        return min(self.hi, other.hi) - max(self.lo, other.lo)

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass(frozen=True)
class FootprintBox:
    """Rectangle footprint: pose plus half sizes along the local axes.

    half_l spans local +x/-x, half_w spans local +y/-y.
    """

    pose: Pose2D
    half_l: float
    half_w: float

    def __post_init__(self):
        if not (self.half_l > 0.0 and self.half_w > 0.0):
            raise ValueError("footprint half sizes must be positive")

    @property
    def area(self) -> float:
        return 4.0 * self.half_l * self.half_w


def footprint_extents(box: FootprintBox) -> tuple[float, float]:
    """Full extents (e_x, e_y) of the rotated footprint's bounding box.

    e_x = l*|cos t| + w*|sin t|, e_y = l*|sin t| + w*|cos t| for size (l, w).
    """
    c = abs(math.cos(box.pose.theta))
    s = abs(math.sin(box.pose.theta))
    l, w = 2.0 * box.half_l, 2.0 * box.half_w
    return l * c + w * s, l * s + w * c


def axis_bounds(box: FootprintBox) -> tuple[Interval, Interval]:
    """Axis-aligned proxy bounds: center +/- half extents on each axis."""
    ex, ey = footprint_extents(box)
    return (
        Interval(box.pose.x - 0.5 * ex, box.pose.x + 0.5 * ex),
        Interval(box.pose.y - 0.5 * ey, box.pose.y + 0.5 * ey),
    )


def collide_proxy(a: FootprintBox, b: FootprintBox) -> bool:
    """True when the axis-aligned proxies overlap with positive area.

    Touching boundaries (zero-length overlap) do not count as collision.
    """
    ax, ay = axis_bounds(a)
    bx, by = axis_bounds(b)
    return ax.overlap(bx) > 0.0 and ay.overlap(by) > 0.0


# Corner offsets in the local frame, counter-clockwise starting at (+, +).
_CORNER_SIGNS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def corners(box: FootprintBox) -> np.ndarray:
    """World-frame corners of the footprint, counter-clockwise, shape (4, 2)."""
    c, s = math.cos(box.pose.theta), math.sin(box.pose.theta)
    out = np.empty((4, 2))
    for k, (sx, sy) in enumerate(_CORNER_SIGNS):
        ox, oy = sx * box.half_l, sy * box.half_w
        out[k, 0] = box.pose.x + c * ox - s * oy
        out[k, 1] = box.pose.y + s * ox + c * oy
    return out


def _polygon_area(points: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as an (n, 2) vertex array."""
    if len(points) < 3:
        return 0.0
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with counter-clockwise vertices, shape (n, 2)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        # Convexity and orientation: consecutive edge cross products must not
        # turn clockwise (collinear vertices are tolerated).
        n = len(v)
        for i in range(n):
            e1 = v[(i + 1) % n] - v[i]
            e2 = v[(i + 2) % n] - v[(i + 1) % n]
            if e1[0] * e2[1] - e1[1] * e2[0] < -1e-9:
                raise ValueError("vertices must be convex and counter-clockwise")

    @staticmethod
    def from_box(box: FootprintBox) -> "ConvexPolygon":
        return ConvexPolygon(corners(box))

    @property
    def area(self) -> float:
        return _polygon_area(self.vertices)


def _clip_halfplane(points: list, a, b) -> list:
    """Keep the part of a polygon on the left of the directed edge a->b."""
    out = []
    n = len(points)
    ex, ey = b[0] - a[0], b[1] - a[1]
    for i in range(n):
        p = points[i]
        q = points[(i + 1) % n]
        dp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
        dq = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
        if dp >= 0.0:
            out.append(p)
            if dq < 0.0:
                t = dp / (dp - dq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif dq >= 0.0:
            t = dp / (dp - dq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def polygon_intersection_area(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Exact intersection area of two convex polygons.

    Clips `a` successively against each half-plane of `b` and measures the
    remainder.  Degenerate intersections (points, segments) have zero area.
    """
    pts = [tuple(p) for p in a.vertices]
    vb = b.vertices
    n = len(vb)
    for i in range(n):
        if len(pts) < 3:
            return 0.0
        pts = _clip_halfplane(pts, vb[i], vb[(i + 1) % n])
    if len(pts) < 3:
        return 0.0
    return _polygon_area(np.asarray(pts))


def signed_distance_point_box(point, box: FootprintBox) -> float:
    """Signed distance from a point to the box boundary.

    Positive outside, zero on the boundary, negative inside.
    """
    c, s = math.cos(box.pose.theta), math.sin(box.pose.theta)
    dx = float(point[0]) - box.pose.x
    dy = float(point[1]) - box.pose.y
    ux = c * dx + s * dy
    uy = -s * dx + c * dy
    qx = abs(ux) - box.half_l
    qy = abs(uy) - box.half_w
    outside = math.hypot(max(qx, 0.0), max(qy, 0.0))
    return outside + min(max(qx, qy), 0.0)


# Interior edge samples at odd eighths keep the probe set symmetric and dense
# enough that the separated-box minimum is still attained at a vertex probe.
_EDGE_FRACTIONS = (0.125, 0.375, 0.625, 0.875)


def boundary_sample_points(box: FootprintBox) -> np.ndarray:
    """Probe points on the box boundary: 4 corners + 4 samples per edge."""
    cs = corners(box)
    pts = [cs[k] for k in range(4)]
    for k in range(4):
        p, q = cs[k], cs[(k + 1) % 4]
        for t in _EDGE_FRACTIONS:
            pts.append(p + t * (q - p))
    return np.asarray(pts)


def min_boundary_distance(a: FootprintBox, b: FootprintBox) -> float:
    """Smallest boundary-to-boundary signed distance between two boxes.

    Minimizes the point-to-box signed distance over boundary probes of both
    boxes, in both directions.  Exact for disjoint boxes (the minimum is
    attained at a corner probe); approximate when the boxes interpenetrate.
    """
    best = math.inf
    for p in boundary_sample_points(a):
        best = min(best, signed_distance_point_box(p, b))
    for p in boundary_sample_points(b):
        best = min(best, signed_distance_point_box(p, a))
    return best
