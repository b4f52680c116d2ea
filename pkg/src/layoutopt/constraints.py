"""Differentiable penalty terms over planar footprints.

Every loss returns a LossValue: a scalar plus analytic partial derivatives
with respect to the poses involved (arrays [d/dx, d/dy, d/dtheta]) and any
scalar constraint parameters.  Gradients are hand-derived; kinks coming from
hinges, absolute values, and min/max selections use the subgradient that is
zero at the kink (hinges) or the tie-broken branch (selections).

Two aggregation levels mirror the pose parameterization: unit-local terms are
evaluated in the unit frame and never touch the unit pose; scene-level terms
see independent assets and whole units through their enclosing oriented box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    FootprintBox,
    Pose2D,
    boundary_sample_points,
    corners,
)
from .scene_model import (
    DIRECTIONAL_KINDS,
    Relation,
    Room,
    SceneSpec,
    Unit,
    around_groups,
)

FACING_EPS = 1e-8


@dataclass
class LossValue:
    """Scalar penalty with partial derivatives keyed by slot name."""

    value: float
    grads: dict = field(default_factory=dict)
    terms: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Weights:
    """Multipliers for the three penalty families."""

    collision: float = 1.0
    relation: float = 1.0
    boundary: float = 1.0


def _zero3() -> np.ndarray:
    return np.zeros(3)


def _half_extent_derivs(box: FootprintBox):
    """Half extents (ax, ay) of the rotated footprint and their theta
    derivatives.  ax = hl*|cos t| + hw*|sin t|, ay = hl*|sin t| + hw*|cos t|."""
    c = math.cos(box.pose.theta)
    s = math.sin(box.pose.theta)
    hl, hw = box.half_l, box.half_w
    sc = math.copysign(1.0, c)
    ss = math.copysign(1.0, s)
    ax = hl * abs(c) + hw * abs(s)
    ay = hl * abs(s) + hw * abs(c)
    dax = -hl * sc * s + hw * ss * c
    day = hl * ss * c - hw * sc * s
    return ax, ay, dax, day


# ---------------------------------------------------------------------------
# Collision and boundary
# ---------------------------------------------------------------------------


def collision_loss(a: FootprintBox, b: FootprintBox) -> LossValue:
    """Overlap penalty on axis-aligned proxies.

    value = IoU - (d^2 / c^2) * rho, where rho is intersection over the
    smaller proxy area, d the center distance, and c the diagonal of the
    smallest axis-aligned box enclosing both proxies.  Zero exactly when the
    proxies are disjoint; bounded below by -1.
    """
    ax_a, ay_a, dax_a, day_a = _half_extent_derivs(a)
    ax_b, ay_b, dax_b, day_b = _half_extent_derivs(b)

    def axis(ca, ha, cb, hb):
        alo, ahi = ca - ha, ca + ha
        blo, bhi = cb - hb, cb + hb
        ov = min(ahi, bhi) - max(alo, blo)
        span = max(ahi, bhi) - min(alo, blo)
        a_hi = ahi <= bhi
        a_lo = alo >= blo
        # (d ov / d center_a, d ov / d half_a, same for b)
        dov = (
            (1.0 if a_hi else 0.0) - (1.0 if a_lo else 0.0),
            (1.0 if a_hi else 0.0) + (1.0 if a_lo else 0.0),
            (0.0 if a_hi else 1.0) - (0.0 if a_lo else 1.0),
            (0.0 if a_hi else 1.0) + (0.0 if a_lo else 1.0),
        )
        s_hi = ahi >= bhi
        s_lo = alo <= blo
        dspan = (
            (1.0 if s_hi else 0.0) - (1.0 if s_lo else 0.0),
            (1.0 if s_hi else 0.0) + (1.0 if s_lo else 0.0),
            (0.0 if s_hi else 1.0) - (0.0 if s_lo else 1.0),
            (0.0 if s_hi else 1.0) + (0.0 if s_lo else 1.0),
        )
        return ov, span, dov, dspan

    ovx, cx, dovx, dcx = axis(a.pose.x, ax_a, b.pose.x, ax_b)
    ovy, cy, dovy, dcy = axis(a.pose.y, ay_a, b.pose.y, ay_b)
    px, py = max(ovx, 0.0), max(ovy, 0.0)
    inter = px * py

    area_a, area_b = 4.0 * ax_a * ay_a, 4.0 * ax_b * ay_b
    union = area_a + area_b - inter
    min_area = area_a if area_a <= area_b else area_b
    a_is_min = area_a <= area_b

    dx = a.pose.x - b.pose.x
    dy = a.pose.y - b.pose.y
    d2 = dx * dx + dy * dy
    c2 = cx * cx + cy * cy

    iou = inter / union
    rho = inter / min_area
    value = iou - (d2 / c2) * rho

    darea_a = 4.0 * (dax_a * ay_a + ax_a * day_a)  # d area_a / d theta_a
    darea_b = 4.0 * (dax_b * ay_b + ax_b * day_b)

    gate_x = 1.0 if ovx > 0.0 else 0.0
    gate_y = 1.0 if ovy > 0.0 else 0.0

    ga, gb = _zero3(), _zero3()
    # Per-variable derivative bundles: (d inter, d area_a, d area_b, d d2, d c2).
    rows = (
        (ga, 0, gate_x * py * dovx[0], 0.0, 0.0, 2.0 * dx, 2.0 * cx * dcx[0]),
        (ga, 1, gate_y * px * dovy[0], 0.0, 0.0, 2.0 * dy, 2.0 * cy * dcy[0]),
        (
            ga,
            2,
            gate_x * py * dovx[1] * dax_a + gate_y * px * dovy[1] * day_a,
            darea_a,
            0.0,
            0.0,
            2.0 * cx * dcx[1] * dax_a + 2.0 * cy * dcy[1] * day_a,
        ),
        (gb, 0, gate_x * py * dovx[2], 0.0, 0.0, -2.0 * dx, 2.0 * cx * dcx[2]),
        (gb, 1, gate_y * px * dovy[2], 0.0, 0.0, -2.0 * dy, 2.0 * cy * dcy[2]),
        (
            gb,
            2,
            gate_x * py * dovx[3] * dax_b + gate_y * px * dovy[3] * day_b,
            0.0,
            darea_b,
            0.0,
            2.0 * cx * dcx[3] * dax_b + 2.0 * cy * dcy[3] * day_b,
        ),
    )
    for out, idx, d_inter, d_area_a, d_area_b, d_d2, d_c2 in rows:
        d_union = d_area_a + d_area_b - d_inter
        d_iou = (d_inter * union - inter * d_union) / (union * union)
        d_min = d_area_a if a_is_min else d_area_b
        d_rho = (d_inter * min_area - inter * d_min) / (min_area * min_area)
        d_ratio = (d_d2 * c2 - d2 * d_c2) / (c2 * c2)
        out[idx] = d_iou - d_ratio * rho - (d2 / c2) * d_rho

    return LossValue(value, {"a": ga, "b": gb})


def boundary_loss(box: FootprintBox, room: Room) -> LossValue:
    """L1 excursion of the footprint corners outside the room rectangle."""
    c = math.cos(box.pose.theta)
    s = math.sin(box.pose.theta)
    limits = (room.length, room.width)
    value = 0.0
    g = _zero3()
    for sx, sy in ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)):
        ox, oy = sx * box.half_l, sy * box.half_w
        corner = (box.pose.x + c * ox - s * oy, box.pose.y + s * ox + c * oy)
        dtheta = (-s * ox - c * oy, c * ox - s * oy)
        for axis_i in (0, 1):
            v = corner[axis_i]
            if v < 0.0:
                value += -v
                g[axis_i] -= 1.0
                g[2] -= dtheta[axis_i]
            elif v > limits[axis_i]:
                value += v - limits[axis_i]
                g[axis_i] += 1.0
                g[2] += dtheta[axis_i]
    return LossValue(value, {"box": g})


# ---------------------------------------------------------------------------
# Pairwise relation penalties
# ---------------------------------------------------------------------------


def distance_loss(a: FootprintBox, b: FootprintBox, d_star: float) -> LossValue:
    """Squared error between center distance and the target d_star."""
    dx = a.pose.x - b.pose.x
    dy = a.pose.y - b.pose.y
    dist = math.hypot(dx, dy)
    r = dist - d_star
    ga, gb = _zero3(), _zero3()
    if dist > 1e-12:
        k = 2.0 * r / dist
        ga[0], ga[1] = k * dx, k * dy
        gb[0], gb[1] = -k * dx, -k * dy
    return LossValue(r * r, {"a": ga, "b": gb, "d": -2.0 * r})


def _point_box_sdf_grads(point_box: FootprintBox, offset, other: FootprintBox):
    """Signed distance from a boundary point of `point_box` to `other`,
    with derivatives w.r.t. both poses.

    `offset` is the probe point in point_box's local frame.
    """
    pp = point_box.pose
    cp, sp = math.cos(pp.theta), math.sin(pp.theta)
    qx = pp.x + cp * offset[0] - sp * offset[1]
    qy = pp.y + sp * offset[0] + cp * offset[1]

    po = other.pose
    co, so = math.cos(po.theta), math.sin(po.theta)
    dx, dy = qx - po.x, qy - po.y
    ux = co * dx + so * dy
    uy = -so * dx + co * dy
    ex = abs(ux) - other.half_l
    ey = abs(uy) - other.half_w

    # d value / d (ux, uy)
    if ex > 0.0 or ey > 0.0:
        px_, py_ = max(ex, 0.0), max(ey, 0.0)
        norm = math.hypot(px_, py_)
        gux = math.copysign(1.0, ux) * px_ / norm
        guy = math.copysign(1.0, uy) * py_ / norm
        value = norm
    else:
        if ex >= ey:
            gux, guy = math.copysign(1.0, ux), 0.0
            value = ex
        else:
            gux, guy = 0.0, math.copysign(1.0, uy)
            value = ey

    # World-frame gradient at the probe point.
    gq = np.array([co * gux - so * guy, so * gux + co * guy])
    g_point = np.array(
        [gq[0], gq[1], gq[0] * (-sp * offset[0] - cp * offset[1]) + gq[1] * (cp * offset[0] - sp * offset[1])]
    )
    g_other = np.array([-gq[0], -gq[1], gux * uy - guy * ux])
    return value, g_point, g_other


def gap_loss(a: FootprintBox, b: FootprintBox, g: float) -> LossValue:
    """Squared error between the smallest boundary separation and target g.

    The separation is the minimum signed point-to-box distance over boundary
    probes of both boxes; derivatives follow the winning probe.
    """
    best = math.inf
    best_grads = None
    for box, other, slot_box, slot_other in ((a, b, "a", "b"), (b, a, "b", "a")):
        cb, sb = math.cos(box.pose.theta), math.sin(box.pose.theta)
        for p in boundary_sample_points(box):
            # Back out the probe's local offset to chain through the pose.
            wx, wy = p[0] - box.pose.x, p[1] - box.pose.y
            offset = (cb * wx + sb * wy, -sb * wx + cb * wy)
            value, g_point, g_other = _point_box_sdf_grads(box, offset, other)
            if value < best:
                best = value
                best_grads = {slot_box: g_point, slot_other: g_other}
    r = best - g
    out = {k: 2.0 * r * v for k, v in best_grads.items()}
    out["g"] = -2.0 * r
    return LossValue(r * r, out)


_WALL_RULES = {
    # wall: (axis index, sign of half-extent in target, wall coordinate, theta*)
    "L": (0, 1.0, 0.0, 0.0),
    "R": (0, -1.0, None, math.pi),
    "B": (1, 1.0, 0.0, 0.5 * math.pi),
    "T": (1, -1.0, None, -0.5 * math.pi),
}


def against_wall_loss(box: FootprintBox, wall: str, room: Room) -> LossValue:
    """Flush-to-wall penalty: squared offset from the wall by the footprint's
    half extent, plus 1 - cos(theta - theta_wall)."""
    axis_i, sign, base, theta_star = _WALL_RULES[wall]
    ax, ay, dax, day = _half_extent_derivs(box)
    half = ax if axis_i == 0 else ay
    dhalf = dax if axis_i == 0 else day
    if base is None:
        base = room.length if axis_i == 0 else room.width
    target = base + sign * half
    coord = box.pose.x if axis_i == 0 else box.pose.y
    r = coord - target
    dth = box.pose.theta - theta_star
    value = r * r + 1.0 - math.cos(dth)
    g = _zero3()
    g[axis_i] = 2.0 * r
    g[2] = 2.0 * r * (-sign * dhalf) + math.sin(dth)
    return LossValue(value, {"box": g})


_CORNER_SIGNS_XY = {"BL": (1.0, 1.0), "BR": (-1.0, 1.0), "TR": (-1.0, -1.0), "TL": (1.0, -1.0)}


def corner_loss(box: FootprintBox, corner_tag: str, wall: str, room: Room) -> LossValue:
    """Tuck-into-corner penalty: squared offsets from both adjacent walls by
    the half extents, plus orientation toward the named wall's target angle."""
    sx, sy = _CORNER_SIGNS_XY[corner_tag]
    ax, ay, dax, day = _half_extent_derivs(box)
    x_base = 0.0 if sx > 0.0 else room.length
    y_base = 0.0 if sy > 0.0 else room.width
    x_target = x_base + sx * ax
    y_target = y_base + sy * ay
    theta_star = _WALL_RULES[wall][3]
    rx = box.pose.x - x_target
    ry = box.pose.y - y_target
    dth = box.pose.theta - theta_star
    value = rx * rx + ry * ry + 1.0 - math.cos(dth)
    g = np.array(
        [
            2.0 * rx,
            2.0 * ry,
            2.0 * rx * (-sx * dax) + 2.0 * ry * (-sy * day) + math.sin(dth),
        ]
    )
    return LossValue(value, {"box": g})


def facing_loss(a: FootprintBox, b: FootprintBox) -> LossValue:
    """1 - cosine between a's heading and the direction from a to b."""
    ca, sa = math.cos(a.pose.theta), math.sin(a.pose.theta)
    dx = b.pose.x - a.pose.x
    dy = b.pose.y - a.pose.y
    n = math.hypot(dx, dy)
    ga, gb = _zero3(), _zero3()
    if n < 1e-12:
        return LossValue(1.0, {"a": ga, "b": gb})
    denom = n + FACING_EPS
    f = ca * dx + sa * dy
    value = 1.0 - f / denom
    # d value / d (dx, dy)
    gd = np.array(
        [
            -(ca * denom - f * dx / n) / (denom * denom),
            -(sa * denom - f * dy / n) / (denom * denom),
        ]
    )
    ga[0], ga[1] = -gd[0], -gd[1]
    ga[2] = -(-sa * dx + ca * dy) / denom
    gb[0], gb[1] = gd[0], gd[1]
    return LossValue(value, {"a": ga, "b": gb})


# Directional side rules: primary axis (0 = target-local x, 1 = y) and the
# sign sigma such that the hinge reads sigma * coord + r + e <= 0 at zero loss.
_SIDE_RULES = {
    "left_of": (0, 1.0),
    "right_of": (0, -1.0),
    "behind_of": (1, 1.0),
    "in_front_of": (1, -1.0),
}


def directional_loss(src: FootprintBox, tgt: FootprintBox, direction: str, p: float) -> LossValue:
    """Side placement in the target's frame.

    The source center, expressed in the target frame, must clear the shared
    half extents along the side's axis (squared hinge) and line up on the
    perpendicular axis at the fraction p between the two touch extremes
    (absolute deviation).  Sides: left/right along target-local x,
    behind/front along target-local y.
    """
    axis_i, sigma = _SIDE_RULES[direction]
    ct, st = math.cos(tgt.pose.theta), math.sin(tgt.pose.theta)
    dx = src.pose.x - tgt.pose.x
    dy = src.pose.y - tgt.pose.y
    xp = ct * dx + st * dy
    yp = -st * dx + ct * dy

    delta = src.pose.theta - tgt.pose.theta
    c, s = math.cos(delta), math.sin(delta)
    sc = math.copysign(1.0, c)
    ss = math.copysign(1.0, s)
    rx = src.half_l * abs(c) + src.half_w * abs(s)
    ry = src.half_l * abs(s) + src.half_w * abs(c)
    drx = -src.half_l * sc * s + src.half_w * ss * c
    dry = src.half_l * ss * c - src.half_w * sc * s

    ex, ey = tgt.half_l, tgt.half_w
    coords = (xp, yp)
    rr = (rx, ry)
    ee = (ex, ey)
    drr = (drx, dry)
    other = 1 - axis_i

    z = sigma * coords[axis_i] + rr[axis_i] + ee[axis_i]
    bar = (2.0 * p - 1.0) * (ee[other] - rr[other])
    w = coords[other] - bar

    hinge = max(z, 0.0)
    value = hinge * hinge + abs(w)

    h2 = 2.0 * hinge
    sw = math.copysign(1.0, w) if w != 0.0 else 0.0

    # Derivatives of the target-frame coordinates.
    dxp_src = np.array([ct, st])
    dyp_src = np.array([-st, ct])
    dxp_tth = yp
    dyp_tth = -xp
    dcoord_src = (dxp_src, dyp_src)
    dcoord_tth = (dxp_tth, dyp_tth)

    gsrc, gtgt = _zero3(), _zero3()
    # Hinge term.
    gsrc[:2] += h2 * sigma * dcoord_src[axis_i]
    gtgt[:2] -= h2 * sigma * dcoord_src[axis_i]
    gsrc[2] += h2 * drr[axis_i]
    gtgt[2] += h2 * (sigma * dcoord_tth[axis_i] - drr[axis_i])
    # Alignment term; bar depends on theta through the source's half extent.
    gsrc[:2] += sw * dcoord_src[other]
    gtgt[:2] -= sw * dcoord_src[other]
    gsrc[2] += sw * (2.0 * p - 1.0) * drr[other]
    gtgt[2] += sw * (dcoord_tth[other] - (2.0 * p - 1.0) * drr[other])

    gp = sw * (-2.0) * (ee[other] - rr[other])
    return LossValue(value, {"src": gsrc, "tgt": gtgt, "p": gp})


def angle_offset_loss(a: FootprintBox, b: FootprintBox, alpha: float) -> LossValue:
    """1 - cos of the heading difference minus the target offset alpha."""
    d = a.pose.theta - b.pose.theta - alpha
    sd = math.sin(d)
    ga, gb = _zero3(), _zero3()
    ga[2] = sd
    gb[2] = -sd
    return LossValue(1.0 - math.cos(d), {"a": ga, "b": gb, "alpha": -sd})


def placement_loss(box: FootprintBox, axis: str, target: float, room: Room, margin: float) -> LossValue:
    """Squared hinge on the center coordinate's deviation beyond margin*span."""
    axis_i = 0 if axis == "x" else 1
    span = room.length if axis_i == 0 else room.width
    coord = box.pose.x if axis_i == 0 else box.pose.y
    dev = coord - target
    z = abs(dev) - margin * span
    hinge = max(z, 0.0)
    g = _zero3()
    sd = math.copysign(1.0, dev) if dev != 0.0 else 0.0
    g[axis_i] = 2.0 * hinge * sd
    return LossValue(hinge * hinge, {"box": g, "target": -2.0 * hinge * sd})


def around_loss(sources: list, focal: FootprintBox, sweep: float, center: float) -> LossValue:
    """Even angular spread around a focal object plus a circular-mean
    orientation target.

    Directions to the sources, measured in the focal frame, are sorted; the
    consecutive gaps should all equal sweep/(N-1).  Source headings relative
    to the focal should average (in the embedded sin/cos sense) to the mean
    resultant of N headings evenly spread over the sweep centered at `center`.
    """
    n = len(sources)
    if n < 2:
        raise ValueError("around needs at least two sources")
    cf = math.cos(focal.pose.theta)
    sf = math.sin(focal.pose.theta)

    phis = np.empty(n)
    dphi_sources = np.zeros((n, 2))
    for i, box in enumerate(sources):
        dx = box.pose.x - focal.pose.x
        dy = box.pose.y - focal.pose.y
        xp = cf * dx + sf * dy
        yp = -sf * dx + cf * dy
        r2 = xp * xp + yp * yp
        phis[i] = math.atan2(yp, xp)
        if r2 > 1e-18:
            dphi_dxp, dphi_dyp = -yp / r2, xp / r2
            dphi_sources[i, 0] = dphi_dxp * cf + dphi_dyp * (-sf)
            dphi_sources[i, 1] = dphi_dxp * sf + dphi_dyp * cf
    order = np.argsort(phis, kind="stable")
    sorted_phi = phis[order]
    t_gap = sweep / (n - 1)
    resid = np.diff(sorted_phi) - t_gap
    term1 = float(np.dot(resid, resid)) / (n - 1)

    g_sources = np.zeros((n, 3))
    g_focal = _zero3()
    dterm1_sorted = np.zeros(n)
    for k in range(n):
        left = resid[k - 1] if k > 0 else 0.0
        right = resid[k] if k < n - 1 else 0.0
        dterm1_sorted[k] = 2.0 * (left - right) / (n - 1)
    for k in range(n):
        i = int(order[k])
        g_sources[i, :2] += dterm1_sorted[k] * dphi_sources[i]
        g_focal[:2] -= dterm1_sorted[k] * dphi_sources[i]
        g_focal[2] += dterm1_sorted[k] * (-1.0)
    d_term1_dsweep = -2.0 * float(resid.sum()) / ((n - 1) * (n - 1))

    # Orientation embedding: mean of (sin, cos) of relative headings.
    rel = np.array([box.pose.theta - focal.pose.theta for box in sources])
    emb = np.array([np.sin(rel).mean(), np.cos(rel).mean()])
    delta = sweep / (2.0 * (n - 1))
    if abs(delta) < 1e-9:
        m_res = 1.0
        dm_ddelta = 0.0
    else:
        m_res = math.sin(n * delta) / (n * math.sin(delta))
        dm_ddelta = (
            n * math.cos(n * delta) * math.sin(delta) - math.sin(n * delta) * math.cos(delta)
        ) / (n * math.sin(delta) ** 2)
    target_emb = m_res * np.array([math.sin(center), math.cos(center)])
    err = emb - target_emb
    term2 = float(np.dot(err, err))

    for i, box in enumerate(sources):
        de = np.array([math.cos(rel[i]), -math.sin(rel[i])]) / n
        g_sources[i, 2] += 2.0 * float(np.dot(err, de))
        g_focal[2] -= 2.0 * float(np.dot(err, de))
    d_term2_dcenter = -2.0 * m_res * float(
        err[0] * math.cos(center) - err[1] * math.sin(center)
    )
    d_term2_dsweep = -2.0 * float(np.dot(err, np.array([math.sin(center), math.cos(center)]))) * (
        dm_ddelta / (2.0 * (n - 1))
    )

    return LossValue(
        term1 + term2,
        {
            "sources": g_sources,
            "focal": g_focal,
            "sweep": d_term1_dsweep + d_term2_dsweep,
            "center": d_term2_dcenter,
        },
    )


# ---------------------------------------------------------------------------
# Relation dispatch over scene entities
# ---------------------------------------------------------------------------


def box_from_array(arr, half_l: float, half_w: float) -> FootprintBox:
    return FootprintBox(Pose2D(float(arr[0]), float(arr[1]), float(arr[2])), half_l, half_w)


def asset_box(spec: SceneSpec, asset_id: str, pose_arr) -> FootprintBox:
    a = spec.asset(asset_id)
    return box_from_array(pose_arr, a.half_l, a.half_w)


def unit_local_boxes(spec: SceneSpec, unit: Unit, member_locals: dict) -> dict:
    """Unit-frame boxes: the anchor sits at the frame origin."""
    anchor = spec.asset(unit.anchor)
    boxes = {unit.anchor: FootprintBox(Pose2D(0.0, 0.0, 0.0), anchor.half_l, anchor.half_w)}
    for mid in unit.members:
        boxes[mid] = asset_box(spec, mid, member_locals[mid])
    return boxes


def unit_local_aabb(spec: SceneSpec, unit: Unit, member_locals: dict):
    """Enclosing axis-aligned box of the unit in its own frame.

    Returns (center offset (2,), half_l, half_w).  Treated as fixed geometry
    by the scene-level losses: derivatives flow through the unit pose only.
    """
    boxes = unit_local_boxes(spec, unit, member_locals)
    lo = np.array([math.inf, math.inf])
    hi = -lo.copy()
    for box in boxes.values():
        cs = corners(box)
        lo = np.minimum(lo, cs.min(axis=0))
        hi = np.maximum(hi, cs.max(axis=0))
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return center, float(half[0]), float(half[1])


def unit_obb(spec: SceneSpec, unit: Unit, unit_pose, member_locals: dict):
    """Scene-level stand-in box for a unit: its local enclosing box carried
    by the unit pose.  Returns (box, local center offset)."""
    offset, half_l, half_w = unit_local_aabb(spec, unit, member_locals)
    pose = Pose2D(float(unit_pose[0]), float(unit_pose[1]), float(unit_pose[2]))
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    center = Pose2D(
        pose.x + c * offset[0] - s * offset[1],
        pose.y + s * offset[0] + c * offset[1],
        pose.theta,
    )
    return FootprintBox(center, half_l, half_w), offset


def chain_obb_grad_to_unit(grad, offset, theta: float) -> np.ndarray:
    """Pull a gradient on the unit's stand-in box back to the unit pose."""
    c, s = math.cos(theta), math.sin(theta)
    out = np.array(
        [
            grad[0],
            grad[1],
            grad[0] * (-s * offset[0] - c * offset[1])
            + grad[1] * (c * offset[0] - s * offset[1])
            + grad[2],
        ]
    )
    return out


def resolved_param(rel: Relation, key: str, shared: dict) -> float:
    if rel.shared_param is not None:
        return shared[rel.shared_param]
    return rel.params[key]


def _relation_loss_on_boxes(
    rel: Relation, box_of, shared: dict, room: Room
) -> tuple[LossValue, dict]:
    """Evaluate one (non-around) relation given a box lookup.

    Returns the loss and a map slot -> entity id ('' for parameter slots that
    should be forwarded to the shared parameter).
    """
    kind = rel.kind
    if kind == "distance":
        lv = distance_loss(box_of(rel.source), box_of(rel.target), resolved_param(rel, "d", shared))
        return lv, {"a": rel.source, "b": rel.target, "d": "param"}
    if kind == "gap":
        lv = gap_loss(box_of(rel.source), box_of(rel.target), resolved_param(rel, "g", shared))
        return lv, {"a": rel.source, "b": rel.target, "g": "param"}
    if kind == "against_wall":
        wall = rel.target.removeprefix("wall:")
        lv = against_wall_loss(box_of(rel.source), wall, room)
        return lv, {"box": rel.source}
    if kind == "corner":
        tag = rel.target.removeprefix("corner:")
        lv = corner_loss(box_of(rel.source), tag, rel.params["wall"], room)
        return lv, {"box": rel.source}
    if kind == "facing":
        lv = facing_loss(box_of(rel.source), box_of(rel.target))
        return lv, {"a": rel.source, "b": rel.target}
    if kind in DIRECTIONAL_KINDS:
        lv = directional_loss(
            box_of(rel.source), box_of(rel.target), kind, resolved_param(rel, "p", shared)
        )
        return lv, {"src": rel.source, "tgt": rel.target, "p": "param"}
    if kind == "angle_offset":
        lv = angle_offset_loss(
            box_of(rel.source), box_of(rel.target), resolved_param(rel, "alpha", shared)
        )
        return lv, {"a": rel.source, "b": rel.target, "alpha": "param"}
    if kind == "h_place":
        lv = placement_loss(
            box_of(rel.source), "x", resolved_param(rel, "x", shared), room, rel.params["margin"]
        )
        return lv, {"box": rel.source, "target": "param"}
    if kind == "v_place":
        lv = placement_loss(
            box_of(rel.source), "y", resolved_param(rel, "y", shared), room, rel.params["margin"]
        )
        return lv, {"box": rel.source, "target": "param"}
    raise ValueError(f"unhandled relation kind {kind!r}")


def iter_relation_penalties(spec: SceneSpec, relations, box_of, shared: dict):
    """Yield (label, relation-or-group, LossValue, slot->entity map) for the
    given relations; around relations are grouped into joint penalties."""
    groups = around_groups(spec)
    emitted_groups = set()
    rel_index = {id(r): i for i, r in enumerate(spec.relations)}
    for rel in relations:
        if rel.kind == "around":
            key = (rel.scope, rel.unit, rel.target, rel.params["group"])
            if key in emitted_groups:
                continue
            emitted_groups.add(key)
            members = groups[key]
            sources = [box_of(r.source) for r in members]
            lv = around_loss(sources, box_of(rel.target), rel.params["sweep"], rel.params["center"])
            slots = {"sources": [r.source for r in members], "focal": rel.target}
            yield f"around:{key[3]}", members, lv, slots
            continue
        idx = rel_index.get(id(rel))
        label = f"relations[{idx}]" if idx is not None else f"{rel.kind}:{rel.source}"
        lv, slots = _relation_loss_on_boxes(rel, box_of, shared, spec.room)
        yield label, rel, lv, slots


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _add_grad(store: dict, key: str, grad, scale: float):
    if key not in store:
        store[key] = np.zeros(3) if np.shape(grad) == (3,) else 0.0
    store[key] = store[key] + scale * grad


def _accumulate_relation_grads(
    lv: LossValue,
    slots: dict,
    rel_or_group,
    scale: float,
    grads: dict,
    entity_key,
):
    """Route a relation loss's slot gradients into the aggregate store.

    entity_key(eid) -> store key or None (gradient discarded, e.g. anchors
    inside their own unit frame).
    """
    for slot, g in lv.grads.items():
        tag = slots.get(slot)
        if tag is None:
            continue
        if tag == "param":
            rel = rel_or_group
            if rel.shared_param is not None:
                _add_grad(grads, f"param:{rel.shared_param}", g, scale)
        elif slot == "sources":
            for row, eid in enumerate(tag):
                key = entity_key(eid)
                if key is not None:
                    _add_grad(grads, key, g[row], scale)
        else:
            key = entity_key(tag)
            if key is not None:
                _add_grad(grads, key, g, scale)


def aggregate_local(
    spec: SceneSpec,
    unit_id: str,
    member_locals: dict,
    shared: dict,
    weights: Weights = Weights(),
) -> LossValue:
    """Unit-frame objective: member pairwise collisions plus intra relations.

    Gradients are keyed 'local:<asset>' for members and 'param:<name>' for
    shared parameters.  The unit's own pose never appears: every term depends
    only on relative geometry inside the frame, so the block is exactly zero.
    The anchor is frame-fixed and receives no gradient.
    """
    unit = spec.unit(unit_id)
    boxes = unit_local_boxes(spec, unit, member_locals)
    grads: dict = {}

    def entity_key(eid: str):
        return None if eid == unit.anchor else f"local:{eid}"

    collision_total = 0.0
    ids = list(boxes)
    if weights.collision != 0.0:
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                lv = collision_loss(boxes[ids[i]], boxes[ids[j]])
                collision_total += lv.value
                for slot, eid in (("a", ids[i]), ("b", ids[j])):
                    key = entity_key(eid)
                    if key is not None:
                        _add_grad(grads, key, lv.grads[slot], weights.collision)

    relation_total = 0.0
    if weights.relation != 0.0:
        for _, rel_or_group, lv, slots in iter_relation_penalties(
            spec, spec.intra_relations(unit_id), boxes.__getitem__, shared
        ):
            relation_total += lv.value
            rel = rel_or_group[0] if isinstance(rel_or_group, list) else rel_or_group
            _accumulate_relation_grads(lv, slots, rel, weights.relation, grads, entity_key)

    value = weights.collision * collision_total + weights.relation * relation_total
    return LossValue(
        value, grads, {"collision": collision_total, "relation": relation_total}
    )


def aggregate_global(
    spec: SceneSpec,
    independent: dict,
    unit_poses: dict,
    member_locals: dict,
    shared: dict,
    weights: Weights = Weights(),
) -> LossValue:
    """Scene-level objective over independent assets and unit stand-in boxes.

    Terms: room-boundary excursions, pairwise collisions, and inter
    relations.  Gradients are keyed 'pose:<asset>' for independents,
    'unit:<unit>' for unit poses, and 'param:<name>' for shared parameters.
    """
    entity_boxes: dict = {}
    obb_offsets: dict = {}
    for u in spec.units:
        box, offset = unit_obb(spec, u, unit_poses[u.id], member_locals)
        entity_boxes[u.id] = box
        obb_offsets[u.id] = offset
    for a in spec.independent_assets():
        entity_boxes[a.id] = asset_box(spec, a.id, independent[a.id])

    grads: dict = {}

    def route(eid: str, grad, scale: float):
        if eid in obb_offsets:
            pulled = chain_obb_grad_to_unit(
                grad, obb_offsets[eid], entity_boxes[eid].pose.theta
            )
            _add_grad(grads, f"unit:{eid}", pulled, scale)
        else:
            _add_grad(grads, f"pose:{eid}", grad, scale)

    boundary_total = 0.0
    if weights.boundary != 0.0:
        for eid, box in entity_boxes.items():
            lv = boundary_loss(box, spec.room)
            boundary_total += lv.value
            route(eid, lv.grads["box"], weights.boundary)

    collision_total = 0.0
    ids = list(entity_boxes)
    if weights.collision != 0.0:
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                lv = collision_loss(entity_boxes[ids[i]], entity_boxes[ids[j]])
                collision_total += lv.value
                route(ids[i], lv.grads["a"], weights.collision)
                route(ids[j], lv.grads["b"], weights.collision)

    relation_total = 0.0
    if weights.relation != 0.0:
        param_grads: dict = {}

        def entity_key(eid: str):
            return eid  # routed below

        for _, rel_or_group, lv, slots in iter_relation_penalties(
            spec, spec.inter_relations(), entity_boxes.__getitem__, shared
        ):
            relation_total += lv.value
            rel = rel_or_group[0] if isinstance(rel_or_group, list) else rel_or_group
            staged: dict = {}
            _accumulate_relation_grads(lv, slots, rel, weights.relation, staged, entity_key)
            for key, g in staged.items():
                if key.startswith("param:"):
                    _add_grad(param_grads, key, g, 1.0)
                else:
                    route(key, g, 1.0)
        for key, g in param_grads.items():
            _add_grad(grads, key, g, 1.0)

    value = (
        weights.boundary * boundary_total
        + weights.collision * collision_total
        + weights.relation * relation_total
    )
    return LossValue(
        value,
        grads,
        {
            "boundary": boundary_total,
            "collision": collision_total,
            "relation": relation_total,
        },
    )


def relation_penalties(
    spec: SceneSpec,
    independent: dict,
    unit_poses: dict,
    member_locals: dict,
    shared: dict,
) -> dict:
    """Raw (unweighted) penalty of every relation at the given configuration.

    Around groups appear once under 'around:<group>'; other relations under
    'relations[<index>]'.  Intra relations are evaluated in their unit frame,
    inter relations on scene-level boxes.
    """
    out: dict = {}
    for u in spec.units:
        boxes = unit_local_boxes(spec, u, member_locals)
        for label, _, lv, _slots in iter_relation_penalties(
            spec, spec.intra_relations(u.id), boxes.__getitem__, shared
        ):
            out[label] = lv.value
    entity_boxes: dict = {}
    for u in spec.units:
        entity_boxes[u.id], _ = unit_obb(spec, u, unit_poses[u.id], member_locals)
    for a in spec.independent_assets():
        entity_boxes[a.id] = asset_box(spec, a.id, independent[a.id])
    for label, _, lv, _slots in iter_relation_penalties(
        spec, spec.inter_relations(), entity_boxes.__getitem__, shared
    ):
        out[label] = lv.value
    return out
