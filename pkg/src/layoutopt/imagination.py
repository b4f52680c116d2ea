"""Spatial imagination: candidate poses, cognitive maps, conflict revision.

The placement interpreter is a deterministic forward pass over relations in
file order, not an optimizer.  Anchored relations (walls, corners, axis
targets) pin coordinates against the room; relative relations place a source
off its already placed reference at the relation's zero-penalty geometry;
whatever stays unconstrained falls back to the room center (unit members:
the frame origin).  Each coordinate of an entity is pinned at most once,
first relation wins, so contradictions surface as geometric conflicts
instead of silent overwrites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import _WALL_RULES, unit_local_aabb, unit_obb
from .errors import RevisionError, SceneSemanticError, SceneSyntaxError
from .geometry import (
    FootprintBox,
    Pose2D,
    axis_bounds,
    collide_proxy,
    compose,
    footprint_extents,
    normalize_angle,
)
from .scene_model import (
    CORNER_WALLS,
    DIRECTIONAL_KINDS,
    Relation,
    SceneSpec,
    parse_scene,
    serialize_scene,
    shared_param_priors,
)

# Imagined side/ring placements clear the proxy boxes by this much.
SIDE_CLEARANCE = 0.01
RING_CLEARANCE = 0.05
# Separation margin added on top of the required one by the baseline reviser.
REVISE_MARGIN = 0.05

# Direction fan for successive center-distance placements off one reference.
_DISTANCE_CYCLE = (0.0, 0.5, 1.0, 1.5, 0.25, 0.75, 1.25, 1.75)
_GAP_CYCLE = (0.0, 1.0, 0.5, 1.5)


@dataclass(frozen=True)
class MapEntry:
    """One externalized row: pose, proxy box, extents, axis bounds."""

    pose: Pose2D
    box: FootprintBox
    extents: tuple
    bounds: tuple


@dataclass(frozen=True)
class CognitiveMap:
    scope: str  # "scene" or a unit id
    entries: dict


@dataclass(frozen=True)
class Conflict:
    """Proxy collision between two entities of one map."""

    level: str  # "intra" or "inter"
    unit: str | None
    pair: tuple
    overlap: tuple  # positive overlap per axis, meters
    box_a: FootprintBox
    box_b: FootprintBox


def _entry(pose: Pose2D, box: FootprintBox) -> MapEntry:
    return MapEntry(pose, box, footprint_extents(box), axis_bounds(box))


def _half_extents(hl: float, hw: float, theta: float) -> tuple[float, float]:
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    return hl * c + hw * s, hl * s + hw * c


class _Board:
    """Coordinate slots for one interpretation frame (scene or unit local)."""

    def __init__(self, halves: dict, default_xy: tuple):
        self.halves = halves
        self.default_xy = default_xy
        self.slots = {eid: [None, None, None] for eid in halves}
        self.counters: dict = {}

    def pin(self, eid: str, axis: int, value: float):
        if self.slots[eid][axis] is None:
            self.slots[eid][axis] = float(value)

    def theta(self, eid: str) -> float:
        v = self.slots[eid][2]
        return 0.0 if v is None else v

    def center(self, eid: str) -> tuple[float, float]:
        s = self.slots[eid]
        x = self.default_xy[0] if s[0] is None else s[0]
        y = self.default_xy[1] if s[1] is None else s[1]
        return x, y

    def half_extents(self, eid: str, theta=None) -> tuple[float, float]:
        hl, hw = self.halves[eid]
        return _half_extents(hl, hw, self.theta(eid) if theta is None else theta)

    def next_direction(self, eid: str, cycle) -> float:
        k = self.counters.get(eid, 0)
        self.counters[eid] = k + 1
        turns = cycle[k % len(cycle)] + 0.125 * (k // len(cycle))
        return turns * math.pi

    def resolved(self) -> dict:
        out = {}
        for eid in self.halves:
            x, y = self.center(eid)
            out[eid] = Pose2D(x, y, self.theta(eid))
        return out


def _apply_relation(board: _Board, rel: Relation, room, shared: dict):
    """Pin whatever coordinates this relation's zero-loss geometry dictates."""
    kind, src = rel.kind, rel.source

    def resolved(key):
        if rel.shared_param is not None:
            return shared[rel.shared_param]
        return rel.params[key]

    if kind == "h_place":
        board.pin(src, 0, resolved("x"))
        return
    if kind == "v_place":
        board.pin(src, 1, resolved("y"))
        return
    if kind == "against_wall":
        axis_i, sign, base, theta_star = _WALL_RULES[rel.target.removeprefix("wall:")]
        board.pin(src, 2, theta_star)
        if base is None:
            base = room.length if axis_i == 0 else room.width
        ext = board.half_extents(src, theta_star)
        board.pin(src, axis_i, base + sign * ext[axis_i])
        return
    if kind == "corner":
        theta_star = _WALL_RULES[rel.params["wall"]][3]
        board.pin(src, 2, theta_star)
        ext = board.half_extents(src, theta_star)
        tag = rel.target.removeprefix("corner:")
        for wall in CORNER_WALLS[tag]:
            axis_i, sign, base, _ = _WALL_RULES[wall]
            if base is None:
                base = room.length if axis_i == 0 else room.width
            board.pin(src, axis_i, base + sign * ext[axis_i])
        return

    tgt = rel.target
    tx, ty = board.center(tgt)
    t_theta = board.theta(tgt)

    if kind == "distance":
        ang = board.next_direction(tgt, _DISTANCE_CYCLE)
        d = resolved("d")
        board.pin(src, 0, tx + d * math.cos(ang))
        board.pin(src, 1, ty + d * math.sin(ang))
        return
    if kind == "gap":
        ang = board.next_direction(tgt, _GAP_CYCLE)
        axis_i = 0 if abs(math.cos(ang)) > 0.5 else 1
        sign = 1.0 if (math.cos(ang) if axis_i == 0 else math.sin(ang)) >= 0.0 else -1.0
        reach = (
            board.half_extents(tgt)[axis_i]
            + board.half_extents(src)[axis_i]
            + resolved("g")
        )
        cand = (tx, ty)[axis_i] + sign * reach
        board.pin(src, axis_i, cand)
        board.pin(src, 1 - axis_i, (ty, tx)[axis_i])
        return
    if kind in DIRECTIONAL_KINDS:
        # Place at the hinge threshold plus clearance, aligned at fraction p.
        sides = {"left_of": (0, -1.0), "right_of": (0, 1.0), "in_front_of": (1, 1.0), "behind_of": (1, -1.0)}
        axis_i, side = sides[kind]
        p = resolved("p")
        rel_angle = board.theta(src) - t_theta
        r = board.half_extents(src, rel_angle)
        hl_t, hw_t = board.halves[tgt]
        e = (hl_t, hw_t)
        main = side * (e[axis_i] + r[axis_i] + SIDE_CLEARANCE)
        other = (2.0 * p - 1.0) * (e[1 - axis_i] - r[1 - axis_i])
        local = (main, other) if axis_i == 0 else (other, main)
        ct, st = math.cos(t_theta), math.sin(t_theta)
        board.pin(src, 0, tx + ct * local[0] - st * local[1])
        board.pin(src, 1, ty + st * local[0] + ct * local[1])
        return
    if kind == "facing":
        sx, sy = board.center(src)
        dx, dy = tx - sx, ty - sy
        if math.hypot(dx, dy) > 1e-9:
            board.pin(src, 2, math.atan2(dy, dx))
        return
    if kind == "angle_offset":
        board.pin(src, 2, normalize_angle(t_theta + resolved("alpha")))
        return
    raise ValueError(f"unhandled relation kind {kind!r}")


def _apply_around_group(board: _Board, members: list):
    """Ring placement at the group's zero-penalty geometry: directions and
    headings evenly spread over the sweep, radius big enough to clear."""
    focal = members[0].target
    sweep = members[0].params["sweep"]
    center = members[0].params["center"]
    n = len(members)
    delta = sweep / (n - 1) if n > 1 else 0.0
    fx, fy = board.center(focal)
    f_theta = board.theta(focal)
    hl_f, hw_f = board.halves[focal]
    for j, rel in enumerate(members):
        phi = center - 0.5 * sweep + j * delta
        heading = normalize_angle(f_theta + phi)
        hl_s, hw_s = board.halves[rel.source]
        radius = math.hypot(hl_f, hw_f) + math.hypot(hl_s, hw_s) + RING_CLEARANCE
        ang = f_theta + phi
        board.pin(rel.source, 0, fx + radius * math.cos(ang))
        board.pin(rel.source, 1, fy + radius * math.sin(ang))
        board.pin(rel.source, 2, heading)


def _run_pass(spec, relations, halves, default_xy, pinned: dict):
    board = _Board(halves, default_xy)
    for eid, pose in pinned.items():
        board.slots[eid] = [pose[0], pose[1], pose[2]]
    shared = shared_param_priors(spec)
    seen_groups = set()
    group_members: dict = {}
    for rel in relations:
        if rel.kind == "around":
            key = (rel.scope, rel.unit, rel.target, rel.params["group"])
            group_members.setdefault(key, []).append(rel)
    for rel in relations:
        if rel.kind == "around":
            key = (rel.scope, rel.unit, rel.target, rel.params["group"])
            if key not in seen_groups:
                seen_groups.add(key)
                _apply_around_group(board, group_members[key])
            continue
        _apply_relation(board, rel, spec.room, shared)
    return board.resolved()


def interpret_scene(spec: SceneSpec) -> dict:
    """Candidate poses for every entity: unit frames and independent assets
    in world coordinates, unit members in their frame's coordinates."""
    poses: dict = {}
    standins: dict = {}
    for u in spec.units:
        halves = {aid: (spec.asset(aid).half_l, spec.asset(aid).half_w) for aid in u.assets}
        centers = _run_pass(
            spec,
            spec.intra_relations(u.id),
            halves,
            (0.0, 0.0),
            pinned={u.anchor: (0.0, 0.0, 0.0)},
        )
        locals_arr = {}
        for mid in u.members:
            poses[mid] = centers[mid]
            locals_arr[mid] = np.array([centers[mid].x, centers[mid].y, centers[mid].theta])
        standins[u.id] = unit_local_aabb(spec, u, locals_arr)

    halves = {}
    offsets = {}
    for u in spec.units:
        offset, hl, hw = standins[u.id]
        halves[u.id] = (hl, hw)
        offsets[u.id] = offset
    for a in spec.independent_assets():
        halves[a.id] = (a.half_l, a.half_w)

    centers = _run_pass(
        spec,
        spec.inter_relations(),
        halves,
        (0.5 * spec.room.length, 0.5 * spec.room.width),
        pinned={},
    )
    for eid, c in centers.items():
        if spec.is_unit(eid):
            # Relations position the stand-in box; shift back to the frame.
            ox, oy = offsets[eid]
            ct, st = math.cos(c.theta), math.sin(c.theta)
            poses[eid] = Pose2D(c.x - (ct * ox - st * oy), c.y - (st * ox + ct * oy), c.theta)
        else:
            poses[eid] = c
    return poses


def build_maps(spec: SceneSpec, poses: dict):
    """Local map per unit plus the global map, from a full pose assignment.

    Local entries hold member poses in the unit frame; the global entry for
    a unit carries its member-enclosing box as the proxy footprint.
    """
    local_maps: dict = {}
    for u in spec.units:
        anchor = spec.asset(u.anchor)
        origin = Pose2D(0.0, 0.0, 0.0)
        entries = {u.anchor: _entry(origin, FootprintBox(origin, anchor.half_l, anchor.half_w))}
        for mid in u.members:
            if mid not in poses:
                raise KeyError(f"no pose for {mid!r}")
            m = spec.asset(mid)
            entries[mid] = _entry(poses[mid], FootprintBox(poses[mid], m.half_l, m.half_w))
        local_maps[u.id] = CognitiveMap(u.id, entries)

    gentries: dict = {}
    for u in spec.units:
        if u.id not in poses:
            raise KeyError(f"no pose for {u.id!r}")
        p = poses[u.id]
        locals_arr = {
            mid: np.array([poses[mid].x, poses[mid].y, poses[mid].theta]) for mid in u.members
        }
        box, _ = unit_obb(spec, u, np.array([p.x, p.y, p.theta]), locals_arr)
        gentries[u.id] = _entry(p, box)
    for a in spec.independent_assets():
        if a.id not in poses:
            raise KeyError(f"no pose for {a.id!r}")
        p = poses[a.id]
        gentries[a.id] = _entry(p, FootprintBox(p, a.half_l, a.half_w))
    return local_maps, CognitiveMap("scene", gentries)


def _proxy_overlap(ea: MapEntry, eb: MapEntry):
    ox = ea.bounds[0].overlap(eb.bounds[0])
    oy = ea.bounds[1].overlap(eb.bounds[1])
    if ox > 0.0 and oy > 0.0:
        return ox, oy
    return None


def _global_member_boxes(frame: Pose2D, local_map) -> list:
    out = []
    for entry in local_map.entries.values():
        world = compose(frame, entry.pose)
        out.append(FootprintBox(world, entry.box.half_l, entry.box.half_w))
    return out


def detect_conflicts(spec: SceneSpec, local_maps: dict, global_map: CognitiveMap) -> list:
    """Pairwise proxy collisions, intra maps first, lexicographic pairs.

    A unit-versus-unit overlap of stand-in boxes is confirmed only when some
    member pair collides once both units are laid out in world coordinates;
    the coarse boxes overestimate.
    """
    out = []
    for u in spec.units:
        entries = local_maps[u.id].entries
        ids = sorted(entries)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                ov = _proxy_overlap(entries[a], entries[b])
                if ov is not None:
                    out.append(Conflict("intra", u.id, (a, b), ov, entries[a].box, entries[b].box))

    entries = global_map.entries
    ids = sorted(entries)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            ov = _proxy_overlap(entries[a], entries[b])
            if ov is None:
                continue
            if spec.is_unit(a) and spec.is_unit(b):
                boxes_a = _global_member_boxes(entries[a].pose, local_maps[a])
                boxes_b = _global_member_boxes(entries[b].pose, local_maps[b])
                refined = any(collide_proxy(x, y) for x in boxes_a for y in boxes_b)
                if not refined:
                    continue
            out.append(Conflict("inter", None, (a, b), ov, entries[a].box, entries[b].box))
    return out


# ---------------------------------------------------------------------------
# Revision
# ---------------------------------------------------------------------------


def _required_center_distance(conflict: Conflict, source_id: str) -> float:
    """Center separation along the current direction that just clears the
    proxies on at least one axis."""
    src = conflict.box_a if conflict.pair[0] == source_id else conflict.box_b
    tgt = conflict.box_b if conflict.pair[0] == source_id else conflict.box_a
    ux, uy = src.pose.x - tgt.pose.x, src.pose.y - tgt.pose.y
    n = math.hypot(ux, uy)
    if n < 1e-9:
        ux, uy = 1.0, 0.0
    else:
        ux, uy = ux / n, uy / n
    ea = footprint_extents(src)
    eb = footprint_extents(tgt)
    best = math.inf
    for axis_i, u in enumerate((ux, uy)):
        if abs(u) > 1e-9:
            best = min(best, 0.5 * (ea[axis_i] + eb[axis_i]) / abs(u))
    return best


def _linking_metric_relation(relations: list, conflict: Conflict):
    pair = set(conflict.pair)
    for i, rel in enumerate(relations):
        if rel.kind not in ("distance", "gap"):
            continue
        if conflict.level == "intra" and (rel.scope != "intra" or rel.unit != conflict.unit):
            continue
        if conflict.level == "inter" and rel.scope != "inter":
            continue
        if {rel.source, rel.target} == pair:
            return i
    return None


def baseline_reviser(spec: SceneSpec, conflicts: list) -> tuple:
    """Deterministic conflict repair: bump the linking metric relation to the
    required separation plus a margin, or append a small gap requirement when
    no metric relation links the pair.  No conflicts, no edits."""
    relations = list(spec.relations)
    appended = set()
    for c in conflicts:
        idx = _linking_metric_relation(relations, c)
        if idx is not None:
            rel = relations[idx]
            params = dict(rel.params)
            if rel.kind == "distance":
                params["d"] = _required_center_distance(c, rel.source) + REVISE_MARGIN
            else:
                params["g"] = min(c.overlap) + rel.params["g"] + REVISE_MARGIN
            relations[idx] = Relation(
                rel.kind, rel.source, rel.target, params, rel.scope, rel.unit, rel.shared_param
            )
            continue
        key = (c.level, c.unit, c.pair)
        if key in appended:
            continue
        appended.add(key)
        first, second = sorted(c.pair)
        relations.append(
            Relation(
                "gap",
                second,
                first,
                {"g": REVISE_MARGIN},
                "intra" if c.level == "intra" else "inter",
                c.unit,
            )
        )
    return tuple(relations)


def _rel_key(rel: Relation):
    return (
        rel.kind,
        rel.source,
        rel.target,
        tuple(sorted(rel.params.items())),
        rel.scope,
        rel.unit,
        rel.shared_param,
    )


def _describe(rel: Relation) -> str:
    scope = rel.scope if rel.unit is None else f"{rel.scope}:{rel.unit}"
    params = ", ".join(f"{k}={v!r}" for k, v in sorted(rel.params.items()))
    return f"{scope} {rel.kind} {rel.source}->{rel.target} ({params})"


def _relation_diff(old: tuple, new: tuple):
    old_keys = [_rel_key(r) for r in old]
    new_keys = [_rel_key(r) for r in new]
    removed = [r for r, k in zip(old, old_keys) if k not in new_keys]
    added = [r for r, k in zip(new, new_keys) if k not in old_keys]
    edits = [f"- {_describe(r)}" for r in removed] + [f"+ {_describe(r)}" for r in added]
    return removed, added, edits


@dataclass(frozen=True)
class RevisionRound:
    index: int
    conflicts: tuple
    edits: tuple


@dataclass(frozen=True)
class RevisionReport:
    converged: bool
    iterations: int
    rounds: tuple

    @property
    def final_conflicts(self) -> tuple:
        return () if self.converged else self.rounds[-1].conflicts

    def to_text(self) -> str:
        lines = []
        for r in self.rounds:
            lines.append(f"round {r.index}: {len(r.conflicts)} conflict(s)")
            for c in r.conflicts:
                where = c.level if c.unit is None else f"{c.level}:{c.unit}"
                lines.append(
                    f"  {where} {c.pair[0]} x {c.pair[1]} "
                    f"overlap {c.overlap[0]:.4f} x {c.overlap[1]:.4f}"
                )
            for e in r.edits:
                lines.append(f"  {e}")
        tail = (
            f"converged after {self.iterations} round(s)"
            if self.converged
            else f"not converged within {self.iterations} round(s)"
        )
        lines.append(tail)
        return "\n".join(lines) + "\n"


def _check_locality(removed, added, conflicts):
    allowed = set()
    for c in conflicts:
        allowed.add(("intra", c.unit) if c.level == "intra" else ("inter", None))
    for rel in list(removed) + list(added):
        if (rel.scope, rel.unit) not in allowed:
            raise RevisionError(
                f"revision touched {rel.scope} relation {_describe(rel)} "
                "outside the conflicting scopes"
            )


def imagine_and_revise(spec: SceneSpec, reviser=baseline_reviser, budget: int = 10):
    """Imagine, detect, revise until conflict-free or out of budget.

    Returns (possibly revised spec, RevisionReport).  Revised relation lists
    are re-validated through the scene parser; schema violations and edits
    outside the conflicting scopes raise RevisionError.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    current = spec
    rounds = []
    for t in range(1, budget + 1):
        poses = interpret_scene(current)
        local_maps, global_map = build_maps(current, poses)
        conflicts = detect_conflicts(current, local_maps, global_map)
        if not conflicts:
            rounds.append(RevisionRound(t, (), ()))
            return current, RevisionReport(True, t, tuple(rounds))
        new_relations = tuple(reviser(current, conflicts))
        removed, added, edits = _relation_diff(current.relations, new_relations)
        _check_locality(removed, added, conflicts)
        candidate = current.with_relations(new_relations)
        try:
            current = parse_scene(serialize_scene(candidate))
        except (SceneSyntaxError, SceneSemanticError) as exc:
            raise RevisionError(f"reviser produced an invalid scene: {exc}") from exc
        rounds.append(RevisionRound(t, tuple(conflicts), tuple(edits)))
    return current, RevisionReport(False, budget, tuple(rounds))
