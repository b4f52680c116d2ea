"""Two-stage momentum descent over scene poses.

The default parameterization is hierarchical: independent assets and unit
frames carry global poses, unit members carry poses local to their frame.
Unit-internal terms therefore never produce gradient on the frame, and
scene-level terms never reach into members: the two blocks decouple.

`solve_global_baseline` optimizes the same objective with every asset pose
global (member locals derived on the fly), which re-couples the blocks and
serves as the reference point for convergence comparisons.

Stage 1 optimizes poses under relation terms only, with constraint parameters
frozen.  Stage 2 enables collision and boundary terms, and lets shared
constraint parameters float under a quadratic prior at their declared values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import Weights, aggregate_global, aggregate_local, relation_penalties
from .errors import DivergenceError, InfeasibleRoomError
from .geometry import Pose2D, compose, relative
from .scene_model import Layout, SceneSpec, shared_param_priors


@dataclass(frozen=True)
class OptimizerConfig:
    """Descent hyperparameters; `iterations` counts steps per stage."""

    iterations: int = 600
    lr_position: float = 0.5
    lr_rotation: float = 0.3
    lr_shared: float = 0.1
    momentum: float = 0.9
    clip_position: float = 1.0
    clip_rotation: float = 0.3
    prior_weight: float = 1.0
    seed: int = 0


def cosine_factor(t: int, total: int) -> float:
    """Annealing multiplier: 1 at t=0 decaying to ~0 at t=total."""
    return 0.5 * (1.0 + math.cos(math.pi * t / total))


@dataclass
class TraceRow:
    iteration: int
    stage: int
    total: float
    collision: float
    boundary: float
    relation: float
    prior: float
    lr: float


@dataclass
class Trace:
    """Per-iteration record of the objective and its terms.

    `final_shared` and `final_penalties` snapshot the learned shared
    parameters and the raw per-relation penalties at the final state.
    `wall_time` is informational and never serialized.
    """

    rows: list = field(default_factory=list)
    final_shared: dict = field(default_factory=dict)
    final_penalties: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def to_csv(self) -> str:
        lines = ["iteration,stage,total,collision,boundary,relation,prior,lr"]
        for r in self.rows:
            lines.append(
                f"{r.iteration},{r.stage},{r.total!r},{r.collision!r},"
                f"{r.boundary!r},{r.relation!r},{r.prior!r},{r.lr!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class ParamState:
    """Optimizable configuration under the hierarchical parameterization."""

    spec: SceneSpec
    independent: dict
    unit_poses: dict
    member_local: dict
    shared: dict
    shared_prior: dict
    vel_independent: dict = field(default_factory=dict)
    vel_unit: dict = field(default_factory=dict)
    vel_member: dict = field(default_factory=dict)
    vel_shared: dict = field(default_factory=dict)
    step_index: int = 0

    def __post_init__(self):
        if not self.vel_independent:
            self.vel_independent = {k: np.zeros(3) for k in self.independent}
        if not self.vel_unit:
            self.vel_unit = {k: np.zeros(3) for k in self.unit_poses}
        if not self.vel_member:
            self.vel_member = {k: np.zeros(3) for k in self.member_local}
        if not self.vel_shared:
            self.vel_shared = {k: 0.0 for k in self.shared}

    def reset_momentum(self):
        for store in (self.vel_independent, self.vel_unit, self.vel_member):
            for k in store:
                store[k] = np.zeros(3)
        for k in self.vel_shared:
            self.vel_shared[k] = 0.0
        self.step_index = 0

    def global_pose(self, asset_id: str) -> Pose2D:
        uid = self.spec.unit_of(asset_id)
        if uid is None:
            return Pose2D(*self.independent[asset_id])
        unit = self.spec.unit(uid)
        frame = Pose2D(*self.unit_poses[uid])
        if asset_id == unit.anchor:
            return frame
        return compose(frame, Pose2D(*self.member_local[asset_id]))

    def dof_count(self) -> int:
        return 3 * (len(self.independent) + len(self.unit_poses) + len(self.member_local)) + len(
            self.shared
        )


def init_state(spec: SceneSpec, seed: int) -> ParamState:
    """Deterministic random initialization.

    Positions are uniform inside the room inset by each entity's larger half
    size; member locals are uniform in [-1, 1]^2.  Draw order: per unit the
    frame pose then member locals, then independent assets, all in spec
    order.
    """
    room = spec.room
    for a in spec.assets:
        if 2.0 * max(a.half_l, a.half_w) > min(room.length, room.width):
            raise InfeasibleRoomError(
                f"asset {a.id!r} cannot fit: footprint {a.size[0]}x{a.size[1]} "
                f"in a {room.length}x{room.width} room"
            )
    rng = np.random.default_rng(seed)

    def draw_position(margin: float) -> tuple[float, float]:
        if 2.0 * margin > room.length or 2.0 * margin > room.width:
            raise InfeasibleRoomError(
                f"no in-bounds position with margin {margin} in a "
                f"{room.length}x{room.width} room"
            )
        x = rng.uniform(margin, room.length - margin)
        y = rng.uniform(margin, room.width - margin)
        return x, y

    unit_poses: dict = {}
    member_local: dict = {}
    for u in spec.units:
        anchor = spec.asset(u.anchor)
        margin = max(anchor.half_l, anchor.half_w)
        x, y = draw_position(margin)
        unit_poses[u.id] = np.array([x, y, rng.uniform(-math.pi, math.pi)])
        for mid in u.members:
            member_local[mid] = np.array(
                [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-math.pi, math.pi)]
            )
    independent: dict = {}
    for a in spec.independent_assets():
        margin = max(a.half_l, a.half_w)
        x, y = draw_position(margin)
        independent[a.id] = np.array([x, y, rng.uniform(-math.pi, math.pi)])

    priors = shared_param_priors(spec)
    return ParamState(
        spec=spec,
        independent=independent,
        unit_poses=unit_poses,
        member_local=member_local,
        shared=dict(priors),
        shared_prior=priors,
    )


def _stage_weights(weights: Weights, stage: int) -> Weights:
    if stage == 1:
        return Weights(collision=0.0, relation=weights.relation, boundary=0.0)
    return weights


def evaluate(state: ParamState, weights: Weights, stage: int, config: OptimizerConfig):
    """Objective value, flat gradient map, and per-term breakdown."""
    spec = state.spec
    eff = _stage_weights(weights, stage)
    grads: dict = {}
    terms = {"collision": 0.0, "boundary": 0.0, "relation": 0.0, "prior": 0.0}

    glob = aggregate_global(
        spec, state.independent, state.unit_poses, state.member_local, state.shared, eff
    )
    total = glob.value
    for k, v in glob.terms.items():
        terms[k] += v
    for k, g in glob.grads.items():
        grads[k] = grads.get(k, 0.0) + g

    for u in spec.units:
        loc = aggregate_local(spec, u.id, state.member_local, state.shared, eff)
        total += loc.value
        for k, v in loc.terms.items():
            terms[k] += v
        for k, g in loc.grads.items():
            grads[k] = grads.get(k, 0.0) + g

    if stage == 2 and config.prior_weight != 0.0:
        prior = 0.0
        for name, value in state.shared.items():
            r = value - state.shared_prior[name]
            prior += r * r
            key = f"param:{name}"
            grads[key] = grads.get(key, 0.0) + 2.0 * config.prior_weight * r
        terms["prior"] = prior
        total += config.prior_weight * prior

    return total, grads, terms


def _clipped_pose_grad(g, config: OptimizerConfig) -> np.ndarray:
    out = np.asarray(g, dtype=float).copy()
    norm = math.hypot(out[0], out[1])
    if norm > config.clip_position:
        out[:2] *= config.clip_position / norm
    if out[2] > config.clip_rotation:
        out[2] = config.clip_rotation
    elif out[2] < -config.clip_rotation:
        out[2] = -config.clip_rotation
    return out


def _apply_pose_update(pose, vel, g, config: OptimizerConfig, factor: float):
    g = _clipped_pose_grad(g, config)
    vel *= config.momentum
    vel += g
    pose[0] -= config.lr_position * factor * vel[0]
    pose[1] -= config.lr_position * factor * vel[1]
    pose[2] -= config.lr_rotation * factor * vel[2]


def step(
    state: ParamState,
    config: OptimizerConfig,
    weights: Weights,
    stage: int,
):
    """One descent step in place; returns (loss, terms) at the pre-step state."""
    total, grads, terms = evaluate(state, weights, stage, config)
    if not math.isfinite(total):
        raise DivergenceError("objective is not finite", state.step_index)
    factor = cosine_factor(state.step_index, config.iterations)

    for key, pose in state.independent.items():
        _apply_pose_update(
            pose, state.vel_independent[key], grads.get(f"pose:{key}", np.zeros(3)), config, factor
        )
    for key, pose in state.unit_poses.items():
        _apply_pose_update(
            pose, state.vel_unit[key], grads.get(f"unit:{key}", np.zeros(3)), config, factor
        )
    for key, pose in state.member_local.items():
        _apply_pose_update(
            pose, state.vel_member[key], grads.get(f"local:{key}", np.zeros(3)), config, factor
        )
    if stage == 2:
        for name in state.shared:
            g = float(grads.get(f"param:{name}", 0.0))
            if g > config.clip_position:
                g = config.clip_position
            elif g < -config.clip_position:
                g = -config.clip_position
            v = config.momentum * state.vel_shared[name] + g
            state.vel_shared[name] = v
            state.shared[name] -= config.lr_shared * factor * v

    state.step_index += 1
    for store in (state.independent, state.unit_poses, state.member_local):
        for arr in store.values():
            if not np.all(np.isfinite(arr)):
                raise DivergenceError("pose is not finite", state.step_index)
    for v in state.shared.values():
        if not math.isfinite(v):
            raise DivergenceError("shared parameter is not finite", state.step_index)
    return total, terms, factor


def _state_layout(state: ParamState) -> Layout:
    poses = {}
    for a in state.spec.assets:
        p = state.global_pose(a.id)
        poses[a.id] = (p.x, p.y, 0.5 * a.size[2], p.theta)
    return Layout(poses)


def _finalize_trace(trace: Trace, state: ParamState, started: float):
    trace.final_shared = dict(state.shared)
    trace.final_penalties = relation_penalties(
        state.spec,
        state.independent,
        state.unit_poses,
        state.member_local,
        state.shared,
    )
    trace.wall_time = time.perf_counter() - started


def solve(
    spec: SceneSpec,
    config: OptimizerConfig = OptimizerConfig(),
    weights: Weights = Weights(),
) -> tuple[Layout, Trace]:
    """Optimize a scene from its seeded random initialization.

    Returns the final layout and the per-iteration trace.  Raises
    InfeasibleRoomError for rooms that cannot contain their assets and
    DivergenceError if the objective or a parameter becomes non-finite.
    """
    started = time.perf_counter()
    state = init_state(spec, config.seed)
    trace = Trace()
    iteration = 0
    for stage in (1, 2):
        state.reset_momentum()
        for _ in range(config.iterations):
            total, terms, factor = step(state, config, weights, stage)
            trace.rows.append(
                TraceRow(
                    iteration,
                    stage,
                    total,
                    terms["collision"],
                    terms["boundary"],
                    terms["relation"],
                    terms["prior"],
                    factor,
                )
            )
            iteration += 1
    _finalize_trace(trace, state, started)
    return _state_layout(state), trace


# ---------------------------------------------------------------------------
# Flat global baseline
# ---------------------------------------------------------------------------


def _derived_view(spec: SceneSpec, poses: dict):
    """Split flat global poses into the hierarchical evaluation view."""
    independent = {a.id: poses[a.id] for a in spec.independent_assets()}
    unit_poses = {}
    member_local = {}
    for u in spec.units:
        anchor_pose = poses[u.anchor]
        unit_poses[u.id] = anchor_pose
        frame = Pose2D(*anchor_pose)
        for mid in u.members:
            local = relative(frame, Pose2D(*poses[mid]))
            member_local[mid] = np.array([local.x, local.y, local.theta])
    return independent, unit_poses, member_local


def solve_global_baseline(
    spec: SceneSpec,
    config: OptimizerConfig = OptimizerConfig(),
    weights: Weights = Weights(),
) -> tuple[Layout, Trace]:
    """Same objective, flat parameterization: every asset pose is global.

    Member locals are derived from the anchor each iteration, so the loss at
    identical geometry matches `solve` exactly (including the initial state,
    which is transported from the same seeded draw).  Gradients of
    unit-internal terms now flow to both the member and the anchor.
    """
    started = time.perf_counter()
    seed_state = init_state(spec, config.seed)
    poses: dict = {}
    for a in spec.assets:
        p = seed_state.global_pose(a.id)
        poses[a.id] = np.array([p.x, p.y, p.theta])
    vel = {aid: np.zeros(3) for aid in poses}
    shared = dict(seed_state.shared)
    shared_prior = dict(seed_state.shared_prior)
    vel_shared = {k: 0.0 for k in shared}

    trace = Trace()
    iteration = 0
    for stage in (1, 2):
        for v in vel.values():
            v[:] = 0.0
        for k in vel_shared:
            vel_shared[k] = 0.0
        for t in range(config.iterations):
            independent, unit_poses, member_local = _derived_view(spec, poses)
            view = ParamState(
                spec=spec,
                independent=independent,
                unit_poses=unit_poses,
                member_local=member_local,
                shared=shared,
                shared_prior=shared_prior,
            )
            total, grads, terms = evaluate(view, weights, stage, config)
            if not math.isfinite(total):
                raise DivergenceError("objective is not finite", iteration)
            factor = cosine_factor(t, config.iterations)

            flat = {aid: np.zeros(3) for aid in poses}
            for a in spec.independent_assets():
                flat[a.id] += grads.get(f"pose:{a.id}", 0.0)
            for u in spec.units:
                flat[u.anchor] += grads.get(f"unit:{u.id}", 0.0)
                ca, sa = math.cos(poses[u.anchor][2]), math.sin(poses[u.anchor][2])
                for mid in u.members:
                    gl = grads.get(f"local:{mid}", None)
                    if gl is None:
                        continue
                    lx, ly, _ = member_local[mid]
                    gm = np.array(
                        [
                            ca * gl[0] - sa * gl[1],
                            sa * gl[0] + ca * gl[1],
                            gl[2],
                        ]
                    )
                    flat[mid] += gm
                    flat[u.anchor] += np.array(
                        [-gm[0], -gm[1], gl[0] * ly - gl[1] * lx - gl[2]]
                    )

            for aid, pose in poses.items():
                _apply_pose_update(pose, vel[aid], flat[aid], config, factor)
            if stage == 2:
                for name in shared:
                    g = float(grads.get(f"param:{name}", 0.0))
                    g = max(-config.clip_position, min(config.clip_position, g))
                    v = config.momentum * vel_shared[name] + g
                    vel_shared[name] = v
                    shared[name] -= config.lr_shared * factor * v

            for arr in poses.values():
                if not np.all(np.isfinite(arr)):
                    raise DivergenceError("pose is not finite", iteration)
            trace.rows.append(
                TraceRow(
                    iteration,
                    stage,
                    total,
                    terms["collision"],
                    terms["boundary"],
                    terms["relation"],
                    terms["prior"],
                    factor,
                )
            )
            iteration += 1

    independent, unit_poses, member_local = _derived_view(spec, poses)
    final_view = ParamState(
        spec=spec,
        independent=independent,
        unit_poses=unit_poses,
        member_local=member_local,
        shared=shared,
        shared_prior=shared_prior,
    )
    _finalize_trace(trace, final_view, started)
    layout_poses = {}
    for a in spec.assets:
        x, y, theta = poses[a.id]
        layout_poses[a.id] = (float(x), float(y), 0.5 * a.size[2], float(theta))
    return Layout(layout_poses), trace
