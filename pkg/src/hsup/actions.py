"""Atomic camera actions: executor semantics, teacher-plan compilation, and
strict parsing/serialization of the action annotation JSON.

Executor semantics (normative).  A plan is folded left-to-right starting from
the identity.  The accumulated state (R, t) is the pose of the moved camera
expressed in the start camera's frame: rotation actions multiply on the right
(``R <- R @ A``), translation actions displace along the current local axes
(``t <- t + R @ d``).  Per-kind effects, in the +X right / +Y down / +Z
forward camera frame:

==================  =====================================================
turn_right_deg m    R @ yaw_matrix(+m)   (view swings right)
turn_left_deg m     R @ yaw_matrix(-m)
turn_up_deg m       R @ pitch_matrix(+m) (view swings up, toward -Y)
turn_down_deg m     R @ pitch_matrix(-m)
move_forward_m m    t += R @ (0, 0, +m)
move_up_m m         t += R @ (0, -m, 0)
move_down_m m       t += R @ (0, +m, 0)
==================  =====================================================

The compiler inverts this for roll-free motions in three stages: aim at the
target displacement (yaw, then pitch), move forward by the displacement norm,
then correct the orientation (pitch, yaw, pitch) so the composed rotation
matches the target exactly.  Pure-vertical displacements use move_up/move_down
instead, avoiding the +-90 degree pitch singularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RelativePose, pitch_matrix, yaw_matrix

TURN_KINDS = ("turn_left_deg", "turn_right_deg", "turn_up_deg", "turn_down_deg")
MOVE_KINDS = ("move_forward_m", "move_up_m", "move_down_m")
ACTION_KINDS = TURN_KINDS + MOVE_KINDS

_OPPOSITE = {
    "turn_left_deg": "turn_right_deg",
    "turn_right_deg": "turn_left_deg",
    "turn_up_deg": "turn_down_deg",
    "turn_down_deg": "turn_up_deg",
    "move_up_m": "move_down_m",
    "move_down_m": "move_up_m",
    "move_forward_m": "move_forward_m",
}


class AnnotationError(ValueError):
    """Raised on malformed action annotation JSON; carries position info."""


class CompileError(ValueError):
    """Raised when a relative pose is not representable by the vocabulary."""


@dataclass(frozen=True)
class AtomicAction:
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValueError(f"action magnitude must be finite and >= 0, got {self.magnitude}")


@dataclass(frozen=True)
class ActionPlan:
    actions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    def __len__(self):
        return len(self.actions)

    def reversed(self) -> "ActionPlan":
        """Reversed-order plan with each action kind swapped for its opposite."""
        return ActionPlan(
            tuple(
                AtomicAction(_OPPOSITE[a.kind], a.magnitude)
                for a in reversed(self.actions)
            )
        )


@dataclass(frozen=True)
class ActionAnnotationSet:
    """Per-pair action plans over 0-based view indices with from < to."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for src, dst, plan in entries:
            if not (isinstance(src, int) and isinstance(dst, int) and src < dst):
                raise ValueError(f"invalid pair ({src}, {dst}): need 0-based from < to")
            if src < 0:
                raise ValueError(f"negative view index in pair ({src}, {dst})")
            if (src, dst) in seen:
                raise ValueError(f"duplicate pair ({src}, {dst})")
            if not isinstance(plan, ActionPlan):
                raise ValueError("plan entries must be ActionPlan")
            seen.add((src, dst))
        object.__setattr__(self, "entries", entries)

    def pairs(self):
        return {(src, dst) for src, dst, _ in self.entries}

    def plan_for(self, src: int, dst: int):
        for s, d, plan in self.entries:
            if (s, d) == (src, dst):
                return plan
        return None


@dataclass(frozen=True)
class CompileTolerances:
    """Emission/skip thresholds and roll rejection for the compiler.

    The skip thresholds sit below the executor round-trip tolerances
    (1e-6 m, 1e-4 deg) so that omitting a sub-threshold action can never
    break pose reproduction.
    """

    eps_deg: float = 5e-6
    eps_m: float = 1e-7
    roll_tol_deg: float = 0.5


_ROT = {
    "turn_right_deg": lambda m: yaw_matrix(m),
    "turn_left_deg": lambda m: yaw_matrix(-m),
    "turn_up_deg": lambda m: pitch_matrix(m),
    "turn_down_deg": lambda m: pitch_matrix(-m),
}

_DIR = {
    "move_forward_m": np.array([0.0, 0.0, 1.0]),
    "move_up_m": np.array([0.0, -1.0, 0.0]),
    "move_down_m": np.array([0.0, 1.0, 0.0]),
}


def execute(plan: ActionPlan) -> RelativePose:
    """Fold a plan into the moved camera's pose in the start camera frame."""
    r = np.eye(3)
    t = np.zeros(3)
    for action in plan.actions:
        if action.kind in _ROT:
            r = r @ _ROT[action.kind](action.magnitude)
        else:
            t = t + r @ (_DIR[action.kind] * action.magnitude)
    return RelativePose(r, t)


def decompose_yaw_pitch(rotation: np.ndarray):
    """Split R into (yaw_deg, pitch_deg, roll_deg) with R = yaw @ pitch @ roll."""
    r = np.asarray(rotation, dtype=np.float64)
    fwd = r[:, 2]
    pitch = math.degrees(math.asin(min(1.0, max(-1.0, -fwd[1]))))
    yaw = math.degrees(math.atan2(fwd[0], fwd[2]))
    residual = pitch_matrix(-pitch) @ yaw_matrix(-yaw) @ r
    roll = math.degrees(math.atan2(residual[1, 0], residual[0, 0]))
    return yaw, pitch, roll


def _wrap_deg(angle: float) -> float:
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def _turn(out: list, axis: str, angle_deg: float, eps_deg: float) -> None:
    angle_deg = _wrap_deg(angle_deg)
    if abs(angle_deg) < eps_deg:
        return
    if axis == "yaw":
        kind = "turn_right_deg" if angle_deg > 0 else "turn_left_deg"
    else:
        kind = "turn_up_deg" if angle_deg > 0 else "turn_down_deg"
    out.append(AtomicAction(kind, abs(angle_deg)))


def compile_plan(rel: RelativePose, tol: CompileTolerances = CompileTolerances()) -> ActionPlan:
    """Compile a roll-free relative motion into an executable action plan.

    ``rel`` is the target camera's pose in the source camera frame, as
    produced by :func:`execute`.  Raises CompileError when the rotation has
    residual roll beyond the tolerance.
    """
    yaw, pitch, roll = decompose_yaw_pitch(rel.rotation)
    if abs(roll) > tol.roll_tol_deg:
        raise CompileError(f"relative rotation has {roll:.3f} deg of roll; "
                           "the action vocabulary spans yaw/pitch only")

    d = rel.translation
    dist = float(np.linalg.norm(d))
    horizontal = math.hypot(d[0], d[2])
    out: list = []

    aim_pitch = 0.0
    if dist >= tol.eps_m:
        if horizontal < tol.eps_m:
            # Pure-vertical displacement: translate along the local vertical
            # axis instead of pitching to +-90 degrees.
            kind = "move_up_m" if d[1] < 0 else "move_down_m"
            out.append(AtomicAction(kind, abs(float(d[1]))))
            aim_yaw = 0.0
        else:
            aim_yaw = math.degrees(math.atan2(d[0], d[2]))
            aim_pitch = math.degrees(math.asin(min(1.0, max(-1.0, -d[1] / dist))))
            _turn(out, "yaw", aim_yaw, tol.eps_deg)
            _turn(out, "pitch", aim_pitch, tol.eps_deg)
            out.append(AtomicAction("move_forward_m", dist))
    else:
        aim_yaw = 0.0

    # Orientation correction: undo the aim pitch, then rotate to the target
    # yaw/pitch.  Rotations compose independently of the translations above,
    # so the final rotation is yaw(aim) @ pitch(aim) @ pitch(-aim) @ yaw(rest)
    # @ pitch(target) = yaw(target) @ pitch(target) exactly.
    _turn(out, "pitch", -aim_pitch, tol.eps_deg)
    _turn(out, "yaw", yaw - aim_yaw, tol.eps_deg)
    _turn(out, "pitch", pitch, tol.eps_deg)
    return ActionPlan(tuple(out))


def required_pairs(n_views: int):
    """All 0-based unordered index pairs (i, j) with i < j, lexicographic."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    return [(i, j) for i in range(n_views) for j in range(i + 1, n_views)]


def parse_annotations(text: str) -> ActionAnnotationSet:
    """Strictly parse the annotation JSON (array of {from, to, action})."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"malformed JSON: {exc}") from None
    if not isinstance(data, list):
        raise AnnotationError("annotation root must be a JSON array")
    entries = []
    seen = set()
    for idx, item in enumerate(data):
        if not isinstance(item, dict):
            raise AnnotationError(f"entry {idx}: expected an object")
        extra = set(item) - {"from", "to", "action"}
        if extra or set(item) != {"from", "to", "action"}:
            raise AnnotationError(f"entry {idx}: expected exactly from/to/action keys")
        src, dst = item["from"], item["to"]
        if not (isinstance(src, int) and isinstance(dst, int)) or isinstance(src, bool) or isinstance(dst, bool):
            raise AnnotationError(f"entry {idx}: from/to must be integers")
        if src < 0 or not src < dst:
            raise AnnotationError(f"entry {idx}: need 0 <= from < to, got ({src}, {dst})")
        if (src, dst) in seen:
            raise AnnotationError(f"entry {idx}: duplicate pair ({src}, {dst})")
        seen.add((src, dst))
        if not isinstance(item["action"], list):
            raise AnnotationError(f"entry {idx}: action must be a list")
        actions = []
        for aidx, step in enumerate(item["action"]):
            if not isinstance(step, dict) or len(step) != 1:
                raise AnnotationError(
                    f"entry {idx}, action {aidx}: expected a single-key object"
                )
            (kind, magnitude), = step.items()
            if kind not in ACTION_KINDS:
                raise AnnotationError(f"entry {idx}, action {aidx}: unknown kind {kind!r}")
            if isinstance(magnitude, bool) or not isinstance(magnitude, (int, float)):
                raise AnnotationError(f"entry {idx}, action {aidx}: non-numeric magnitude")
            if not math.isfinite(magnitude) or magnitude < 0:
                raise AnnotationError(
                    f"entry {idx}, action {aidx}: magnitude must be finite and >= 0"
                )
            actions.append(AtomicAction(kind, float(magnitude)))
        entries.append((src, dst, ActionPlan(tuple(actions))))
    return ActionAnnotationSet(tuple(entries))


def serialize_annotations(annotations: ActionAnnotationSet) -> str:
    """Canonical JSON: pairs sorted, stable key order, compact separators."""
    payload = [
        {
            "from": src,
            "to": dst,
            "action": [{a.kind: a.magnitude} for a in plan.actions],
        }
        for src, dst, plan in sorted(annotations.entries, key=lambda e: (e[0], e[1]))
    ]
    return json.dumps(payload, separators=(",", ":"))
