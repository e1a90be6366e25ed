"""Verifiable rewards: action accuracy, per-category answer accuracy, format
validity, and their weighted total.

All scoring is pure and deterministic.  Semantic failures (missing blocks,
unparseable structure, wrong answer shape) map to a zero component, never to
an exception; exceptions are reserved for malformed ground-truth records.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .actions import (
    ActionAnnotationSet,
    AnnotationError,
    execute,
    parse_annotations,
    required_pairs,
)
from .geometry import rotation_angle_deg

MOTION_DIMENSIONS = ("yaw_deg", "pitch_deg", "forward_m", "vertical_m")

DEFAULT_MRA_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))


class GroundTruthError(ValueError):
    """Raised when a ground-truth record violates the schema."""


@dataclass(frozen=True)
class RewardConfig:
    lambda_action: float = 1.0
    lambda_answer: float = 1.0
    lambda_format: float = 1.0
    tau_t: float = 0.5
    tau_r: float = 30.0
    mra_thresholds: tuple = DEFAULT_MRA_THRESHOLDS
    stop_penalty_enabled: bool = True
    eps_stop_deg: float = 1.0
    eps_stop_m: float = 0.01
    w_pos: float = 0.5
    w_depth: float = 0.5
    sigma_pos: float = 0.25
    sigma_depth: float = 0.25
    pair_aggregation: str = "mean"  # mean | min | product

    def __post_init__(self):
        if self.tau_t <= 0 or self.tau_r <= 0:
            raise ValueError("reward temperatures must be positive")
        if min(self.lambda_action, self.lambda_answer, self.lambda_format) < 0:
            raise ValueError("reward weights must be nonnegative")
        thresholds = tuple(self.mra_thresholds)
        if not thresholds or any(not 0 < t < 1 for t in thresholds):
            raise ValueError("MRA thresholds must be a nonempty subset of (0, 1)")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("MRA thresholds must be strictly increasing")
        object.__setattr__(self, "mra_thresholds", thresholds)
        if abs(self.w_pos + self.w_depth - 1.0) > 1e-12:
            raise ValueError("w_pos + w_depth must equal 1")
        if self.pair_aggregation not in ("mean", "min", "product"):
            raise ValueError(f"unknown pair aggregation {self.pair_aggregation!r}")


@dataclass(frozen=True)
class GroundTruth:
    gold_plan_set: ActionAnnotationSet
    gold_answer: str
    sub_category: str
    question_type: str
    n_views: int
    gold_box: tuple = None
    gold_camera: dict = None
    gold_motion: dict = None

    def __post_init__(self):
        if self.question_type not in ("select", "fill"):
            raise GroundTruthError(f"unknown question type {self.question_type!r}")
        if self.n_views < 1:
            raise GroundTruthError("n_views must be >= 1")
        if self.sub_category == "position_matching" and self.gold_box is None:
            raise GroundTruthError("position_matching requires gold_box")
        if self.sub_category == "camera_motion" and self.gold_camera is None:
            raise GroundTruthError("camera_motion requires gold_camera")

    @staticmethod
    def from_mapping(record: dict) -> "GroundTruth":
        try:
            actions = record.get("gold_actions", [])
            if isinstance(actions, str):
                plan_set = parse_annotations(actions)
            else:
                plan_set = parse_annotations(json.dumps(actions))
            box = record.get("gold_box")
            return GroundTruth(
                gold_plan_set=plan_set,
                gold_answer=str(record.get("gold_answer", "")),
                sub_category=str(record.get("sub_category", "numeric")),
                question_type=str(record.get("question_type", "fill")),
                n_views=int(record["n_views"]),
                gold_box=tuple(box) if box is not None else None,
                gold_camera=record.get("gold_camera"),
                gold_motion=record.get("gold_motion"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GroundTruthError):
                raise
            raise GroundTruthError(f"bad ground-truth record: {exc}") from None


@dataclass(frozen=True)
class RewardBreakdown:
    act_acc: float
    ans_acc: float
    format: float
    total: float

    def as_record(self) -> dict:
        return {
            "act_acc": self.act_acc,
            "ans_acc": self.ans_acc,
            "format": self.format,
            "total": self.total,
        }


def extract_blocks(raw: str):
    """Inner texts of the first <action>...</action> then <answer>...</answer>
    pair, or None when missing, unclosed, or out of order."""
    action_open = raw.find("<action>")
    if action_open < 0:
        return None
    action_close = raw.find("</action>", action_open + len("<action>"))
    if action_close < 0:
        return None
    first_answer = raw.find("<answer>")
    if first_answer < action_close:
        return None
    answer_close = raw.find("</answer>", first_answer + len("<answer>"))
    if answer_close < 0:
        return None
    return (
        raw[action_open + len("<action>"):action_close],
        raw[first_answer + len("<answer>"):answer_close],
    )


def format_reward(raw: str, n_views: int) -> float:
    """1.0 iff blocks extract, the action JSON parses, and the parsed pairs
    cover exactly the required set; else 0.0."""
    blocks = extract_blocks(raw)
    if blocks is None:
        return 0.0
    try:
        parsed = parse_annotations(blocks[0])
    except AnnotationError:
        return 0.0
    return 1.0 if parsed.pairs() == set(required_pairs(n_views)) else 0.0


def _is_stop_like(plan, cfg: RewardConfig) -> bool:
    for action in plan.actions:
        limit = cfg.eps_stop_deg if action.kind.endswith("_deg") else cfg.eps_stop_m
        if action.magnitude >= limit:
            return False
    return True


def action_accuracy_reward(
    pred: ActionAnnotationSet, gold: ActionAnnotationSet, cfg: RewardConfig
) -> float:
    """Pose-level kernel reward exp(-d_t/tau_t) * exp(-d_r/tau_r), aggregated
    over the gold pairs; missing predicted pairs score 0."""
    scores = []
    for src, dst, gold_plan in gold.entries:
        pred_plan = pred.plan_for(src, dst)
        if pred_plan is None:
            scores.append(0.0)
            continue
        if (
            cfg.stop_penalty_enabled
            and _is_stop_like(pred_plan, cfg)
            and not _is_stop_like(gold_plan, cfg)
        ):
            scores.append(0.0)
            continue
        gold_pose = execute(gold_plan)
        pred_pose = execute(pred_plan)
        d_t = float(np.linalg.norm(pred_pose.translation - gold_pose.translation))
        d_r = rotation_angle_deg(pred_pose.rotation, gold_pose.rotation)
        scores.append(math.exp(-d_t / cfg.tau_t) * math.exp(-d_r / cfg.tau_r))
    if not scores:
        return 1.0
    if cfg.pair_aggregation == "min":
        return min(scores)
    if cfg.pair_aggregation == "product":
        return math.prod(scores)
    return sum(scores) / len(scores)


_NUMBER_RE = re.compile(
    r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?(\s*(?:cm|m|deg|°))?"
)


def extract_numbers(text: str):
    """All numeric values in a text, with unit suffixes stripped (cm -> m)."""
    values = []
    for match in _NUMBER_RE.finditer(text):
        raw = match.group(0)
        unit = (match.group(1) or "").strip()
        number = float(raw[: len(raw) - len(match.group(1) or "")])
        if unit == "cm":
            number /= 100.0
        values.append(number)
    return values


def match_select(pred: str, gold: str) -> float:
    """Exact case-insensitive match, or permissive first-character match
    against a single-letter gold label."""
    pred_norm = pred.strip()
    gold_norm = gold.strip()
    if pred_norm.lower() == gold_norm.lower():
        return 1.0
    if len(gold_norm) == 1 and gold_norm.isalpha():
        for ch in pred_norm:
            if ch.isalnum():
                return 1.0 if ch.lower() == gold_norm.lower() else 0.0
    return 0.0


def mra_numeric(pred: str, gold: str, thresholds) -> float:
    """Mean relative accuracy over tolerance thresholds; both texts must
    contain exactly one numeric value."""
    pred_vals = extract_numbers(pred)
    gold_vals = extract_numbers(gold)
    if len(pred_vals) != 1 or len(gold_vals) != 1:
        return 0.0
    y_hat, y = pred_vals[0], gold_vals[0]
    if y == 0:
        return 1.0 if y_hat == 0 else 0.0
    rel = abs(y_hat - y) / abs(y)
    hits = sum(1 for theta in thresholds if rel < 1 - theta)
    return hits / len(thresholds)


def _parse_box(value):
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            return None
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        return None
    try:
        x1, y1, x2, y2 = (float(v) for v in value)
    except (TypeError, ValueError):
        return None
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        return None
    return min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)


def iou_boxes(pred_box, gold_box) -> float:
    """Axis-aligned IoU; unparseable boxes score 0."""
    pred = _parse_box(pred_box)
    gold = _parse_box(gold_box)
    if pred is None or gold is None:
        return 0.0
    ix1, iy1 = max(pred[0], gold[0]), max(pred[1], gold[1])
    ix2, iy2 = min(pred[2], gold[2]), min(pred[3], gold[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    area_p = (pred[2] - pred[0]) * (pred[3] - pred[1])
    area_g = (gold[2] - gold[0]) * (gold[3] - gold[1])
    union = area_p + area_g - inter
    if union <= 0:
        return 0.0
    return inter / union


_PAREN_RE = re.compile(r"\([^()]*\)")


def soft_exact_match(pred: str, gold: str) -> float:
    """Case-insensitive equality after stripping parenthetical annotations."""

    def normalize(text: str) -> str:
        prev = None
        while prev != text:
            prev = text
            text = _PAREN_RE.sub(" ", text)
        return " ".join(text.lower().split())

    return 1.0 if normalize(pred) == normalize(gold) else 0.0


def camera_motion_score(pred_params, gold_params, cfg: RewardConfig) -> float:
    """Weighted Gaussian score over normalized 2D position error and relative
    depth error.

    Params are mappings with x, y, depth; gold additionally carries the image
    width/height used to normalize the position error by the diagonal.
    """
    try:
        px, py = float(pred_params["x"]), float(pred_params["y"])
        pz = float(pred_params["depth"])
        gx, gy = float(gold_params["x"]), float(gold_params["y"])
        gz = float(gold_params["depth"])
        width = float(gold_params["width"])
        height = float(gold_params["height"])
    except (KeyError, TypeError, ValueError):
        return 0.0
    if gz <= 0 or width <= 0 or height <= 0:
        return 0.0
    diagonal = math.hypot(width, height)
    e_pos = math.hypot(px - gx, py - gy) / diagonal
    e_depth = abs(pz - gz) / gz
    return cfg.w_pos * math.exp(-((e_pos / cfg.sigma_pos) ** 2)) + cfg.w_depth * math.exp(
        -((e_depth / cfg.sigma_depth) ** 2)
    )


def _parse_motion_params(value):
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            return None
    if not isinstance(value, dict):
        return None
    params = {}
    for key, raw in value.items():
        if key not in MOTION_DIMENSIONS:
            continue
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            return None
        params[key] = float(raw)
    return params


def view_change_mra(pred_text, gold_params, thresholds) -> float:
    """Per-dimension MRA over the canonical motion dimensions present in the
    gold params, averaged; a dimension missing from the prediction scores 0."""
    gold = _parse_motion_params(gold_params)
    if not gold:
        return 0.0
    pred = _parse_motion_params(pred_text)
    if pred is None:
        return 0.0
    scores = []
    for key, gold_value in gold.items():
        if key not in pred:
            scores.append(0.0)
        else:
            scores.append(mra_numeric(repr(pred[key]), repr(gold_value), thresholds))
    return sum(scores) / len(scores)


def answer_accuracy_reward(pred_answer: str, gt: GroundTruth, cfg: RewardConfig) -> float:
    """Dispatch to the metric for the question's sub-category and type."""
    if gt.question_type == "select":
        return match_select(pred_answer, gt.gold_answer)
    if gt.sub_category == "position_matching":
        return iou_boxes(pred_answer, gt.gold_box)
    if gt.sub_category == "object_distance":
        return soft_exact_match(pred_answer, gt.gold_answer)
    if gt.sub_category == "camera_motion":
        pred = _parse_json_object(pred_answer)
        if pred is None:
            return 0.0
        return camera_motion_score(pred, gt.gold_camera, cfg)
    if gt.sub_category == "view_change":
        return view_change_mra(pred_answer, gt.gold_motion, cfg.mra_thresholds)
    return mra_numeric(pred_answer, gt.gold_answer, cfg.mra_thresholds)


def _parse_json_object(text):
    try:
        value = json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return None
    return value if isinstance(value, dict) else None


def total_reward(act_acc: float, ans_acc: float, fmt: float, cfg: RewardConfig) -> RewardBreakdown:
    total = cfg.lambda_action * act_acc + cfg.lambda_answer * ans_acc + cfg.lambda_format * fmt
    return RewardBreakdown(act_acc=act_acc, ans_acc=ans_acc, format=fmt, total=total)


def score_output(raw_text: str, gt: GroundTruth, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """End-to-end scoring of one model generation against ground truth."""
    fmt = format_reward(raw_text, gt.n_views)
    blocks = extract_blocks(raw_text)
    act = 0.0
    ans = 0.0
    if blocks is not None:
        action_text, answer_text = blocks
        try:
            pred_set = parse_annotations(action_text)
        except AnnotationError:
            pred_set = None
        if pred_set is not None:
            act = action_accuracy_reward(pred_set, gt.gold_plan_set, cfg)
        ans = answer_accuracy_reward(answer_text, gt, cfg)
    return total_reward(act, ans, fmt, cfg)
