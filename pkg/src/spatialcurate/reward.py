"""Outcome reward: answer-tag format check plus task-adaptive correctness verifiers.

The total reward is ``clamp(lambda_format * r_format + lambda_correct *
r_correct, 0, 1)``. The format channel pays 1.0 for a response containing
exactly one well-formed ``<answer>...</answer>`` span and 0.0 otherwise.
The correctness channel is verified per task kind: exact string match for
selection/matching, a linear distance falloff for points, IoU for boxes, and
token-level F1 (or a plugged-in scorer) for open descriptions.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .errors import DataError
from .types import RewardBreakdown, RewardConfig, TaskKind, VqaSample

OPEN_TAG = "<answer>"
CLOSE_TAG = "</answer>"

FAILURE_REASONS = ("missing-open", "missing-close", "multiple-spans", "nested")


@dataclass(frozen=True)
class ParseFailure:
    reason: str


@dataclass(frozen=True)
class Box2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"box corners out of order: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> "Point2D":
        return Point2D((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


def parse_answer(response: str) -> Union[str, ParseFailure]:
    """Extract the single answer span, or report why there is none.

    Success requires exactly one well-formed, non-nested span with
    case-sensitive tags; the returned text is the span interior with
    surrounding whitespace trimmed. Failures scan left to right: an
    unmatched close reports ``missing-open``, an open inside an open span
    ``nested``, a second completed span ``multiple-spans``, and an open that
    never closes ``missing-close``.
    """
    tags = sorted(
        [(m.start(), "open") for m in re.finditer(re.escape(OPEN_TAG), response)]
        + [(m.start(), "close") for m in re.finditer(re.escape(CLOSE_TAG), response)]
    )
    if not any(kind == "open" for _, kind in tags):
        return ParseFailure("missing-open")
    if not any(kind == "close" for _, kind in tags):
        return ParseFailure("missing-close")

    depth = 0
    span: Optional[str] = None
    start = 0
    for pos, kind in tags:
        if kind == "open":
            if depth == 1:
                return ParseFailure("nested")
            depth = 1
            start = pos + len(OPEN_TAG)
        else:
            if depth == 0:
                return ParseFailure("missing-open")
            depth = 0
            if span is not None:
                return ParseFailure("multiple-spans")
            span = response[start:pos]
    if depth == 1:
        return ParseFailure("missing-close")
    assert span is not None
    return span.strip()


def _normalize_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def score_exact(pred: str, gt: str) -> float:
    """1.0 iff the strings match after trimming, whitespace collapse, and case fold."""
    return 1.0 if _normalize_text(pred) == _normalize_text(gt) else 0.0


def score_point(pred: Point2D, gt: Point2D, radius: float) -> float:
    """Linear falloff with distance: ``max(0, 1 - |pred - gt| / radius)``.

    Non-finite coordinates score 0.
    """
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    coords = (pred.x, pred.y, gt.x, gt.y)
    if not all(math.isfinite(c) for c in coords):
        return 0.0
    dist = math.hypot(pred.x - gt.x, pred.y - gt.y)
    return max(0.0, 1.0 - dist / radius)


def score_iou(pred: Box2D, gt: Box2D) -> float:
    """Intersection over union; identical boxes score 1 even when degenerate."""
    if pred == gt:
        return 1.0
    inter_w = min(pred.x_max, gt.x_max) - max(pred.x_min, gt.x_min)
    inter_h = min(pred.y_max, gt.y_max) - max(pred.y_min, gt.y_min)
    inter = max(0.0, inter_w) * max(0.0, inter_h)
    union = pred.area + gt.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def score_semantic(pred: str, gt: str) -> float:
    """Token-level F1 over normalized whitespace tokens.

    1.0 when both sides are empty, 0.0 when exactly one is. A different
    similarity (e.g. an embedding service) can replace this behind the same
    ``(pred, gt) -> [0, 1]`` signature via ``compute_reward``.
    """
    pred_tokens = _normalize_text(pred).split()
    gt_tokens = _normalize_text(gt).split()
    if not pred_tokens and not gt_tokens:
        return 1.0
    if not pred_tokens or not gt_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gt_tokens)
    matched = sum(common.values())
    if matched == 0:
        return 0.0
    precision = matched / len(pred_tokens)
    recall = matched / len(gt_tokens)
    return 2 * precision * recall / (precision + recall)


_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


def extract_numbers(text: str, arity: int) -> Optional[tuple[float, ...]]:
    """First bracketed list in ``text`` holding exactly ``arity`` finite numbers."""
    for match in _BRACKET_RE.finditer(text):
        parts = [p.strip() for p in match.group(1).split(",")]
        if len(parts) != arity:
            continue
        try:
            values = tuple(float(p) for p in parts)
        except ValueError:
            continue
        if all(math.isfinite(v) for v in values):
            return values
    return None


def compose_total(r_format: float, r_correct: float, config: RewardConfig) -> float:
    raw = config.lambda_format * r_format + config.lambda_correct * r_correct
    return min(1.0, max(0.0, raw))


_VERIFIER_BY_KIND = {
    TaskKind.SELECTION: "exact",
    TaskKind.MATCHING: "exact",
    TaskKind.POINT: "point",
    TaskKind.BOX: "iou",
    TaskKind.OPEN_DESCRIPTION: "semantic",
}


def _point_target(sample: VqaSample, config: RewardConfig) -> tuple[Point2D, float]:
    """Ground-truth point and scoring radius.

    A 2-number answer is the point itself with the configured radius; a
    4-number answer is a box, scored against its center with half the box
    diagonal as radius.
    """
    as_point = extract_numbers(sample.answer, 2)
    if as_point is not None:
        return Point2D(*as_point), config.point_radius_px
    as_box = extract_numbers(sample.answer, 4)
    if as_box is not None:
        try:
            box = Box2D(*as_box)
        except ValueError as exc:
            raise DataError(f"sample '{sample.id}' ground-truth box invalid: {exc}") from None
        radius = box.diagonal / 2.0
        if radius <= 0:
            radius = config.point_radius_px
        return box.center, radius
    raise DataError(
        f"sample '{sample.id}' answer has no [x, y] or [x1, y1, x2, y2] ground truth"
    )


def compute_reward(
    response: str,
    sample: VqaSample,
    config: RewardConfig = RewardConfig(),
    *,
    semantic_scorer: Optional[Callable[[str, str], float]] = None,
) -> RewardBreakdown:
    """Full per-response reward for the sample's task kind.

    Text verifiers score the raw response when the answer tag is missing
    (format and correctness are independent channels); structured verifiers
    score 0 without a parsed span because there are no coordinates to check.
    Unparseable ground truth for a structured task raises ``DataError`` — that
    is a corpus bug, not a model failure.
    """
    parsed = parse_answer(response)
    ok = not isinstance(parsed, ParseFailure)
    r_format = 1.0 if ok else 0.0
    verifier = _VERIFIER_BY_KIND[sample.task_kind]
    flags: list[str] = []

    if verifier == "exact":
        pred_text = parsed if ok else response
        r_correct = score_exact(pred_text, sample.answer)
    elif verifier == "semantic":
        pred_text = parsed if ok else response
        if semantic_scorer is not None:
            try:
                r_correct = min(1.0, max(0.0, float(semantic_scorer(pred_text, sample.answer))))
            except Exception:
                r_correct = score_semantic(pred_text, sample.answer)
                flags.append("semantic-fallback")
        else:
            r_correct = score_semantic(pred_text, sample.answer)
    elif verifier == "point":
        gt_point, radius = _point_target(sample, config)
        r_correct = 0.0
        if ok:
            pred_nums = extract_numbers(parsed, 2)
            if pred_nums is None:
                flags.append("unparseable-prediction")
            else:
                r_correct = score_point(Point2D(*pred_nums), gt_point, radius)
    else:  # iou
        gt_nums = extract_numbers(sample.answer, 4)
        if gt_nums is None:
            raise DataError(
                f"sample '{sample.id}' answer has no [x1, y1, x2, y2] ground truth"
            )
        try:
            gt_box = Box2D(*gt_nums)
        except ValueError as exc:
            raise DataError(f"sample '{sample.id}' ground-truth box invalid: {exc}") from None
        r_correct = 0.0
        if ok:
            pred_nums = extract_numbers(parsed, 4)
            if pred_nums is None:
                flags.append("unparseable-prediction")
            else:
                try:
                    pred_box = Box2D(*pred_nums)
                except ValueError:
                    flags.append("malformed-box")
                else:
                    r_correct = score_iou(pred_box, gt_box)

    return RewardBreakdown(
        r_format=r_format,
        r_correct=r_correct,
        r_total=compose_total(r_format, r_correct, config),
        verifier=verifier,
        flags=tuple(flags),
    )
