"""Benchmark-score normalization and corpus distribution reporting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .types import VqaSample


def normalize_scores(scores: Sequence[float], eps: float = 1e-9) -> list[float]:
    """Scale scores by the list maximum: ``y_i / (max(scores) + eps)``.

    Order-preserving; the largest output approaches 1 as eps shrinks.
    Negative scores pass through the same formula verbatim, with a warning,
    since the result can leave [0, 1] when the maximum is negative.
    """
    if not scores:
        raise ValueError("scores must be non-empty")
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if any(not math.isfinite(s) for s in scores):
        raise ValueError("scores must be finite")
    if any(s < 0 for s in scores):
        warnings.warn("normalizing negative scores; outputs may leave [0, 1]", stacklevel=2)
    top = max(scores)
    return [s / (top + eps) for s in scores]


@dataclass(frozen=True)
class DatasetShare:
    dataset: str
    count: int
    ratio: float


def distribution_report(samples: Iterable[VqaSample]) -> list[DatasetShare]:
    """Per-dataset counts and ratios, sorted by ratio descending (name breaks ties)."""
    counts: dict[str, int] = {}
    total = 0
    for s in samples:
        counts[s.dataset_name] = counts.get(s.dataset_name, 0) + 1
        total += 1
    if total == 0:
        return []
    rows = [
        DatasetShare(dataset=name, count=n, ratio=n / total) for name, n in counts.items()
    ]
    rows.sort(key=lambda r: (-r.ratio, r.dataset))
    return rows
