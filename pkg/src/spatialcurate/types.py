"""Domain types shared by every pipeline stage.

All types are immutable values after construction and therefore safe to
share between concurrent workers. Each type round-trips through
``to_dict``/``from_dict`` so corpora and reports can be persisted as
line-delimited records.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np


class TaskKind(str, enum.Enum):
    """Which correctness verifier applies to a sample's answer."""

    SELECTION = "selection"
    MATCHING = "matching"
    POINT = "point"
    BOX = "box"
    OPEN_DESCRIPTION = "open_description"


class TierLabel(enum.IntEnum):
    """Difficulty tiers, totally ordered T1 < T2 < T3 < T4."""

    T1 = 1
    T2 = 2
    T3 = 3
    T4 = 4

    def __str__(self) -> str:  # serialized form is the name, not the rank
        return self.name


@dataclass(frozen=True)
class DepthRef:
    """Pointer to a raw depth payload; dimensions live in the record, not the file."""

    path: str
    width: int
    height: int

    def to_dict(self) -> dict:
        return {"path": self.path, "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DepthRef":
        return cls(path=str(d["path"]), width=int(d["width"]), height=int(d["height"]))


@dataclass(frozen=True)
class Object3D:
    """One annotated object center in the ego frame, meters."""

    center: tuple[float, float, float]
    category: Optional[str] = None
    occluded: bool = False
    background: bool = False

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "x": self.center[0],
            "y": self.center[1],
            "z": self.center[2],
            "occluded": self.occluded,
            "background": self.background,
        }
        if self.category is not None:
            d["category"] = self.category
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Object3D":
        return cls(
            center=(float(d["x"]), float(d["y"]), float(d["z"])),
            category=d.get("category"),
            occluded=bool(d.get("occluded", False)),
            background=bool(d.get("background", False)),
        )


@dataclass(frozen=True)
class VqaSample:
    """One question/answer record, the unit flowing through the pipeline."""

    id: str
    question: str
    answer: str
    task_kind: TaskKind
    image_refs: tuple[str, ...] = ()
    semantic_tags: frozenset[str] = frozenset()
    depth_ref: Optional[DepthRef] = None
    objects: Optional[tuple[Object3D, ...]] = None
    dataset_name: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be nonempty")


class DepthMap:
    """Row-major depth values in meters; valid pixels are finite and positive."""

    __slots__ = ("width", "height", "values")

    def __init__(self, width: int, height: int, values: np.ndarray | Sequence[float]):
        arr = np.asarray(values).ravel()
        if arr.size != width * height:
            raise ValueError(
                f"depth values length {arr.size} does not match {width}x{height}"
            )
        self.width = int(width)
        self.height = int(height)
        self.values = arr

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DepthMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"DepthMap({self.width}x{self.height})"

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DepthMap":
        return cls(int(d["width"]), int(d["height"]), np.asarray(d["values"], dtype=np.float64))


@dataclass(frozen=True)
class EntropyConfig:
    """Knobs for the spatial-complexity score."""

    alpha: float = 0.6
    block_size: int = 8
    sigma_min_sq: float = 0.01  # m^2
    sigma_max_sq: float = 25.0  # m^2
    grid_dims: tuple[int, int, int] = (8, 8, 4)
    grid_bounds: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = (
        (-40.0, 40.0),
        (-40.0, 40.0),
        (-3.0, 5.0),
    )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "block_size": self.block_size,
            "sigma_min_sq": self.sigma_min_sq,
            "sigma_max_sq": self.sigma_max_sq,
            "grid_dims": list(self.grid_dims),
            "grid_bounds": [list(b) for b in self.grid_bounds],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EntropyConfig":
        kw: dict[str, Any] = {}
        if "alpha" in d:
            kw["alpha"] = float(d["alpha"])
        if "block_size" in d:
            kw["block_size"] = int(d["block_size"])
        if "sigma_min_sq" in d:
            kw["sigma_min_sq"] = float(d["sigma_min_sq"])
        if "sigma_max_sq" in d:
            kw["sigma_max_sq"] = float(d["sigma_max_sq"])
        if "grid_dims" in d:
            kw["grid_dims"] = tuple(int(v) for v in d["grid_dims"])
        if "grid_bounds" in d:
            kw["grid_bounds"] = tuple(
                (float(lo), float(hi)) for lo, hi in d["grid_bounds"]
            )
        return cls(**kw)


@dataclass(frozen=True)
class EntropyReport:
    """Per-sample complexity scores, all normalized to [0, 1]."""

    h_depth: float
    h_3d: float
    h_total: float
    valid_blocks: int = 0
    object_count: int = 0

    def __post_init__(self) -> None:
        for name in ("h_depth", "h_3d", "h_total"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.valid_blocks < 0 or self.object_count < 0:
            raise ValueError("counts must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "h_depth": self.h_depth,
            "h_3d": self.h_3d,
            "h_total": self.h_total,
            "valid_blocks": self.valid_blocks,
            "object_count": self.object_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EntropyReport":
        return cls(
            h_depth=float(d["h_depth"]),
            h_3d=float(d["h_3d"]),
            h_total=float(d["h_total"]),
            valid_blocks=int(d.get("valid_blocks", 0)),
            object_count=int(d.get("object_count", 0)),
        )


@dataclass(frozen=True)
class TaxonomyConfig:
    """Tier thresholds plus the tag sets that promote samples upward."""

    theta1: float = 0.3
    theta2: float = 0.5
    theta3: float = 0.7
    promote_t3_tags: frozenset[str] = frozenset({"multi-view", "cross-view"})
    promote_t4_tags: frozenset[str] = frozenset(
        {"temporal", "temporal prediction", "prediction"}
    )

    def to_dict(self) -> dict:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "theta3": self.theta3,
            "promote_t3_tags": sorted(self.promote_t3_tags),
            "promote_t4_tags": sorted(self.promote_t4_tags),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaxonomyConfig":
        kw: dict[str, Any] = {}
        for k in ("theta1", "theta2", "theta3"):
            if k in d:
                kw[k] = float(d[k])
        for k in ("promote_t3_tags", "promote_t4_tags"):
            if k in d:
                kw[k] = frozenset(str(t) for t in d[k])
        return cls(**kw)


@dataclass(frozen=True)
class FilterConfig:
    """Retention thresholds: minimum entropy tau, minimum quality phi (both strict)."""

    tau: float = 0.2
    phi: float = 0.85

    def to_dict(self) -> dict:
        return {"tau": self.tau, "phi": self.phi}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FilterConfig":
        kw: dict[str, Any] = {}
        if "tau" in d:
            kw["tau"] = float(d["tau"])
        if "phi" in d:
            kw["phi"] = float(d["phi"])
        return cls(**kw)


@dataclass(frozen=True)
class QualityAssessment:
    """Four-dimension annotation quality scores and their arithmetic mean."""

    correctness: float
    completeness: float
    clarity: float
    relevance: float
    mean_score: float
    clamped: bool = False

    def __post_init__(self) -> None:
        for name in ("correctness", "completeness", "clarity", "relevance"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        expected = (self.correctness + self.completeness + self.clarity + self.relevance) / 4.0
        if abs(self.mean_score - expected) > 1e-12:
            raise ValueError(
                f"mean_score {self.mean_score} is not the mean of the four dimensions ({expected})"
            )

    @classmethod
    def from_scores(
        cls,
        correctness: float,
        completeness: float,
        clarity: float,
        relevance: float,
        clamped: bool = False,
    ) -> "QualityAssessment":
        mean = (correctness + completeness + clarity + relevance) / 4.0
        return cls(correctness, completeness, clarity, relevance, mean, clamped)

    def to_dict(self) -> dict:
        return {
            "correctness": self.correctness,
            "completeness": self.completeness,
            "clarity": self.clarity,
            "relevance": self.relevance,
            "mean_score": self.mean_score,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QualityAssessment":
        return cls(
            correctness=float(d["correctness"]),
            completeness=float(d["completeness"]),
            clarity=float(d["clarity"]),
            relevance=float(d["relevance"]),
            mean_score=float(d["mean_score"]),
            clamped=bool(d.get("clamped", False)),
        )


@dataclass(frozen=True)
class RewardConfig:
    """Reward weighting and the policy-objective hyperparameters."""

    lambda_format: float = 0.2
    lambda_correct: float = 0.8
    point_radius_px: float = 50.0
    kl_coeff: float = 0.05
    clip_eps: float = 0.2
    group_size: int = 4

    def to_dict(self) -> dict:
        return {
            "lambda_format": self.lambda_format,
            "lambda_correct": self.lambda_correct,
            "point_radius_px": self.point_radius_px,
            "kl_coeff": self.kl_coeff,
            "clip_eps": self.clip_eps,
            "group_size": self.group_size,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RewardConfig":
        kw: dict[str, Any] = {}
        for k in ("lambda_format", "lambda_correct", "point_radius_px", "kl_coeff", "clip_eps"):
            if k in d:
                kw[k] = float(d[k])
        if "group_size" in d:
            kw["group_size"] = int(d["group_size"])
        return cls(**kw)


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-response reward components and the verifier that produced them."""

    r_format: float
    r_correct: float
    r_total: float
    verifier: str
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "r_format": self.r_format,
            "r_correct": self.r_correct,
            "r_total": self.r_total,
            "verifier": self.verifier,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RewardBreakdown":
        return cls(
            r_format=float(d["r_format"]),
            r_correct=float(d["r_correct"]),
            r_total=float(d["r_total"]),
            verifier=str(d["verifier"]),
            flags=tuple(str(f) for f in d.get("flags", ())),
        )


@dataclass(frozen=True)
class GrpoGroup:
    """One group of sampled responses: rewards plus their normalized advantages.

    ``ratios`` and ``kl_terms`` are optional per-token series (one list per
    response); when absent they are derived from token log-probabilities at
    objective time.
    """

    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    ratios: Optional[tuple[tuple[float, ...], ...]] = None
    kl_terms: Optional[tuple[tuple[float, ...], ...]] = None

    def __post_init__(self) -> None:
        if len(self.advantages) != len(self.rewards):
            raise ValueError("advantages and rewards must have equal length")
        if self.rewards and len(set(self.rewards)) > 1:
            mean_adv = sum(self.advantages) / len(self.advantages)
            if abs(mean_adv) > 1e-9:
                raise ValueError(f"advantages of a non-constant group must be centered (mean={mean_adv})")
        for series in (self.ratios, self.kl_terms):
            if series is not None and len(series) != len(self.rewards):
                raise ValueError("per-token series must have one entry per response")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "rewards": list(self.rewards),
            "advantages": list(self.advantages),
        }
        if self.ratios is not None:
            d["ratios"] = [list(r) for r in self.ratios]
        if self.kl_terms is not None:
            d["kl_terms"] = [list(k) for k in self.kl_terms]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GrpoGroup":
        def _nested(key: str) -> Optional[tuple[tuple[float, ...], ...]]:
            if key not in d:
                return None
            return tuple(tuple(float(v) for v in row) for row in d[key])

        return cls(
            rewards=tuple(float(r) for r in d["rewards"]),
            advantages=tuple(float(a) for a in d["advantages"]),
            ratios=_nested("ratios"),
            kl_terms=_nested("kl_terms"),
        )


def default_head_count(d_model: int) -> int:
    """Head count rule: one head per 128 channels, never fewer than one."""
    return max(1, d_model // 128)


@dataclass(frozen=True)
class FusionDims:
    """Shape contract for the geometric fusion path."""

    n_queries: int
    n_kv: int
    d_model: int
    n_heads: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_heads is None:
            object.__setattr__(self, "n_heads", default_head_count(self.d_model))
        if self.n_heads != default_head_count(self.d_model):
            raise ValueError(
                f"n_heads {self.n_heads} does not follow the head rule "
                f"max(1, d_model // 128) = {default_head_count(self.d_model)}"
            )
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_kv": self.n_kv,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FusionDims":
        return cls(
            n_queries=int(d["n_queries"]),
            n_kv=int(d["n_kv"]),
            d_model=int(d["d_model"]),
            n_heads=int(d["n_heads"]) if "n_heads" in d else None,
        )


def validate_configs(
    entropy: EntropyConfig,
    taxonomy: TaxonomyConfig,
    filter_config: FilterConfig,
    reward: RewardConfig,
) -> list[str]:
    """Return every violated invariant as ``"field: constraint"``; empty means all hold."""
    violations: list[str] = []

    if not 0.0 <= entropy.alpha <= 1.0:
        violations.append(f"alpha: must be in [0, 1], got {entropy.alpha}")
    if entropy.block_size < 1:
        violations.append(f"block_size: must be >= 1, got {entropy.block_size}")
    if entropy.sigma_min_sq <= 0:
        violations.append(f"sigma_min_sq: must be > 0, got {entropy.sigma_min_sq}")
    if not entropy.sigma_min_sq < entropy.sigma_max_sq:
        violations.append(
            f"sigma_min_sq: sigma_min_sq < sigma_max_sq required, got "
            f"{entropy.sigma_min_sq} vs {entropy.sigma_max_sq}"
        )
    for axis, n in zip("xyz", entropy.grid_dims):
        if n < 1:
            violations.append(f"grid_dims: {axis} dimension must be >= 1, got {n}")
    for axis, (lo, hi) in zip("xyz", entropy.grid_bounds):
        if not lo < hi:
            violations.append(f"grid_bounds: {axis} requires lo < hi, got ({lo}, {hi})")

    if not 0.0 < taxonomy.theta1:
        violations.append(f"theta1: must be > 0, got {taxonomy.theta1}")
    if not taxonomy.theta1 < taxonomy.theta2:
        violations.append(
            f"theta1 < theta2 required, got {taxonomy.theta1} vs {taxonomy.theta2}"
        )
    if not taxonomy.theta2 < taxonomy.theta3:
        violations.append(
            f"theta2 < theta3 required, got {taxonomy.theta2} vs {taxonomy.theta3}"
        )
    if not taxonomy.theta3 < 1.0:
        violations.append(f"theta3: must be < 1, got {taxonomy.theta3}")

    if not 0.0 < filter_config.tau < 1.0:
        violations.append(f"tau: must be in (0, 1), got {filter_config.tau}")
    if not 0.0 < filter_config.phi < 1.0:
        violations.append(f"phi: must be in (0, 1), got {filter_config.phi}")

    if abs(reward.lambda_format + reward.lambda_correct - 1.0) > 1e-12:
        violations.append(
            f"lambda_format + lambda_correct must equal 1, got "
            f"{reward.lambda_format} + {reward.lambda_correct}"
        )
    if reward.lambda_format < 0 or reward.lambda_correct < 0:
        violations.append("lambda weights must be nonnegative")
    if not 0.0 < reward.clip_eps < 1.0:
        violations.append(f"clip_eps: must be in (0, 1), got {reward.clip_eps}")
    if reward.point_radius_px <= 0:
        violations.append(f"point_radius_px: must be > 0, got {reward.point_radius_px}")
    if reward.kl_coeff < 0:
        violations.append(f"kl_coeff: must be >= 0, got {reward.kl_coeff}")
    if reward.group_size < 1:
        violations.append(f"group_size: must be >= 1, got {reward.group_size}")

    return violations
