"""Tier classification and curriculum-stage manifest generation.

Thresholds partition [0, 1] into four tiers (boundaries inclusive on the low
side), then semantic tags can only promote a sample upward, never demote it.
Stage manifests draw without replacement per tier under a seeded RNG, so a
fixed (corpus, stage, seed) triple always yields the same manifest.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .errors import DataError
from .types import TaxonomyConfig, TierLabel


class Stage(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"


@dataclass(frozen=True)
class TierRecord:
    """A classified sample: the minimum a manifest builder needs to know."""

    sample_id: str
    tier: TierLabel
    dataset: str = ""


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    tier: TierLabel
    weight: float


@dataclass(frozen=True)
class CurriculumManifest:
    """One training stage's data mixture, reproducible from (corpus, seed)."""

    stage: Stage
    entries: tuple[ManifestEntry, ...]
    target_mixture: tuple[tuple[TierLabel, float], ...]
    seed: int = 0

    def __post_init__(self) -> None:
        total = sum(f for _, f in self.target_mixture)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"target mixture fractions sum to {total}, expected 1")

    def mixture(self) -> dict[TierLabel, float]:
        return dict(self.target_mixture)


def classify_tier(h_total: float, tags: Iterable[str], config: TaxonomyConfig) -> TierLabel:
    """Threshold classification followed by tag promotion.

    T1 for h <= theta1, T2 up to theta2, T3 up to theta3, T4 above; any
    promote_t4 tag lifts the label to at least T4 and any promote_t3 tag to
    at least T3. Raises ``DataError`` when h is outside [0, 1].
    """
    if not 0.0 <= h_total <= 1.0:
        raise DataError(f"h_total must be in [0, 1], got {h_total}")
    if h_total <= config.theta1:
        label = TierLabel.T1
    elif h_total <= config.theta2:
        label = TierLabel.T2
    elif h_total <= config.theta3:
        label = TierLabel.T3
    else:
        label = TierLabel.T4
    tag_set = set(tags)
    if tag_set & config.promote_t3_tags:
        label = max(label, TierLabel.T3)
    if tag_set & config.promote_t4_tags:
        label = max(label, TierLabel.T4)
    return label


def stage_mixture(stage: Stage, progress: float = 1.0) -> dict[TierLabel, float]:
    """Default tier mixture per stage.

    S1 and S2 are fixed; S3 ramps linearly with ``progress`` in [0, 1] from
    all-T2 to a 0.4/0.4/0.2 blend of T2/T3/T4. S4 has no fixed mixture (it is
    restricted by dataset instead) and raises here.
    """
    if stage is Stage.S1:
        return {TierLabel.T1: 0.7, TierLabel.T2: 0.3}
    if stage is Stage.S2:
        return {TierLabel.T1: 0.1, TierLabel.T2: 0.7, TierLabel.T3: 0.2}
    if stage is Stage.S3:
        if not 0.0 <= progress <= 1.0:
            raise DataError(f"progress must be in [0, 1], got {progress}")
        mix = {
            TierLabel.T2: 1.0 - 0.6 * progress,
            TierLabel.T3: 0.4 * progress,
            TierLabel.T4: 0.2 * progress,
        }
        return {t: f for t, f in mix.items() if f > 0.0}
    raise DataError("stage S4 selects by dataset, not by tier mixture")


def _allocate(n: int, mixture: Mapping[TierLabel, float]) -> dict[TierLabel, int]:
    # Largest-remainder allocation: per-tier counts off by strictly less than 1.
    base = {t: int(f * n) for t, f in mixture.items()}
    remainder = n - sum(base.values())
    fractional = sorted(
        mixture, key=lambda t: (-(mixture[t] * n - base[t]), t)
    )
    for t in fractional[:remainder]:
        base[t] += 1
    return base


def build_stage_manifest(
    stage: Stage,
    corpus: Sequence[TierRecord],
    *,
    progress: float = 1.0,
    schedule: Optional[Callable[[float], Mapping[TierLabel, float]]] = None,
    seed: int = 0,
    size: Optional[int] = None,
    embodied_datasets: Iterable[str] = (),
) -> CurriculumManifest:
    """Assemble one stage's manifest from a classified corpus.

    S1–S3 sample each tier without replacement to match the stage mixture
    (``schedule(progress)`` overrides the default when given); entry weights
    are the tier's target fraction. S4 instead keeps samples whose dataset is
    in ``embodied_datasets``, with the realized tier fractions as the
    mixture. Raises ``DataError`` when a required tier is empty or a custom
    schedule's fractions do not sum to 1.
    """
    if stage is Stage.S4:
        embodied = set(embodied_datasets)
        pool = sorted(
            (r for r in corpus if r.dataset in embodied), key=lambda r: r.sample_id
        )
        if not pool:
            raise DataError("no samples from embodied datasets for stage S4")
        rng = random.Random(seed)
        if size is not None and size < len(pool):
            pool = sorted(rng.sample(pool, size), key=lambda r: r.sample_id)
        counts: dict[TierLabel, int] = {}
        for r in pool:
            counts[r.tier] = counts.get(r.tier, 0) + 1
        n = len(pool)
        mixture = {t: counts[t] / n for t in sorted(counts)}
        entries = tuple(
            ManifestEntry(r.sample_id, r.tier, mixture[r.tier]) for r in pool
        )
        return CurriculumManifest(
            stage=stage,
            entries=entries,
            target_mixture=tuple(sorted(mixture.items())),
            seed=seed,
        )

    if schedule is not None:
        mixture = dict(schedule(progress))
        total = sum(mixture.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"schedule fractions sum to {total}, expected 1")
    else:
        mixture = stage_mixture(stage, progress)

    by_tier: dict[TierLabel, list[TierRecord]] = {}
    for r in corpus:
        by_tier.setdefault(r.tier, []).append(r)
    for records in by_tier.values():
        records.sort(key=lambda r: r.sample_id)

    for tier, fraction in mixture.items():
        if fraction > 0.0 and not by_tier.get(tier):
            raise DataError(f"tier {tier} empty")

    if size is None:
        size = min(int(len(by_tier[t]) / f) for t, f in mixture.items() if f > 0.0)
    if size < 1:
        raise DataError("corpus cannot support even a single manifest entry")

    allocation = _allocate(size, mixture)
    for tier, need in allocation.items():
        have = len(by_tier.get(tier, ()))
        if need > have:
            raise DataError(f"tier {tier} has {have} samples, manifest needs {need}")

    rng = random.Random(seed)
    entries: list[ManifestEntry] = []
    for tier in sorted(allocation):
        chosen = rng.sample(by_tier[tier], allocation[tier])
        entries.extend(ManifestEntry(r.sample_id, tier, mixture[tier]) for r in chosen)

    return CurriculumManifest(
        stage=stage,
        entries=tuple(entries),
        target_mixture=tuple(sorted(mixture.items())),
        seed=seed,
    )


def tier_histogram(tiers: Iterable[TierLabel]) -> dict[TierLabel, tuple[int, float]]:
    """Counts and fractions for all four tiers; fractions are all zero when empty."""
    counts = {t: 0 for t in TierLabel}
    total = 0
    for t in tiers:
        counts[t] += 1
        total += 1
    if total == 0:
        return {t: (0, 0.0) for t in TierLabel}
    return {t: (counts[t], counts[t] / total) for t in TierLabel}


def write_manifest(manifest: CurriculumManifest, path: Union[str, Path]) -> None:
    """Header line with mixture and seed, then one entry per line."""
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(manifest_header(manifest)) + "\n")
        for line in manifest_entry_lines(manifest):
            handle.write(line + "\n")


def manifest_header(manifest: CurriculumManifest) -> dict:
    return {
        "stage": manifest.stage.value,
        "target_mixture": {str(t): f for t, f in manifest.target_mixture},
        "seed": manifest.seed,
    }


def manifest_entry_lines(manifest: CurriculumManifest) -> list[str]:
    return [
        json.dumps(
            {
                "stage": manifest.stage.value,
                "id": e.sample_id,
                "tier": str(e.tier),
                "weight": e.weight,
            }
        )
        for e in manifest.entries
    ]


def read_manifest(path: Union[str, Path]) -> CurriculumManifest:
    with Path(path).open("r", encoding="utf-8") as handle:
        lines = [line for line in (l.strip() for l in handle) if line]
    if not lines:
        raise DataError(f"manifest file {path} is empty")
    header = json.loads(lines[0])
    entries = []
    for line in lines[1:]:
        obj = json.loads(line)
        entries.append(
            ManifestEntry(
                sample_id=str(obj["id"]),
                tier=TierLabel[obj["tier"]],
                weight=float(obj["weight"]),
            )
        )
    return CurriculumManifest(
        stage=Stage(header["stage"]),
        entries=tuple(entries),
        target_mixture=tuple(
            sorted((TierLabel[k], float(v)) for k, v in header["target_mixture"].items())
        ),
        seed=int(header.get("seed", 0)),
    )
