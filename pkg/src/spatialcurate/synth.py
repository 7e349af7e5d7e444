"""Deterministic synthetic corpora for demos, smoke runs, and tests.

Generated samples span all task kinds, a range of depth variances (so every
tier appears), partially invalid depth pixels, objects in and out of the
grid bounds, and the tag values that trigger tier promotion. A copy built
with the defaults ships with the package under ``data/synthetic``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .ingest import write_depth_map, write_samples
from .types import DepthMap, DepthRef, Object3D, TaskKind, VqaSample

DATASETS = ("drive_sim", "robo_sim", "common_vqa")
EMBODIED_DATASETS = frozenset({"drive_sim", "robo_sim"})

_QUESTIONS = {
    TaskKind.SELECTION: "Which option best describes the scene ahead?",
    TaskKind.MATCHING: "Match the described object to its lane position.",
    TaskKind.POINT: "Mark the center of the nearest movable object.",
    TaskKind.BOX: "Draw a tight box around the lead vehicle.",
    TaskKind.OPEN_DESCRIPTION: "Describe the traffic situation in one sentence.",
}

_OPEN_ANSWERS = (
    "a truck waits at the crossing while two cars pass",
    "the intersection is clear with light pedestrian traffic",
    "several parked vans block the rightmost lane",
    "an oncoming bus slows near the marked curve",
)


def _make_answer(kind: TaskKind, rng: np.random.Generator) -> str:
    if kind in (TaskKind.SELECTION, TaskKind.MATCHING):
        return rng.choice(list("ABCD"))
    if kind is TaskKind.POINT:
        x, y = rng.uniform(0, 640, size=2)
        return f"[{x:.1f}, {y:.1f}]"
    if kind is TaskKind.BOX:
        x1, y1 = rng.uniform(0, 500, size=2)
        w, h = rng.uniform(20, 140, size=2)
        return f"[{x1:.1f}, {y1:.1f}, {x1 + w:.1f}, {y1 + h:.1f}]"
    return str(rng.choice(_OPEN_ANSWERS))


def _make_depth(
    rng: np.random.Generator, shape: tuple[int, int], spread: float
) -> DepthMap:
    h, w = shape
    base = rng.uniform(5.0, 30.0)
    values = base + rng.normal(0.0, spread, size=(h, w))
    values = np.maximum(values, 0.1)
    # Occasionally knock out pixels the way sky/invalid returns do.
    if rng.random() < 0.3:
        mask = rng.random(size=(h, w)) < 0.1
        values[mask] = 0.0
    return DepthMap(width=w, height=h, values=values.astype(np.float32).ravel())


def _make_objects(rng: np.random.Generator, count: int) -> tuple[Object3D, ...]:
    objects = []
    for _ in range(count):
        center = (
            float(rng.uniform(-45, 45)),   # sometimes out of bounds on purpose
            float(rng.uniform(-45, 45)),
            float(rng.uniform(-3.5, 5.5)),
        )
        objects.append(
            Object3D(
                center=center,
                category=str(rng.choice(["car", "truck", "pedestrian", "cyclist"])),
                occluded=bool(rng.random() < 0.15),
                background=bool(rng.random() < 0.1),
            )
        )
    return tuple(objects)


def generate_corpus(
    root: Path | str,
    *,
    count: int = 20,
    seed: int = 0,
    depth_shape: tuple[int, int] = (32, 32),
) -> list[VqaSample]:
    """Write ``corpus.jsonl`` plus raw depth payloads under ``root``.

    Depth paths inside the records are relative to ``root``. Fully
    reproducible for a fixed (count, seed, depth_shape).
    """
    root = Path(root)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    kinds = list(TaskKind)
    samples: list[VqaSample] = []

    for i in range(count):
        sample_id = f"syn-{i:05d}"
        kind = kinds[i % len(kinds)]
        dataset = DATASETS[i % len(DATASETS)]

        tags: set[str] = set()
        if rng.random() < 0.15:
            tags.add("multi-view")
        if rng.random() < 0.1:
            tags.add("temporal prediction")

        depth_ref = None
        if rng.random() < 0.85:
            # Spread block variance across the whole normalization range.
            spread = float(rng.uniform(0.0, 6.0))
            depth = _make_depth(rng, depth_shape, spread)
            rel = f"depth/{sample_id}.f32"
            write_depth_map(depth, root / rel)
            depth_ref = DepthRef(path=rel, width=depth.width, height=depth.height)

        objects = None
        if rng.random() < 0.8:
            objects = _make_objects(rng, int(rng.integers(0, 14)))

        samples.append(
            VqaSample(
                id=sample_id,
                question=_QUESTIONS[kind],
                answer=_make_answer(kind, rng),
                task_kind=kind,
                image_refs=(f"images/{sample_id}.jpg",),
                semantic_tags=frozenset(tags),
                depth_ref=depth_ref,
                objects=objects,
                dataset_name=dataset,
            )
        )

    write_samples(samples, root / "corpus.jsonl")
    return samples


def make_samples(
    count: int, *, seed: int = 0, depth_shape: tuple[int, int] = (16, 16)
) -> list[tuple[VqaSample, DepthMap | None]]:
    """In-memory variant: (sample, depth) pairs without touching disk."""
    rng = np.random.default_rng(seed)
    kinds = list(TaskKind)
    out: list[tuple[VqaSample, DepthMap | None]] = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        depth = None
        if rng.random() < 0.9:
            depth = _make_depth(rng, depth_shape, float(rng.uniform(0.0, 6.0)))
        objects = _make_objects(rng, int(rng.integers(0, 14))) if rng.random() < 0.8 else None
        sample = VqaSample(
            id=f"mem-{i:05d}",
            question=_QUESTIONS[kind],
            answer=_make_answer(kind, rng),
            task_kind=kind,
            image_refs=(f"images/mem-{i:05d}.jpg",),
            objects=objects,
            dataset_name=DATASETS[i % len(DATASETS)],
        )
        out.append((sample, depth))
    return out


def bundled_corpus_path() -> Path:
    """Location of the 20-sample corpus shipped with the package."""
    return Path(str(resources.files("spatialcurate") / "data" / "synthetic" / "corpus.jsonl"))
