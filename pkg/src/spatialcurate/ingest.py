"""Line-delimited corpus I/O: sample records, raw depth payloads, manifests.

One JSON object per line. Parsing is single-pass and order-preserving;
malformed lines become in-stream ``RecordError`` values (with line numbers)
instead of aborting, so large corpora survive isolated corruption.

Record schema::

    {"id": str, "dataset": str, "images": [str], "question": str,
     "answer": str, "task_kind": str, "tags": [str],
     "depth": {"path": str, "width": int, "height": int}?,
     "objects": [{"x": f, "y": f, "z": f, "category": str?,
                  "occluded": bool, "background": bool}]?}

Depth payloads are headerless little-endian float32, row-major, meters.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Union

import numpy as np

from .errors import DataError
from .types import DepthMap, DepthRef, Object3D, TaskKind, VqaSample

RECORD_SCHEMA_VERSION = "1"

REQUIRED_FIELDS = ("id", "question", "answer", "task_kind")


@dataclass(frozen=True)
class RecordError:
    """A single bad line: where it was and why it failed."""

    line_no: int
    reason: str


@dataclass(frozen=True)
class CorpusManifest:
    """Corpus-level bookkeeping: where it lives and how it splits by dataset."""

    root: str
    sample_count: int
    per_dataset: tuple[tuple[str, int], ...]
    schema_version: str = RECORD_SCHEMA_VERSION

    def __post_init__(self) -> None:
        total = sum(n for _, n in self.per_dataset)
        if total != self.sample_count:
            raise ValueError(
                f"per-dataset counts sum to {total}, expected {self.sample_count}"
            )

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "sample_count": self.sample_count,
            "per_dataset": {name: n for name, n in self.per_dataset},
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CorpusManifest":
        return cls(
            root=str(d["root"]),
            sample_count=int(d["sample_count"]),
            per_dataset=tuple(sorted((str(k), int(v)) for k, v in d["per_dataset"].items())),
            schema_version=str(d.get("schema_version", RECORD_SCHEMA_VERSION)),
        )


def build_manifest(samples: Iterable[VqaSample], root: str = "") -> CorpusManifest:
    counts: dict[str, int] = {}
    total = 0
    for s in samples:
        counts[s.dataset_name] = counts.get(s.dataset_name, 0) + 1
        total += 1
    return CorpusManifest(
        root=root, sample_count=total, per_dataset=tuple(sorted(counts.items()))
    )


def sample_to_record(sample: VqaSample) -> dict:
    record: dict[str, Any] = {
        "id": sample.id,
        "dataset": sample.dataset_name,
        "images": list(sample.image_refs),
        "question": sample.question,
        "answer": sample.answer,
        "task_kind": sample.task_kind.value,
        "tags": sorted(sample.semantic_tags),
    }
    if sample.depth_ref is not None:
        record["depth"] = sample.depth_ref.to_dict()
    if sample.objects is not None:
        record["objects"] = [o.to_dict() for o in sample.objects]
    return record


def sample_from_record(obj: Mapping[str, Any], *, require_images: bool = False) -> VqaSample:
    """Build a sample from a parsed record; raises ``ValueError`` with the reason."""
    if not isinstance(obj, Mapping):
        raise ValueError("record is not an object")
    for key in REQUIRED_FIELDS:
        if key not in obj:
            raise ValueError(f"missing required field '{key}'")
    sample_id = obj["id"]
    if not isinstance(sample_id, str) or not sample_id:
        raise ValueError("field 'id' must be a nonempty string")
    try:
        task_kind = TaskKind(obj["task_kind"])
    except ValueError:
        raise ValueError(
            f"unknown task_kind '{obj['task_kind']}'; expected one of "
            f"{[k.value for k in TaskKind]}"
        ) from None

    images = tuple(str(p) for p in obj.get("images", ()))
    if require_images and not images:
        raise ValueError("record has no images but images are required")

    tags = frozenset(str(t).lower() for t in obj.get("tags", ()))

    depth_ref = None
    if obj.get("depth") is not None:
        d = obj["depth"]
        try:
            depth_ref = DepthRef.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad depth reference: {exc}") from None
        if depth_ref.width < 1 or depth_ref.height < 1:
            raise ValueError("depth dimensions must be positive")

    objects = None
    if obj.get("objects") is not None:
        parsed = []
        for i, o in enumerate(obj["objects"]):
            try:
                obj3d = Object3D.from_dict(o)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad object at index {i}: {exc}") from None
            if not all(math.isfinite(c) for c in obj3d.center):
                raise ValueError(f"object at index {i} has non-finite coordinates")
            parsed.append(obj3d)
        objects = tuple(parsed)

    return VqaSample(
        id=sample_id,
        question=str(obj["question"]),
        answer=str(obj["answer"]),
        task_kind=task_kind,
        image_refs=images,
        semantic_tags=tags,
        depth_ref=depth_ref,
        objects=objects,
        dataset_name=str(obj.get("dataset", "")),
    )


def read_samples(
    path: Union[str, Path], *, require_images: bool = False
) -> Iterator[Union[VqaSample, RecordError]]:
    """Yield samples and ``RecordError`` values in file order.

    Blank lines are skipped. A missing file raises ``DataError``; everything
    past that is a record-level error that does not stop the stream.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        yield from parse_records(handle, require_images=require_images)


def parse_records(
    lines: Iterable[str], *, require_images: bool = False
) -> Iterator[Union[VqaSample, RecordError]]:
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            yield RecordError(line_no, f"invalid json: {exc.msg}")
            continue
        try:
            yield sample_from_record(obj, require_images=require_images)
        except ValueError as exc:
            yield RecordError(line_no, str(exc))


def split_results(
    results: Iterable[Union[VqaSample, RecordError]]
) -> tuple[list[VqaSample], list[RecordError]]:
    samples: list[VqaSample] = []
    errors: list[RecordError] = []
    for item in results:
        if isinstance(item, RecordError):
            errors.append(item)
        else:
            samples.append(item)
    return samples, errors


def write_samples(samples: Iterable[VqaSample], path: Union[str, Path]) -> int:
    """Write one record per line; returns the number written."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample_to_record(sample)))
            handle.write("\n")
            count += 1
    return count


def load_depth_map(path: Union[str, Path], width: int, height: int) -> DepthMap:
    """Read a raw float32 depth payload with the stated dimensions.

    The file must be exactly ``width * height * 4`` bytes; non-finite values
    load verbatim and are handled by downstream validity rules.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"depth file not found: {path}")
    expected = width * height * 4
    actual = path.stat().st_size
    if actual != expected:
        raise DataError(
            f"depth file {path} has {actual} bytes, expected {expected} "
            f"for {width}x{height} float32"
        )
    values = np.fromfile(path, dtype="<f4")
    return DepthMap(width=width, height=height, values=values)


def write_depth_map(depth: DepthMap, path: Union[str, Path]) -> None:
    np.asarray(depth.values, dtype="<f4").tofile(Path(path))


def resolve_depth_ref(ref: DepthRef, base_dir: Union[str, Path, None]) -> DepthRef:
    """Resolve a relative depth path against the corpus directory."""
    p = Path(ref.path)
    if p.is_absolute() or base_dir is None:
        return ref
    return DepthRef(path=str(Path(base_dir) / p), width=ref.width, height=ref.height)
