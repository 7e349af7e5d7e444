"""Spatial-complexity scoring from depth variance and 3D object dispersion.

The total score is a convex combination of two normalized components:

    h_total = alpha * h_depth + (1 - alpha) * h_3d

``h_depth`` averages per-block depth variance and rescales it between the
configured variance floor and ceiling; ``h_3d`` is the Shannon entropy of
object counts over a fixed 3D grid, normalized by the entropy of the uniform
distribution. Both land in [0, 1], as does the fusion. All functions here are
pure and safe to call in parallel over disjoint samples.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DataError
from .types import DepthMap, DepthRef, EntropyConfig, EntropyReport, Object3D, VqaSample


class NoDepthSignalError(DataError):
    """A depth map produced zero valid blocks, so no variance can be averaged."""


BlockStat = tuple[int, float, int]


def _block_is_valid(count: int, block_size: int) -> bool:
    # A block needs at least half its pixels valid to contribute.
    return 2 * count >= block_size * block_size


def depth_block_variances(depth: DepthMap, config: EntropyConfig) -> list[BlockStat]:
    """Per-block population variance over valid pixels.

    Returns one ``(block_index, variance_m2, valid_pixel_count)`` triple per
    non-overlapping ``block_size x block_size`` tile, row-major, with
    remainder rows/columns dropped. Valid pixels are finite and > 0 m;
    a block with zero valid pixels reports variance 0. Raises ``DataError``
    if the map is smaller than one block.
    """
    b = config.block_size
    if depth.height < b or depth.width < b:
        raise DataError(
            f"depth map {depth.width}x{depth.height} is smaller than one {b}x{b} block"
        )
    variances, counts = _kernels.block_stats(depth.grid(), b)
    return [(k, float(variances[k]), int(counts[k])) for k in range(len(counts))]


def _depth_entropy(depth: DepthMap, config: EntropyConfig) -> tuple[float, int]:
    stats = depth_block_variances(depth, config)
    valid = [v for _, v, c in stats if _block_is_valid(c, config.block_size)]
    if not valid:
        raise NoDepthSignalError("no depth block has enough valid pixels")
    mean_var = float(np.mean(valid))
    if mean_var < config.sigma_min_sq:
        h = 0.0
    elif mean_var > config.sigma_max_sq:
        h = 1.0
    else:
        h = (mean_var - config.sigma_min_sq) / (config.sigma_max_sq - config.sigma_min_sq)
    return h, len(valid)


def compute_depth_entropy(depth: DepthMap, config: EntropyConfig) -> float:
    """Normalized mean block variance, clamped to [0, 1].

    The mean is taken over valid blocks only and mapped through
    ``(mean - sigma_min_sq) / (sigma_max_sq - sigma_min_sq)``; means below the
    floor yield exactly 0 and means above the ceiling exactly 1. Raises
    ``NoDepthSignalError`` when no block is valid — callers treat such a map
    as a missing modality.
    """
    h, _ = _depth_entropy(depth, config)
    return h


def _object_histogram(
    objects: Sequence[Object3D], config: EntropyConfig
) -> tuple[np.ndarray, int]:
    usable = [
        o
        for o in objects
        if not o.occluded
        and not o.background
        and all(math.isfinite(c) for c in o.center)
    ]
    nx, ny, nz = config.grid_dims
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = config.grid_bounds
    xs = np.array([o.center[0] for o in usable], dtype=np.float64)
    ys = np.array([o.center[1] for o in usable], dtype=np.float64)
    zs = np.array([o.center[2] for o in usable], dtype=np.float64)
    counts = _kernels.bin_objects(xs, ys, zs, x_lo, x_hi, y_lo, y_hi, z_lo, z_hi, nx, ny, nz)
    return counts, int(counts.sum())


def compute_3d_entropy(objects: Sequence[Object3D], config: EntropyConfig) -> float:
    """Normalized Shannon entropy of object counts over the 3D grid.

    Only non-occluded, non-background objects inside the grid bounds count;
    objects beyond the bounds are dropped rather than clamped to edge cells.
    With cell proportions ``p_t = n_t / M`` the raw entropy is
    ``-sum(p_t * log2(p_t))`` (0 * log2(0) taken as 0), normalized by
    ``log2(G)`` for ``G`` cells. Empty scenes (M = 0) score 0.
    """
    counts, total = _object_histogram(objects, config)
    if total == 0:
        return 0.0
    g = int(np.prod(config.grid_dims))
    if g <= 1:
        return 0.0
    p = counts[counts > 0].astype(np.float64) / total
    raw = float(-(p * np.log2(p)).sum())
    return raw / math.log2(g)


def _default_depth_loader(ref: DepthRef) -> DepthMap:
    from .ingest import load_depth_map

    return load_depth_map(ref.path, ref.width, ref.height)


def compute_total_entropy(
    sample: VqaSample,
    config: EntropyConfig,
    *,
    depth: Optional[DepthMap] = None,
    depth_loader: Optional[Callable[[DepthRef], DepthMap]] = None,
) -> EntropyReport:
    """Fuse both components into the per-sample report.

    A depth map can be passed directly; otherwise ``sample.depth_ref`` is
    loaded through ``depth_loader`` (raw-file loader by default). Missing
    modalities degrade rather than fail: no depth map, a map smaller than one
    block, or a map with zero valid blocks all contribute h_depth = 0, and a
    missing object list contributes h_3d = 0.
    """
    h_depth = 0.0
    valid_blocks = 0
    if depth is None and sample.depth_ref is not None:
        loader = depth_loader or _default_depth_loader
        depth = loader(sample.depth_ref)
    if depth is not None:
        try:
            h_depth, valid_blocks = _depth_entropy(depth, config)
        except DataError:
            h_depth, valid_blocks = 0.0, 0

    h_3d = 0.0
    object_count = 0
    if sample.objects:
        counts, object_count = _object_histogram(sample.objects, config)
        if object_count > 0:
            g = int(np.prod(config.grid_dims))
            if g > 1:
                p = counts[counts > 0].astype(np.float64) / object_count
                h_3d = float(-(p * np.log2(p)).sum()) / math.log2(g)

    h_total = config.alpha * h_depth + (1.0 - config.alpha) * h_3d
    return EntropyReport(
        h_depth=h_depth,
        h_3d=h_3d,
        h_total=h_total,
        valid_blocks=valid_blocks,
        object_count=object_count,
    )
