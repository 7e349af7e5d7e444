"""Numeric inner loops, compiled with numba when available.

Every kernel ships two implementations: an ``*_numpy`` reference that is
always defined, and a jit-compiled variant used by default. Setting the
environment variable ``CURATE_NO_NUMBA=1`` (or any of ``true``/``yes``)
forces the numpy path; so does a missing numba install. The two paths agree
to floating-point roundoff and are compared in ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    return os.environ.get("CURATE_NO_NUMBA", "0").strip().lower() not in {"1", "true", "yes"}


# ---------------------------------------------------------------------------
# Pure-numpy reference implementations
# ---------------------------------------------------------------------------


def block_stats_numpy(values: np.ndarray, block: int) -> tuple[np.ndarray, np.ndarray]:
    """Valid-pixel population variance and valid count per non-overlapping tile.

    ``values`` is an (H, W) float array; valid pixels are finite and > 0.
    Tiles are ``block x block`` in row-major block order; remainder rows and
    columns are dropped. Tiles with zero valid pixels report variance 0.
    """
    h, w = values.shape
    nbh, nbw = h // block, w // block
    v = np.ascontiguousarray(values[: nbh * block, : nbw * block], dtype=np.float64)
    tiles = (
        v.reshape(nbh, block, nbw, block)
        .transpose(0, 2, 1, 3)
        .reshape(nbh * nbw, block * block)
    )
    valid = np.isfinite(tiles) & (tiles > 0.0)
    counts = valid.sum(axis=1)
    safe = np.maximum(counts, 1)
    sums = np.where(valid, tiles, 0.0).sum(axis=1)
    means = sums / safe
    sq = np.where(valid, (tiles - means[:, None]) ** 2, 0.0).sum(axis=1)
    variances = sq / safe
    variances[counts == 0] = 0.0
    return variances, counts.astype(np.int64)


def bin_objects_numpy(
    xs: np.ndarray,
    ys: np.ndarray,
    zs: np.ndarray,
    x_lo: float,
    x_hi: float,
    y_lo: float,
    y_hi: float,
    z_lo: float,
    z_hi: float,
    nx: int,
    ny: int,
    nz: int,
) -> np.ndarray:
    """Count points per cell of an (nx, ny, nz) grid over the given bounds.

    Points outside the bounds are dropped; points exactly on the upper bound
    fall into the last cell along that axis. Returns flat counts of length
    ``nx * ny * nz`` (x-major, then y, then z).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    total = nx * ny * nz
    if xs.size == 0:
        return np.zeros(total, dtype=np.int64)
    inb = (
        (xs >= x_lo) & (xs <= x_hi)
        & (ys >= y_lo) & (ys <= y_hi)
        & (zs >= z_lo) & (zs <= z_hi)
    )
    ix = np.minimum(((xs - x_lo) / (x_hi - x_lo) * nx).astype(np.int64), nx - 1)
    iy = np.minimum(((ys - y_lo) / (y_hi - y_lo) * ny).astype(np.int64), ny - 1)
    iz = np.minimum(((zs - z_lo) / (z_hi - z_lo) * nz).astype(np.int64), nz - 1)
    flat = (ix * ny + iy) * nz + iz
    return np.bincount(flat[inb], minlength=total).astype(np.int64)


def bilinear_numpy(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a (T, C, H, W) grid to (T, C, out_h, out_w).

    Source coordinates follow the half-pixel-center convention
    ``src = (i + 0.5) * (in / out) - 0.5`` clamped to the valid range, so a
    same-size resample is exactly the identity.
    """
    grid = np.asarray(grid, dtype=np.float64)
    t, c, h, w = grid.shape
    src_y = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    src_x = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0).reshape(1, 1, out_h, 1)
    wx = (src_x - x0).reshape(1, 1, 1, out_w)
    top = grid[:, :, y0, :]
    bot = grid[:, :, y1, :]
    tl = top[:, :, :, x0]
    tr = top[:, :, :, x1]
    bl = bot[:, :, :, x0]
    br = bot[:, :, :, x1]
    return (
        tl * (1.0 - wy) * (1.0 - wx)
        + tr * (1.0 - wy) * wx
        + bl * wy * (1.0 - wx)
        + br * wy * wx
    )


# ---------------------------------------------------------------------------
# Jit-compiled variants and dispatch
# ---------------------------------------------------------------------------

NUMBA_ENABLED = False
block_stats_numba = None
bin_objects_numba = None
bilinear_numba = None

if _numba_requested():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - depends on environment
        njit = None

    if njit is not None:

        @njit(cache=True)
        def _block_stats_jit(values, block):  # pragma: no cover - compiled
            h, w = values.shape
            nbh = h // block
            nbw = w // block
            n = nbh * nbw
            variances = np.zeros(n, dtype=np.float64)
            counts = np.zeros(n, dtype=np.int64)
            for by in range(nbh):
                for bx in range(nbw):
                    k = by * nbw + bx
                    total = 0.0
                    cnt = 0
                    for dy in range(block):
                        for dx in range(block):
                            v = values[by * block + dy, bx * block + dx]
                            if np.isfinite(v) and v > 0.0:
                                total += v
                                cnt += 1
                    if cnt > 0:
                        mean = total / cnt
                        acc = 0.0
                        for dy in range(block):
                            for dx in range(block):
                                v = values[by * block + dy, bx * block + dx]
                                if np.isfinite(v) and v > 0.0:
                                    d = v - mean
                                    acc += d * d
                        variances[k] = acc / cnt
                    counts[k] = cnt
            return variances, counts

        @njit(cache=True)
        def _bin_objects_jit(
            xs, ys, zs, x_lo, x_hi, y_lo, y_hi, z_lo, z_hi, nx, ny, nz
        ):  # pragma: no cover - compiled
            counts = np.zeros(nx * ny * nz, dtype=np.int64)
            for i in range(xs.shape[0]):
                x = xs[i]
                y = ys[i]
                z = zs[i]
                if x < x_lo or x > x_hi or y < y_lo or y > y_hi or z < z_lo or z > z_hi:
                    continue
                ix = int((x - x_lo) / (x_hi - x_lo) * nx)
                iy = int((y - y_lo) / (y_hi - y_lo) * ny)
                iz = int((z - z_lo) / (z_hi - z_lo) * nz)
                if ix >= nx:
                    ix = nx - 1
                if iy >= ny:
                    iy = ny - 1
                if iz >= nz:
                    iz = nz - 1
                counts[(ix * ny + iy) * nz + iz] += 1
            return counts

        @njit(cache=True)
        def _bilinear_jit(grid, out_h, out_w):  # pragma: no cover - compiled
            t, c, h, w = grid.shape
            out = np.empty((t, c, out_h, out_w), dtype=np.float64)
            for oy in range(out_h):
                sy = (oy + 0.5) * (h / out_h) - 0.5
                if sy < 0.0:
                    sy = 0.0
                if sy > h - 1.0:
                    sy = h - 1.0
                y0 = int(np.floor(sy))
                y1 = min(y0 + 1, h - 1)
                wy = sy - y0
                for ox in range(out_w):
                    sx = (ox + 0.5) * (w / out_w) - 0.5
                    if sx < 0.0:
                        sx = 0.0
                    if sx > w - 1.0:
                        sx = w - 1.0
                    x0 = int(np.floor(sx))
                    x1 = min(x0 + 1, w - 1)
                    wx = sx - x0
                    for ti in range(t):
                        for ci in range(c):
                            tl = grid[ti, ci, y0, x0]
                            tr = grid[ti, ci, y0, x1]
                            bl = grid[ti, ci, y1, x0]
                            br = grid[ti, ci, y1, x1]
                            out[ti, ci, oy, ox] = (
                                tl * (1.0 - wy) * (1.0 - wx)
                                + tr * (1.0 - wy) * wx
                                + bl * wy * (1.0 - wx)
                                + br * wy * wx
                            )
            return out

        def block_stats_numba(values: np.ndarray, block: int) -> tuple[np.ndarray, np.ndarray]:
            return _block_stats_jit(np.ascontiguousarray(values, dtype=np.float64), block)

        def bin_objects_numba(xs, ys, zs, x_lo, x_hi, y_lo, y_hi, z_lo, z_hi, nx, ny, nz):
            return _bin_objects_jit(
                np.ascontiguousarray(xs, dtype=np.float64),
                np.ascontiguousarray(ys, dtype=np.float64),
                np.ascontiguousarray(zs, dtype=np.float64),
                float(x_lo), float(x_hi), float(y_lo), float(y_hi),
                float(z_lo), float(z_hi), int(nx), int(ny), int(nz),
            )

        def bilinear_numba(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
            return _bilinear_jit(np.ascontiguousarray(grid, dtype=np.float64), out_h, out_w)

        NUMBA_ENABLED = True


if NUMBA_ENABLED:
    block_stats = block_stats_numba
    bin_objects = bin_objects_numba
    bilinear = bilinear_numba
else:
    block_stats = block_stats_numpy
    bin_objects = bin_objects_numpy
    bilinear = bilinear_numpy
