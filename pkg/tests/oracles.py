"""Naive reference implementations used as independent test oracles.

Everything here is deliberately written as plain double loops over Python
scalars, independent of the package's vectorized/jit code paths.
"""

from __future__ import annotations

import math


def naive_block_stats(grid, block):
    """Per-block (variance, valid_count) via explicit loops; valid = finite and > 0."""
    h = len(grid)
    w = len(grid[0]) if h else 0
    stats = []
    for by in range(h // block):
        for bx in range(w // block):
            pixels = []
            for dy in range(block):
                for dx in range(block):
                    v = float(grid[by * block + dy][bx * block + dx])
                    if math.isfinite(v) and v > 0.0:
                        pixels.append(v)
            if not pixels:
                stats.append((0.0, 0))
                continue
            mean = sum(pixels) / len(pixels)
            var = sum((p - mean) ** 2 for p in pixels) / len(pixels)
            stats.append((var, len(pixels)))
    return stats


def naive_depth_entropy(grid, block, sigma_min_sq, sigma_max_sq):
    """Mean valid-block variance mapped to [0, 1]; None when no block is valid."""
    stats = naive_block_stats(grid, block)
    valid = [v for v, c in stats if 2 * c >= block * block]
    if not valid:
        return None
    mean_var = sum(valid) / len(valid)
    if mean_var < sigma_min_sq:
        return 0.0
    if mean_var > sigma_max_sq:
        return 1.0
    return (mean_var - sigma_min_sq) / (sigma_max_sq - sigma_min_sq)


def naive_3d_entropy(centers, bounds, dims):
    """Shannon entropy of the cell histogram over usable centers, normalized.

    ``centers`` are (x, y, z) triples already filtered for occlusion and
    background; out-of-bounds points are dropped here.
    """
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = bounds
    nx, ny, nz = dims
    counts = {}
    total = 0
    for x, y, z in centers:
        if not (x_lo <= x <= x_hi and y_lo <= y <= y_hi and z_lo <= z <= z_hi):
            continue
        ix = min(int((x - x_lo) / (x_hi - x_lo) * nx), nx - 1)
        iy = min(int((y - y_lo) / (y_hi - y_lo) * ny), ny - 1)
        iz = min(int((z - z_lo) / (z_hi - z_lo) * nz), nz - 1)
        key = (ix, iy, iz)
        counts[key] = counts.get(key, 0) + 1
        total += 1
    if total == 0:
        return 0.0
    g = nx * ny * nz
    if g <= 1:
        return 0.0
    raw = 0.0
    for n in counts.values():
        p = n / total
        raw -= p * math.log2(p)
    return raw / math.log2(g)


def naive_bilinear(grid, out_h, out_w):
    """Direct formula per output pixel for a (T, C, H, W) nested list / array."""
    t = len(grid)
    c = len(grid[0])
    h = len(grid[0][0])
    w = len(grid[0][0][0])
    out = [
        [[[0.0] * out_w for _ in range(out_h)] for _ in range(c)] for _ in range(t)
    ]
    for oy in range(out_h):
        sy = min(max((oy + 0.5) * (h / out_h) - 0.5, 0.0), h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        wy = sy - y0
        for ox in range(out_w):
            sx = min(max((ox + 0.5) * (w / out_w) - 0.5, 0.0), w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            wx = sx - x0
            for ti in range(t):
                for ci in range(c):
                    g = grid[ti][ci]
                    out[ti][ci][oy][ox] = (
                        float(g[y0][x0]) * (1 - wy) * (1 - wx)
                        + float(g[y0][x1]) * (1 - wy) * wx
                        + float(g[y1][x0]) * wy * (1 - wx)
                        + float(g[y1][x1]) * wy * wx
                    )
    return out


def iou_by_cell_count(a, b, canvas=20):
    """IoU of two integer boxes by counting unit cells on a canvas.

    Boxes are (x_min, y_min, x_max, y_max) with integer coordinates. A unit
    cell (i, j) lies inside a box iff x_min <= i and i + 1 <= x_max (same for
    y). Degenerate-vs-degenerate follows the identical-boxes rule.
    """
    if a == b:
        return 1.0
    inter = 0
    union = 0
    for i in range(-canvas, 2 * canvas):
        for j in range(-canvas, 2 * canvas):
            in_a = a[0] <= i and i + 1 <= a[2] and a[1] <= j and j + 1 <= a[3]
            in_b = b[0] <= i and i + 1 <= b[2] and b[1] <= j and j + 1 <= b[3]
            if in_a and in_b:
                inter += 1
            if in_a or in_b:
                union += 1
    if union == 0:
        return 0.0
    return inter / union


def naive_tier(h, theta1, theta2, theta3):
    """Plain if-chain over the thresholds, no promotion."""
    if h <= theta1:
        return "T1"
    if h <= theta2:
        return "T2"
    if h <= theta3:
        return "T3"
    return "T4"
