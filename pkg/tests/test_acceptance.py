"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints a ``[PASS] <criterion>`` line on success (visible with
``pytest -s``); a failed assertion marks the criterion red.
"""

import json
import math
import time

import numpy as np
import pytest

from oracles import iou_by_cell_count, naive_3d_entropy, naive_depth_entropy, naive_bilinear
from spatialcurate.cli import EXIT_OK, run
from spatialcurate.entropy import (
    NoDepthSignalError,
    compute_3d_entropy,
    compute_depth_entropy,
    compute_total_entropy,
)
from spatialcurate.grpo import TokenLogProbs, group_advantages, grpo_objective, kl_term
from spatialcurate.quality import retain
from spatialcurate.reward import Box2D, ParseFailure, compose_total, parse_answer, score_iou
from spatialcurate.synth import bundled_corpus_path, make_samples
from spatialcurate.taxonomy import classify_tier
from spatialcurate.types import (
    DepthMap,
    EntropyConfig,
    EntropyReport,
    FilterConfig,
    GrpoGroup,
    Object3D,
    QualityAssessment,
    RewardConfig,
    TaxonomyConfig,
    TierLabel,
)

ECFG = EntropyConfig()


def depth_from_grid(grid):
    arr = np.asarray(grid, dtype=np.float64)
    return DepthMap(width=arr.shape[1], height=arr.shape[0], values=arr.ravel())


def cell_center(ix, iy, iz):
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = ECFG.grid_bounds
    nx, ny, nz = ECFG.grid_dims
    return (
        x_lo + (ix + 0.5) * (x_hi - x_lo) / nx,
        y_lo + (iy + 0.5) * (y_hi - y_lo) / ny,
        z_lo + (iz + 0.5) * (z_hi - z_lo) / nz,
    )


def test_criterion_entropy_oracle():
    """1,000 random (depth, objects) pairs match naive oracles within 1e-9."""
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        h = int(rng.integers(8, 25))
        w = int(rng.integers(8, 25))
        grid = rng.uniform(0.1, 30.0, size=(h, w))
        if rng.random() < 0.4:
            grid[rng.random(size=grid.shape) < 0.25] = 0.0
        expected_depth = naive_depth_entropy(
            grid.tolist(), ECFG.block_size, ECFG.sigma_min_sq, ECFG.sigma_max_sq
        )
        if expected_depth is None:
            with pytest.raises(NoDepthSignalError):
                compute_depth_entropy(depth_from_grid(grid), ECFG)
        else:
            h_depth = compute_depth_entropy(depth_from_grid(grid), ECFG)
            assert abs(h_depth - expected_depth) <= 1e-9
            assert 0.0 <= h_depth <= 1.0

        objs = tuple(
            Object3D(
                center=(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 7)),
                occluded=bool(rng.random() < 0.2),
                background=bool(rng.random() < 0.1),
            )
            for _ in range(int(rng.integers(0, 20)))
        )
        centers = [o.center for o in objs if not o.occluded and not o.background]
        expected_3d = naive_3d_entropy(centers, ECFG.grid_bounds, ECFG.grid_dims)
        h_3d = compute_3d_entropy(objs, ECFG)
        assert abs(h_3d - expected_3d) <= 1e-9
        assert 0.0 <= h_3d <= 1.0

    # Robin-Hood dispersion: 200 random single-object transfers to an empty cell.
    for _ in range(200):
        n_cells = int(rng.integers(1, 7))
        cells = set()
        while len(cells) < n_cells:
            cells.add((int(rng.integers(0, 8)), int(rng.integers(0, 8)), int(rng.integers(0, 4))))
        counts = {c: int(rng.integers(1, 9)) for c in cells}
        objs = [Object3D(center=cell_center(*c)) for c, n in counts.items() for _ in range(n)]
        before = compute_3d_entropy(tuple(objs), ECFG)
        fullest = max(counts, key=lambda c: (counts[c], c))
        empty = next(
            (ix, iy, iz)
            for ix in range(8) for iy in range(8) for iz in range(4)
            if (ix, iy, iz) not in counts
        )
        after_objs = (
            [Object3D(center=cell_center(*fullest)) for _ in range(counts[fullest] - 1)]
            + [Object3D(center=cell_center(*c)) for c, n in counts.items() if c != fullest for _ in range(n)]
            + [Object3D(center=cell_center(*empty))]
        )
        after = compute_3d_entropy(tuple(after_objs), ECFG)
        assert after >= before - 1e-12

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"entropy oracle run took {elapsed:.1f}s"
    print(f"\n[PASS] entropy oracle: 1000 pairs within 1e-9, 200 transfers, {elapsed:.1f}s")


def test_criterion_default_constant_boundaries():
    """Tier/retention/clamp boundaries behave exactly as pinned."""
    tcfg = TaxonomyConfig()
    assert classify_tier(0.3, set(), tcfg) is TierLabel.T1
    assert classify_tier(0.3 + 1e-9, set(), tcfg) is TierLabel.T2

    decision = retain(
        EntropyReport(h_depth=0.5, h_3d=0.5, h_total=0.5),
        QualityAssessment(0.85, 0.85, 0.85, 0.85, 0.85),
        FilterConfig(),
    )
    assert decision.keep is False and decision.reason == "low-quality"

    # Constant map: variance 0 < sigma_min_sq clamps to exactly 0.
    assert compute_depth_entropy(depth_from_grid(np.full((16, 16), 12.0)), ECFG) == 0.0
    # Equal split {1, 11}: variance exactly 25 = sigma_max_sq maps to exactly 1.
    at_ceiling = np.empty((8, 8))
    at_ceiling[:, ::2] = 1.0
    at_ceiling[:, 1::2] = 11.0
    assert compute_depth_entropy(depth_from_grid(at_ceiling), ECFG) == 1.0
    # And beyond the ceiling still clamps to 1.
    beyond = np.empty((8, 8))
    beyond[:, ::2] = 1.0
    beyond[:, 1::2] = 40.0
    assert compute_depth_entropy(depth_from_grid(beyond), ECFG) == 1.0
    print("\n[PASS] default-constant boundaries: thresholds, strict phi, exact clamps")


def test_criterion_reward_suite():
    """Reward composition, IoU oracle agreement, and the parse fixture."""
    cfg = RewardConfig()
    for r_format in (0.0, 0.5, 1.0):
        for r_correct in (0.0, 0.5, 1.0):
            expected = min(1.0, max(0.0, 0.2 * r_format + 0.8 * r_correct))
            assert abs(compose_total(r_format, r_correct, cfg) - expected) <= 1e-12

    rng = np.random.default_rng(77)
    for _ in range(500):
        ax1, ay1 = int(rng.integers(0, 19)), int(rng.integers(0, 19))
        bx1, by1 = int(rng.integers(0, 19)), int(rng.integers(0, 19))
        a = (ax1, ay1, ax1 + int(rng.integers(0, 21 - ax1)), ay1 + int(rng.integers(0, 21 - ay1)))
        b = (bx1, by1, bx1 + int(rng.integers(0, 21 - bx1)), by1 + int(rng.integers(0, 21 - by1)))
        got = score_iou(Box2D(*a), Box2D(*b))
        assert abs(got - iou_by_cell_count(a, b, canvas=21)) <= 1e-9

    assert abs(score_iou(Box2D(0, 0, 2, 2), Box2D(1, 1, 3, 3)) - 1 / 7) <= 1e-9

    fixture = [
        ("I think <answer>B</answer>", "B"),
        ("<answer> spaced  out </answer>", "spaced  out"),
        ("<answer></answer>", ""),
        ("lead <answer>42</answer> trail", "42"),
        ("B", ParseFailure("missing-open")),
        ("no tags anywhere", ParseFailure("missing-open")),
        ("</answer>stray close", ParseFailure("missing-open")),
        ("<answer>B", ParseFailure("missing-close")),
        ("<answer>B</answer><answer>", ParseFailure("missing-close")),
        ("<answer>B</answer><answer>C</answer>", ParseFailure("multiple-spans")),
        ("<answer>a<answer>b</answer></answer>", ParseFailure("nested")),
        ("<answer><answer>x</answer>", ParseFailure("nested")),
    ]
    assert len(fixture) == 12
    for response, expected in fixture:
        assert parse_answer(response) == expected
    reasons = {e.reason for _, e in fixture if isinstance(e, ParseFailure)}
    assert reasons == {"missing-open", "missing-close", "multiple-spans", "nested"}
    print("\n[PASS] reward suite: 3x3 grid 1e-12, 500 IoU pairs 1e-9, 1/7 case, 12-case parse fixture")


def test_criterion_grpo_numerics():
    """Advantage standardization, the hand-evaluated fixture, KL nonnegativity."""
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 1000:
        size = int(rng.integers(2, 9))
        rewards = rng.uniform(0.0, 1.0, size=size).tolist()
        mean = sum(rewards) / size
        std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / size)
        if std < 0.01:
            continue
        adv = group_advantages(rewards, eps=1e-8)
        assert abs(sum(adv) / size) <= 1e-9
        out_std = math.sqrt(sum(a * a for a in adv) / size - (sum(adv) / size) ** 2)
        assert abs(out_std - 1.0) <= 1e-6
        checked += 1

    # Hand-evaluated 2 responses x 2 tokens fixture, scalar arithmetic only.
    group = GrpoGroup(rewards=(1.0, 0.0), advantages=(1.0, -1.0))
    logprobs = TokenLogProbs.from_lists(
        [[-0.1, -0.2], [-0.5, -0.4]],
        [[-0.3, -0.2], [-0.3, -0.6]],
    )
    r1 = (min(math.exp(0.2), 1.2) * 1.0 + 1.0 * 1.0) / 2
    r2 = (math.exp(-0.2) * -1.0 + min(-math.exp(0.2), -1.2)) / 2
    surrogate = (r1 + r2) / 2
    kl1 = ((math.exp(-0.2) - (-0.2) - 1.0) + (math.exp(0.0) - 0.0 - 1.0)) / 2
    kl2 = ((math.exp(0.2) - 0.2 - 1.0) + (math.exp(-0.2) - (-0.2) - 1.0)) / 2
    kl = (kl1 + kl2) / 2
    expected_loss = -(surrogate - 0.05 * kl)
    result = grpo_objective(group, logprobs, config=RewardConfig(clip_eps=0.2, kl_coeff=0.05))
    assert abs(result.surrogate - surrogate) <= 1e-12
    assert abs(result.kl - kl) <= 1e-12
    assert abs(result.loss - expected_loss) <= 1e-12

    deltas = rng.uniform(-10.0, 10.0, size=10000)
    for d in deltas:
        (v,) = kl_term([0.0], [float(d)])
        assert v >= 0.0
    print("\n[PASS] grpo numerics: 1000 groups standardized, hand fixture 1e-12, 10k kl draws >= 0")


def test_criterion_fusion_oracle():
    """Attention and resampling against independent formulations."""
    from spatialcurate.fusion import (
        bilinear_resample,
        build_eiea_layout,
        cross_attention,
        fuse_residual,
    )

    rng = np.random.default_rng(314)
    for _ in range(100):
        n_q, n_kv, d = int(rng.integers(1, 6)), int(rng.integers(1, 8)), 16
        q = rng.normal(size=(n_q, d))
        kv = rng.normal(size=(n_kv, d))
        ws = [rng.normal(size=(d, d)) for _ in range(4)]
        out, weights = cross_attention(q, kv, *ws, n_heads=2, return_weights=True)
        assert np.all(np.abs(weights.sum(axis=-1) - 1.0) <= 1e-6)
        perm = rng.permutation(n_kv)
        out_perm = cross_attention(q, kv[perm], *ws, n_heads=2)
        assert np.max(np.abs(out - out_perm)) <= 1e-6

    grid = rng.normal(size=(2, 3, 5, 5))
    resampled = bilinear_resample(grid, (9, 9))
    oracle = np.asarray(naive_bilinear(grid.tolist(), 9, 9))
    assert np.max(np.abs(resampled - oracle)) <= 1e-6
    assert np.array_equal(bilinear_resample(grid, (5, 5)), grid)

    e2d = rng.normal(size=(6, 4))
    assert np.array_equal(fuse_residual(e2d, np.zeros_like(e2d)), e2d)

    for _ in range(20):
        text_len = int(rng.integers(1, 30))
        modality_lens = [int(rng.integers(0, 12)) for _ in range(int(rng.integers(0, 5)))]
        layout = build_eiea_layout(text_len, modality_lens)
        # Hand count: walk the expected segment lengths one by one.
        expected = text_len
        expected += 10
        expected += 1
        for i, m in enumerate(modality_lens):
            if i > 0:
                expected += 1
            expected += m
        assert layout.total == expected
        assert layout.text_slice() == slice(0, text_len)
    print("\n[PASS] fusion oracle: row sums, 100 kv permutations, bilinear oracle, 20 layouts")


def test_criterion_pipeline_determinism(tmp_path):
    """Two same-seed runs of the full chain are byte-identical; filter is the
    brute-force conjunction of the two strict thresholds."""
    corpus = str(bundled_corpus_path())

    def chain(workdir):
        workdir.mkdir()
        paths = {
            name: workdir / f"{name}.jsonl"
            for name in ("entropy", "tiers", "quality", "kept", "drops", "manifest")
        }
        assert run(["score", corpus, "-o", str(paths["entropy"]), "--seed", "11"]) == EXIT_OK
        assert run(["classify", str(paths["entropy"]), "--corpus", corpus,
                    "-o", str(paths["tiers"]), "--seed", "11"]) == EXIT_OK
        assert run(["assess", corpus, "--quality-stub", "seed=11",
                    "-o", str(paths["quality"])]) == EXIT_OK
        assert run(["filter", "--corpus", corpus, "--entropy", str(paths["entropy"]),
                    "--quality", str(paths["quality"]), "-o", str(paths["kept"]),
                    "--drop-report", str(paths["drops"])]) == EXIT_OK
        assert run(["curriculum", str(paths["tiers"]), "--stage", "S1", "--seed", "11",
                    "-o", str(paths["manifest"])]) == EXIT_OK
        return {name: p.read_bytes() for name, p in paths.items()}

    first = chain(tmp_path / "run1")
    second = chain(tmp_path / "run2")
    assert first == second

    entropy_rows = [json.loads(l) for l in first["entropy"].decode().splitlines()]
    quality_rows = [json.loads(l) for l in first["quality"].decode().splitlines()]
    h = {r["id"]: r["h_total"] for r in entropy_rows}
    q = {r["id"]: r["mean_score"] for r in quality_rows}
    expected_keep = {i for i in h if h[i] > 0.2 and q[i] > 0.85}
    kept_ids = {json.loads(l)["id"] for l in first["kept"].decode().splitlines()}
    assert kept_ids == expected_keep
    print("\n[PASS] pipeline determinism: byte-identical chain, filter = threshold conjunction")


def test_criterion_throughput_budget():
    """Scoring 10,000 synthetic samples single-threaded stays under 10 s."""
    pairs = make_samples(10000, seed=5, depth_shape=(16, 16))
    cfg = EntropyConfig()
    # Warm any lazily compiled kernels outside the timed region.
    compute_total_entropy(pairs[0][0], cfg, depth=pairs[0][1])

    started = time.perf_counter()
    for sample, depth in pairs:
        report = compute_total_entropy(sample, cfg, depth=depth)
        assert 0.0 <= report.h_total <= 1.0
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"scoring 10k samples took {elapsed:.2f}s"
    print(f"\n[PASS] throughput: 10,000 samples scored single-threaded in {elapsed:.2f}s")
