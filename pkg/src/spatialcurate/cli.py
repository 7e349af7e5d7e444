"""Command-line pipeline over file-based corpora.

Subcommands compose as pipe-friendly stages, each reading and writing
line-delimited JSON (``-`` means stdin/stdout):

    score      corpus -> entropy lines
    classify   entropy + corpus -> tier lines
    assess     corpus -> quality lines
    filter     corpus + entropy + quality -> kept corpus (+ drop report)
    curriculum tier lines -> stage manifest
    reward     responses + corpus -> reward lines
    grpo       group fixtures -> loss breakdowns
    fusion     verify an oracle fixture
    stats      corpus -> per-dataset distribution table

Exit codes: 0 success, 1 usage error, 2 data error, 3 external-service error.
Outputs are ordered by sample id, so identical inputs, config, and seed yield
byte-identical results regardless of ``--jobs``.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import click

from . import fusion as fusion_math
from .entropy import compute_total_entropy
from .errors import DataError, ServiceError
from .grpo import TokenLogProbs, grpo_objective, make_group
from .ingest import (
    load_depth_map,
    parse_records,
    read_samples,
    resolve_depth_ref,
    sample_to_record,
    split_results,
)
from .quality import (
    HttpAssessmentClient,
    StubAssessmentClient,
    batch_assess,
    retain,
)
from .reward import compute_reward
from .stats import distribution_report
from .taxonomy import (
    Stage,
    TierRecord,
    build_stage_manifest,
    classify_tier,
    manifest_entry_lines,
    manifest_header,
)
from .types import (
    EntropyConfig,
    EntropyReport,
    FilterConfig,
    QualityAssessment,
    RewardConfig,
    TaxonomyConfig,
    TierLabel,
    validate_configs,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SERVICE = 3

QUALITY_ENDPOINT_ENV = "CURATE_QUALITY_ENDPOINT"


@dataclass(frozen=True)
class PipelineConfig:
    entropy: EntropyConfig
    taxonomy: TaxonomyConfig
    filter: FilterConfig
    reward: RewardConfig
    seed: int = 0
    jobs: int = 1


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise click.BadParameter(f"expected three grid dimensions, got '{text}'")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _parse_bounds(text: str) -> tuple[tuple[float, float], ...]:
    axes = [a for a in text.split(",") if a.strip()]
    if len(axes) != 3:
        raise click.BadParameter(f"expected three lo:hi ranges, got '{text}'")
    out = []
    for axis in axes:
        lo, _, hi = axis.partition(":")
        try:
            out.append((float(lo), float(hi)))
        except ValueError:
            raise click.BadParameter(f"bad range '{axis}'") from None
    return tuple(out)


_CONFIG_FLOAT_KEYS = (
    "alpha", "sigma_min_sq", "sigma_max_sq",
    "theta1", "theta2", "theta3", "tau", "phi",
    "lambda_format", "lambda_correct", "point_radius_px", "kl_coeff", "clip_eps",
)
_CONFIG_INT_KEYS = ("block_size", "group_size")
_CONFIG_KEYS = set(_CONFIG_FLOAT_KEYS) | set(_CONFIG_INT_KEYS) | {
    "grid_dims", "grid_bounds", "promote_t3_tags", "promote_t4_tags",
}


def _load_config_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise click.UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config file is not valid json: {exc}")
    if not isinstance(raw, dict):
        raise click.UsageError("config file must hold a flat json object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    return raw


def config_options(fn):
    options = [
        click.option("--config", "config_path", type=str, default=None,
                     help="Flat key-value json file; flags override it."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--jobs", type=int, default=1, show_default=True),
        click.option("--alpha", type=float, default=None),
        click.option("--block-size", type=int, default=None),
        click.option("--sigma-min-sq", type=float, default=None),
        click.option("--sigma-max-sq", type=float, default=None),
        click.option("--grid-dims", type=str, default=None, help="e.g. 8x8x4"),
        click.option("--grid-bounds", type=str, default=None,
                     help="e.g. -40:40,-40:40,-3:5"),
        click.option("--theta1", type=float, default=None),
        click.option("--theta2", type=float, default=None),
        click.option("--theta3", type=float, default=None),
        click.option("--promote-t3-tags", type=str, default=None),
        click.option("--promote-t4-tags", type=str, default=None),
        click.option("--tau", type=float, default=None),
        click.option("--phi", type=float, default=None),
        click.option("--lambda-format", type=float, default=None),
        click.option("--lambda-correct", type=float, default=None),
        click.option("--point-radius-px", type=float, default=None),
        click.option("--kl-coeff", type=float, default=None),
        click.option("--clip-eps", type=float, default=None),
        click.option("--group-size", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _resolve_pipeline_config(kwargs: dict) -> PipelineConfig:
    values: dict = {}
    config_path = kwargs.pop("config_path", None)
    if config_path:
        values.update(_load_config_file(config_path))

    flag_map = {
        "alpha": kwargs.pop("alpha"),
        "block_size": kwargs.pop("block_size"),
        "sigma_min_sq": kwargs.pop("sigma_min_sq"),
        "sigma_max_sq": kwargs.pop("sigma_max_sq"),
        "theta1": kwargs.pop("theta1"),
        "theta2": kwargs.pop("theta2"),
        "theta3": kwargs.pop("theta3"),
        "tau": kwargs.pop("tau"),
        "phi": kwargs.pop("phi"),
        "lambda_format": kwargs.pop("lambda_format"),
        "lambda_correct": kwargs.pop("lambda_correct"),
        "point_radius_px": kwargs.pop("point_radius_px"),
        "kl_coeff": kwargs.pop("kl_coeff"),
        "clip_eps": kwargs.pop("clip_eps"),
        "group_size": kwargs.pop("group_size"),
    }
    for key, value in flag_map.items():
        if value is not None:
            values[key] = value
    grid_dims = kwargs.pop("grid_dims")
    if grid_dims is not None:
        values["grid_dims"] = _parse_dims(grid_dims)
    grid_bounds = kwargs.pop("grid_bounds")
    if grid_bounds is not None:
        values["grid_bounds"] = _parse_bounds(grid_bounds)
    for key in ("promote_t3_tags", "promote_t4_tags"):
        flag = kwargs.pop(key)
        if flag is not None:
            values[key] = [t.strip().lower() for t in flag.split(",") if t.strip()]

    entropy = EntropyConfig.from_dict(values)
    taxonomy = TaxonomyConfig.from_dict(values)
    filter_config = FilterConfig.from_dict(values)
    reward = RewardConfig.from_dict(values)
    violations = validate_configs(entropy, taxonomy, filter_config, reward)
    if violations:
        raise click.UsageError("invalid configuration: " + "; ".join(violations))

    seed = kwargs.pop("seed")
    jobs = kwargs.pop("jobs")
    if jobs < 1:
        raise click.UsageError(f"--jobs must be >= 1, got {jobs}")
    return PipelineConfig(
        entropy=entropy, taxonomy=taxonomy, filter=filter_config, reward=reward,
        seed=seed, jobs=jobs,
    )


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def _read_lines(path: str) -> list[str]:
    if path == "-":
        return sys.stdin.read().splitlines()
    p = Path(path)
    if not p.exists():
        raise DataError(f"input file not found: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def _read_json_lines(path: str) -> list[dict]:
    rows = []
    for line_no, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            rows.append(json.loads(stripped))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: invalid json: {exc.msg}")
    return rows


class _Output:
    def __init__(self, path: str):
        self.path = path
        self._handle: Optional[TextIO] = None

    def __enter__(self) -> TextIO:
        if self.path == "-":
            return sys.stdout
        self._handle = Path(self.path).open("w", encoding="utf-8")
        return self._handle

    def __exit__(self, *exc) -> None:
        if self._handle is not None:
            self._handle.close()


def _emit(handle: TextIO, rows: Iterable[dict]) -> int:
    count = 0
    for row in rows:
        handle.write(json.dumps(row))
        handle.write("\n")
        count += 1
    return count


def _load_corpus(path: str, *, require_images: bool = False):
    if path == "-":
        results = parse_records(sys.stdin, require_images=require_images)
    else:
        results = read_samples(path, require_images=require_images)
    samples, errors = split_results(results)
    if errors:
        first = errors[0]
        click.echo(
            f"warning: {len(errors)} record error(s), first at line {first.line_no}: "
            f"{first.reason}",
            err=True,
        )
    if not samples and errors:
        raise DataError("corpus contains no parseable records")
    return samples


def _corpus_base_dir(path: str) -> Optional[Path]:
    return None if path == "-" else Path(path).resolve().parent


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


@click.group()
def cli() -> None:
    """Spatial-entropy curation pipeline and reward/fusion numerics."""


@cli.command()
@click.argument("corpus", type=str)
@click.option("--output", "-o", type=str, default="-")
@click.option("--require-images", is_flag=True,
              help="Reject text-only records (curation-run validation).")
@config_options
def score(corpus: str, output: str, require_images: bool, **kwargs) -> int:
    """Emit one entropy report per corpus sample."""
    cfg = _resolve_pipeline_config(kwargs)
    samples = _load_corpus(corpus, require_images=require_images)
    base_dir = _corpus_base_dir(corpus)

    def loader(ref):
        resolved = resolve_depth_ref(ref, base_dir)
        return load_depth_map(resolved.path, resolved.width, resolved.height)

    def score_one(sample):
        report = compute_total_entropy(sample, cfg.entropy, depth_loader=loader)
        return {"id": sample.id, **report.to_dict()}

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(score_one, samples))
    else:
        rows = [score_one(s) for s in samples]
    rows.sort(key=lambda r: r["id"])
    with _Output(output) as handle:
        _emit(handle, rows)
    return EXIT_OK


@cli.command()
@click.argument("entropy", type=str)
@click.option("--corpus", required=True, type=str)
@click.option("--output", "-o", type=str, default="-")
@config_options
def classify(entropy: str, corpus: str, output: str, **kwargs) -> int:
    """Turn entropy lines into tier lines using thresholds plus tag promotion."""
    cfg = _resolve_pipeline_config(kwargs)
    samples = {s.id: s for s in _load_corpus(corpus)}
    rows = []
    for obj in _read_json_lines(entropy):
        if "id" not in obj or "h_total" not in obj:
            raise DataError("entropy lines need 'id' and 'h_total'")
        sample = samples.get(obj["id"])
        if sample is None:
            raise DataError(f"entropy line for unknown sample '{obj['id']}'")
        tier = classify_tier(float(obj["h_total"]), sample.semantic_tags, cfg.taxonomy)
        rows.append({"id": sample.id, "tier": str(tier), "dataset": sample.dataset_name})
    rows.sort(key=lambda r: r["id"])
    with _Output(output) as handle:
        _emit(handle, rows)
    return EXIT_OK


@cli.command()
@click.argument("corpus", type=str)
@click.option("--quality-endpoint", type=str, default=None,
              envvar=QUALITY_ENDPOINT_ENV,
              help=f"Judge service URL (or ${QUALITY_ENDPOINT_ENV}).")
@click.option("--quality-stub", type=str, default=None,
              help="Deterministic offline judge, e.g. 'seed=7'.")
@click.option("--output", "-o", type=str, default="-")
@click.option("--require-images", is_flag=True,
              help="Reject text-only records (curation-run validation).")
@config_options
def assess(
    corpus: str, quality_endpoint: Optional[str], quality_stub: Optional[str],
    output: str, require_images: bool, **kwargs,
) -> int:
    """Score corpus quality through the judge service or the seeded stub."""
    cfg = _resolve_pipeline_config(kwargs)
    if quality_stub is not None:
        key, _, value = quality_stub.partition("=")
        if key.strip() != "seed":
            raise click.UsageError(f"--quality-stub expects 'seed=<n>', got '{quality_stub}'")
        try:
            stub_seed = int(value)
        except ValueError:
            raise click.UsageError(f"--quality-stub seed must be an integer, got '{value}'")
        client = StubAssessmentClient(seed=stub_seed)
    elif quality_endpoint:
        client = HttpAssessmentClient(quality_endpoint)
    else:
        raise click.UsageError(
            f"no judge configured: pass --quality-stub seed=<n>, --quality-endpoint, "
            f"or set ${QUALITY_ENDPOINT_ENV}"
        )

    samples = _load_corpus(corpus, require_images=require_images)
    rows = []
    failed = False
    for sample, result in batch_assess(samples, client, parallelism=cfg.jobs):
        if isinstance(result, QualityAssessment):
            rows.append({"id": sample.id, **result.to_dict()})
        else:
            failed = True
            rows.append({"id": sample.id, "error": "assessment-unavailable",
                         "detail": str(result)})
    rows.sort(key=lambda r: r["id"])
    with _Output(output) as handle:
        _emit(handle, rows)
    return EXIT_SERVICE if failed else EXIT_OK


@cli.command(name="filter")
@click.option("--corpus", required=True, type=str)
@click.option("--entropy", required=True, type=str)
@click.option("--quality", required=True, type=str)
@click.option("--output", "-o", type=str, default="-")
@click.option("--drop-report", type=str, default=None,
              help="Write dropped ids with reasons to this file.")
@config_options
def filter_cmd(
    corpus: str, entropy: str, quality: str, output: str,
    drop_report: Optional[str], **kwargs,
) -> int:
    """Keep samples passing both strict thresholds; report the rest."""
    cfg = _resolve_pipeline_config(kwargs)
    samples = _load_corpus(corpus)

    entropy_by_id = {}
    for obj in _read_json_lines(entropy):
        entropy_by_id[obj["id"]] = obj
    quality_by_id = {}
    for obj in _read_json_lines(quality):
        if "error" in obj:
            raise DataError(f"quality line for '{obj.get('id')}' carries an error; "
                            "re-run assess before filtering")
        quality_by_id[obj["id"]] = obj

    kept_rows = []
    drops = []
    for sample in sorted(samples, key=lambda s: s.id):
        if sample.id not in entropy_by_id:
            raise DataError(f"sample '{sample.id}' missing from entropy input")
        if sample.id not in quality_by_id:
            raise DataError(f"sample '{sample.id}' missing from quality input")
        report = EntropyReport.from_dict(entropy_by_id[sample.id])
        assessment = QualityAssessment.from_dict(quality_by_id[sample.id])
        decision = retain(report, assessment, cfg.filter)
        if decision.keep:
            kept_rows.append(sample_to_record(sample))
        else:
            drops.append({"id": sample.id, "reason": decision.reason})

    with _Output(output) as handle:
        _emit(handle, kept_rows)
    if drop_report is not None:
        with _Output(drop_report) as handle:
            _emit(handle, drops)
    click.echo(f"kept {len(kept_rows)}, dropped {len(drops)}", err=True)
    return EXIT_OK


@cli.command()
@click.argument("tiers", type=str)
@click.option("--stage", required=True,
              type=click.Choice([s.value for s in Stage]))
@click.option("--progress", type=float, default=1.0, show_default=True)
@click.option("--size", type=int, default=None)
@click.option("--embodied-datasets", type=str, default="",
              help="Comma-separated dataset names eligible for stage S4.")
@click.option("--output", "-o", type=str, default="-")
@config_options
def curriculum(
    tiers: str, stage: str, progress: float, size: Optional[int],
    embodied_datasets: str, output: str, **kwargs,
) -> int:
    """Build one training stage's manifest from classified tier lines."""
    cfg = _resolve_pipeline_config(kwargs)
    records = []
    for obj in _read_json_lines(tiers):
        try:
            records.append(
                TierRecord(
                    sample_id=str(obj["id"]),
                    tier=TierLabel[obj["tier"]],
                    dataset=str(obj.get("dataset", "")),
                )
            )
        except KeyError as exc:
            raise DataError(f"bad tier line {obj}: {exc}")
    embodied = {d.strip() for d in embodied_datasets.split(",") if d.strip()}
    manifest = build_stage_manifest(
        Stage(stage), records, progress=progress, seed=cfg.seed, size=size,
        embodied_datasets=embodied,
    )
    with _Output(output) as handle:
        handle.write(json.dumps(manifest_header(manifest)) + "\n")
        for line in manifest_entry_lines(manifest):
            handle.write(line + "\n")
    return EXIT_OK


@cli.command(name="reward")
@click.argument("responses", type=str)
@click.option("--corpus", required=True, type=str)
@click.option("--output", "-o", type=str, default="-")
@config_options
def reward_cmd(responses: str, corpus: str, output: str, **kwargs) -> int:
    """Score model responses against the corpus ground truth."""
    cfg = _resolve_pipeline_config(kwargs)
    samples = {s.id: s for s in _load_corpus(corpus)}
    rows = []
    for obj in _read_json_lines(responses):
        if "id" not in obj or "response" not in obj:
            raise DataError("response lines need 'id' and 'response'")
        sample = samples.get(obj["id"])
        if sample is None:
            raise DataError(f"response for unknown sample '{obj['id']}'")
        breakdown = compute_reward(str(obj["response"]), sample, cfg.reward)
        row = {
            "id": sample.id,
            "r_format": breakdown.r_format,
            "r_correct": breakdown.r_correct,
            "r_total": breakdown.r_total,
            "verifier": breakdown.verifier,
        }
        if breakdown.flags:
            row["flags"] = list(breakdown.flags)
        rows.append(row)
    rows.sort(key=lambda r: r["id"])
    with _Output(output) as handle:
        _emit(handle, rows)
    return EXIT_OK


@cli.command(name="grpo")
@click.argument("fixture", type=str)
@click.option("--output", "-o", type=str, default="-")
@config_options
def grpo_cmd(fixture: str, output: str, **kwargs) -> int:
    """Evaluate the policy objective for each fixture group."""
    cfg = _resolve_pipeline_config(kwargs)
    rows = []
    for obj in _read_json_lines(fixture):
        if "rewards" not in obj:
            raise DataError("grpo fixture lines need 'rewards'")
        try:
            group = make_group([float(r) for r in obj["rewards"]])
        except ValueError as exc:
            raise DataError(str(exc))
        if "logp_policy" in obj and "logp_ref" in obj:
            try:
                logprobs = TokenLogProbs.from_lists(obj["logp_policy"], obj["logp_ref"])
                result = grpo_objective(group, logprobs, config=cfg.reward)
            except ValueError as exc:
                raise DataError(str(exc))
            rows.append(result.to_dict())
        else:
            rows.append({"advantages": list(group.advantages)})
    with _Output(output) as handle:
        _emit(handle, rows)
    return EXIT_OK


@cli.group()
def fusion() -> None:
    """Oracle checks for the fusion forward math."""


@fusion.command()
@click.argument("fixture", type=str)
def verify(fixture: str) -> int:
    """Recompute a fixture's outputs and diff against its expectations."""
    diffs = fusion_math.verify_fixture(fixture)
    if diffs:
        for diff in diffs:
            click.echo(diff, err=True)
        return EXIT_DATA
    click.echo("ok")
    return EXIT_OK


@cli.command(name="stats")
@click.argument("corpus", type=str)
@click.option("--format", "fmt", type=click.Choice(["text", "jsonl"]),
              default="text", show_default=True)
@click.option("--output", "-o", type=str, default="-")
def stats_cmd(corpus: str, fmt: str, output: str) -> int:
    """Per-dataset sample counts and ratios, largest share first."""
    samples = _load_corpus(corpus)
    rows = distribution_report(samples)
    with _Output(output) as handle:
        if fmt == "jsonl":
            _emit(handle, [
                {"dataset": r.dataset, "count": r.count, "ratio": r.ratio} for r in rows
            ])
        else:
            if rows:
                width = max(len(r.dataset) for r in rows)
                for r in rows:
                    handle.write(f"{r.dataset:<{width}}  {r.count:>8}  {r.ratio:>8.2%}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Dispatch argv and map every failure class onto its exit code."""
    if argv is None:
        argv = sys.argv[1:]
    try:
        result = cli.main(args=list(argv), standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except ServiceError as exc:
        click.echo(f"service error: {exc}", err=True)
        return EXIT_SERVICE
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
