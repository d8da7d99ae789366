"""Command-line entry point orchestrating the pipeline end to end.

Exit codes: 0 success, 2 configuration, 3 missing input, 4 endpoint
failure, 5 data validation, 1 anything else.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evalharness, pipeline, refmath, taskgen, verify, vlm
from .config import default_config, load_config
from .errors import (
    BenchmarkError,
    ConfigError,
    EndpointError,
    HeightQAError,
    InsufficientDataError,
    MissingLayerError,
    ReviewError,
    SubmissionError,
)

_EXIT_CODES = (
    (ConfigError, 2),
    ((FileNotFoundError, MissingLayerError, InsufficientDataError), 3),
    (EndpointError, 4),
    ((BenchmarkError, SubmissionError, ReviewError), 5),
)


def _exit_code(exc: Exception) -> int:
    for types, code in _EXIT_CODES:
        if isinstance(exc, types):
            return code
    return 1


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (HeightQAError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
    return wrapper


@click.group(invoke_without_command=True)
@click.option("--print-config", "print_config", is_flag=True,
              help="Print the full default configuration as JSON and exit.")
@click.pass_context
def main(ctx, print_config):
    """Benchmark factory and evaluation harness for height-aware QA."""
    if print_config:
        click.echo(json.dumps(default_config().to_json(), indent=2))
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


def _config_with_overrides(config_path, seed, bench, out):
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    if bench is not None:
        cfg.bench = bench
    if out is not None:
        cfg.out_dir = out
    cfg.validate()
    return cfg


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@handle_errors
def ingest(config_path):
    """Validate tiles and write per-tile region metadata."""
    cfg = load_config(config_path)
    summary = pipeline.ingest(cfg)
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--bench", type=click.Choice(["base", "plus"]), default=None)
@click.option("--out", type=click.Path(), default=None, help="Override out_dir.")
@click.option("--replay", "replay_path", type=click.Path(), default=None,
              help="Recorded endpoint store; forces offline generation.")
@handle_errors
def generate(config_path, seed, bench, out, replay_path):
    """Build the benchmark JSONL, its manifest, and the consistency traces."""
    cfg = _config_with_overrides(config_path, seed, bench, out)
    client = None
    if replay_path is not None:
        client = vlm.ReplayClient.load(replay_path)
    payload, manifest, traces = pipeline.generate(cfg, vlm_client=client)
    out_dir = Path(cfg.out_dir)
    bench_path = out_dir / f"bench_{cfg.bench}.jsonl"
    pipeline.atomic_write(bench_path, payload)
    pipeline.atomic_write(out_dir / f"manifest_{cfg.bench}.json",
                          (json.dumps(manifest, indent=2, sort_keys=True) + "\n")
                          .encode("utf-8"))
    if traces:
        trace_lines = "".join(json.dumps(t.to_json(), ensure_ascii=False) + "\n"
                              for t in traces)
        pipeline.atomic_write(out_dir / f"traces_{cfg.bench}.jsonl",
                              trace_lines.encode("utf-8"))
    click.echo(f"wrote {manifest['record_count']} records to {bench_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "store_path", required=True, type=click.Path(),
              help="Replay store to append recorded responses to.")
@handle_errors
def ask(config_path, store_path):
    """Query the live endpoint for the open-ended records, recording every
    response for later deterministic replay."""
    cfg = load_config(config_path)
    if cfg.vlm is None:
        raise ConfigError("ask needs a vlm endpoint config")
    live = vlm.HttpChatClient(cfg.vlm)
    client = vlm.RecordingClient(live, store_path)
    bundles = pipeline.load_tiles(cfg.tile_dir)
    records, traces = pipeline.generate_records(cfg, bundles, vlm_client=client)
    accepted = sum(1 for t in traces if t.accepted)
    click.echo(f"recorded {len(traces)} trace(s), {accepted} accepted, "
               f"{len(records)} record(s) ready; store at {store_path}")


@main.command()
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path())
@click.option("--submission", "submission_path", required=True, type=click.Path())
@click.option("--judge-config", "judge_config_path", type=click.Path(), default=None)
@click.option("--replay", "replay_path", type=click.Path(), default=None,
              help="Recorded judge store; forces offline judging.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--model-name", default=None)
@handle_errors
def evaluate(benchmark_path, submission_path, judge_config_path, replay_path,
             out_path, model_name):
    """Score a submission and emit the JSON report plus a text table."""
    records = taskgen.records_from_jsonl(
        Path(benchmark_path).read_text(encoding="utf-8"))
    submission = evalharness.load_submission(
        Path(submission_path).read_text(encoding="utf-8"),
        model_name=model_name or Path(submission_path).stem)
    judge_client = None
    if replay_path is not None:
        judge_client = vlm.ReplayClient.load(replay_path)
    elif judge_config_path is not None:
        judge_cfg = vlm.EndpointConfig.from_json(
            json.loads(Path(judge_config_path).read_text(encoding="utf-8")))
        judge_client = vlm.make_client(judge_cfg)
    report = evalharness.score_submission(records, submission, judge_client)
    text = evalharness.render_table(report)
    if out_path:
        pipeline.atomic_write(out_path,
                              (json.dumps(report.to_json(), indent=2,
                                          sort_keys=True) + "\n").encode("utf-8"))
        pipeline.atomic_write(Path(out_path).with_suffix(".txt"),
                              text.encode("utf-8"))
    click.echo(text)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path())
@handle_errors
def report(report_path):
    """Re-render the text table from a stored report JSON."""
    obj = json.loads(Path(report_path).read_text(encoding="utf-8"))
    rep = evalharness.EvalReport(
        model_name=obj["model_name"], per_record=obj.get("per_record", []),
        per_task=obj.get("per_task", {}), per_level=obj.get("per_level", {}),
        mask_miou=obj.get("mask_miou", {}), mask_ciou=obj.get("mask_ciou", {}),
        overall_text=obj.get("overall_text", 0.0), unscored=obj.get("unscored", 0))
    click.echo(evalharness.render_table(rep))


@main.command("review-serve")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path())
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Append-only verdict log (replayed on start when present).")
@click.option("--listen", default=None, help="host:port, overrides config.")
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the browser UI assets, served at /ui.")
@handle_errors
def review_serve(config_path, benchmark_path, log_path, listen, static_dir):
    """Serve the human-verification API over the sampled benchmark."""
    import uvicorn

    from .server import create_app

    cfg = load_config(config_path)
    records = taskgen.records_from_jsonl(
        Path(benchmark_path).read_text(encoding="utf-8"))
    items = verify.sample_for_review(records, rate=cfg.review["rate"],
                                     seed=cfg.review["seed"])
    roster = cfg.review["roster"]
    if isinstance(roster, str):  # path to a JSON roster file
        roster = json.loads(Path(roster).read_text(encoding="utf-8"))
    store = verify.ReviewStore(items, roster=roster, log_path=log_path)
    if log_path and Path(log_path).exists():
        store.log_path = None
        applied = store.replay_log(log_path)
        store.log_path = log_path
        click.echo(f"replayed {applied} verdict(s) from {log_path}", err=True)
    bundles = {b.tile_id: b for b in pipeline.load_tiles(cfg.tile_dir)}
    by_id = {r.id: r for r in records}
    app = create_app(store, bundles, by_id, static_dir=static_dir)
    host, _, port = (listen or cfg.review["listen"]).partition(":")
    click.echo(f"serving review API on {host}:{port} "
               f"({len(items)} item(s), roster {cfg.review['roster']})", err=True)
    uvicorn.run(app, host=host, port=int(port or 8008), log_level="warning")


@main.command("refmath")
@click.option("--op", required=True, help="Operation name, e.g. smooth_l1.")
@click.option("--json", "payload_json", default=None,
              help="Inline JSON payload with the operation inputs.")
@click.option("--in", "payload_path", type=click.Path(), default=None,
              help="Path to a JSON payload file.")
@handle_errors
def refmath_cmd(op, payload_json, payload_path):
    """Evaluate one reference-math operation on JSON-encoded arrays."""
    if (payload_json is None) == (payload_path is None):
        raise ConfigError("provide exactly one of --json or --in")
    payload = json.loads(payload_json if payload_json is not None
                         else Path(payload_path).read_text(encoding="utf-8"))
    try:
        result = refmath.evaluate_op(op, payload)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    click.echo(json.dumps({"op": op, "result": result}))


if __name__ == "__main__":
    main()
