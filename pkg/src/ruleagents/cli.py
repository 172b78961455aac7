"""Command-line interface.

Exit codes: 0 success, 1 domain failure (run failed, graph invalid),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import yaml

from . import bench, explain
from .config import Config, load_config
from .core import Task, TaskExecutionGraph, validate_teg
from .errors import ConfigurationError, DatasetError, JoinError, ParseError, RunError
from .orchestrator import run, run_benchmark
from .trace import RunTrace

log = logging.getLogger("ruleagents")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _dump_json(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_task(source: str) -> Task:
    text = sys.stdin.read() if source == "-" else Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return Task("task", text.strip())
    if not isinstance(doc, dict):
        raise ParseError("task document must be a JSON object")
    if "text" in doc:
        meta = {str(k): str(v) for k, v in (doc.get("metadata") or {}).items()}
        return Task(str(doc.get("id", "task")), doc["text"], meta)
    kind = doc.get("kind") or ("trivia" if "topic" in doc else "logic" if "input" in doc else "codenames")
    return bench.instance_from_dict(doc, kind).to_task()


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    try:
        task = _read_task(args.task)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read task: {exc}", file=sys.stderr)
        return EXIT_USAGE
    backend = config.make_backend()
    clock = "logical" if config.deterministic else "wall"
    trace = RunTrace(task.id, path=args.trace_out, clock=clock)
    try:
        result = run(task, backend, config.run_settings(), trace)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        trace.close()
    print(result.text)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.dataset == "trivia" and args.n is not None and args.n not in bench.TRIVIA_SIZES:
        print(f"error: --n must be one of {bench.TRIVIA_SIZES} for trivia", file=sys.stderr)
        return EXIT_USAGE
    try:
        instances = bench.load_dataset(args.path, args.dataset, args.n)
    except (OSError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or f"reports/{Path(args.path).stem}.json")
    cache = out.with_suffix(".cache.json") if args.resume else None
    backend = config.make_backend(cache)
    report = run_benchmark(
        instances,
        backend,
        config.run_settings(),
        trace_dir=args.trace_dir,
        baseline_pct=args.baseline,
        clock="logical" if config.deterministic else "wall",
    )
    if cache is not None:
        backend.save()
    _dump_json(report.to_dict(), out)
    print(f"{args.dataset}: {len(instances)} instances, mean {report.mean_score_pct:.1f}%")
    if report.delta_pct is not None:
        print(bench.format_delta(report.delta_pct))
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else Config()
    report_doc = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    rows = report_doc["rows"] if isinstance(report_doc, dict) else report_doc
    scores = {r["run_id"]: float(r["score"]) for r in rows}
    trace_dir = Path(args.trace)
    traces = {p.stem: RunTrace.load(p) for p in sorted(trace_dir.glob("*.jsonl"))}
    try:
        samples = explain.build_samples(traces, scores, args.group, config.domains)
    except JoinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    instances = {r["run_id"]: bench.instance_from_dict(r["instance"], r["kind"]) for r in rows}
    fusion = config.run_settings().fusion
    value_fns = {s.sample_id: explain.trace_value_fn(s, traces, instances, fusion) for s in samples}
    try:
        shap_rows, attribution = explain.attribute(
            samples, value_fns, args.mode, args.permutations, args.seed
        )
    except explain.TooManyFeatures as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or "explain/beeswarm.csv")
    explain.emit_beeswarm(shap_rows, out)
    _dump_json(attribution.to_dict(), Path(args.report) if args.report else out.with_suffix(".report.json"))
    print(f"{len(samples)} samples, {len(shap_rows)} rows -> {out}")
    print(f"max efficiency residual {attribution.max_residual:.3e}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        doc = yaml.safe_load(Path(args.plan).read_text(encoding="utf-8"))
        graph = TaskExecutionGraph.from_dict(doc)
    except (OSError, yaml.YAMLError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # duplicate ids and friends surface at construction
        print(f"invalid: {exc}")
        return EXIT_FAIL
    violations = validate_teg(graph)
    if not violations:
        print("ok")
        return EXIT_OK
    for v in violations:
        print(f"violation: {v}")
    return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruleagents", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="plan and execute one task")
    p.add_argument("--task", required=True, help="task JSON file, or - for stdin")
    p.add_argument("--config", required=True)
    p.add_argument("--trace-out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run and score a dataset")
    p.add_argument("--dataset", required=True, choices=bench.KINDS)
    p.add_argument("--path", required=True)
    p.add_argument("--n", type=int, default=None, help="trivia questions per instance (5 or 10)")
    p.add_argument("--baseline", type=float, default=None, help="baseline score in percent")
    p.add_argument("--out", default=None)
    p.add_argument("--trace-dir", default="traces")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true", help="cache completions next to the report")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("explain", help="Shapley attribution over traced runs")
    p.add_argument("--trace", required=True, help="directory of <run_id>.jsonl traces")
    p.add_argument("--scores", required=True, help="bench report JSON")
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("validate", help="check a task-execution graph document")
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
