from __future__ import annotations

from pathlib import Path

import pytest

from ruleagents.agents import Claim, RuleResponse
from ruleagents.backend import Playbook, PlaybookEntry, ScriptedBackend
from ruleagents.core import MembershipTerm

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "datasets" / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


def scripted(*entries: dict) -> ScriptedBackend:
    """Backend answering from in-memory playbook entries (first match wins)."""
    return ScriptedBackend(Playbook(tuple(PlaybookEntry(**e) for e in entries)))


def response(rule_id: str, domain: str, grade: str, **claims: str) -> RuleResponse:
    return RuleResponse(
        rule_id,
        domain,
        MembershipTerm.parse(grade),
        claims=tuple(Claim.of(k, v) for k, v in claims.items()),
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def run_trivia_bench(out_dir: Path, baseline_pct: float | None = 80.0):
    """Scripted benchmark over the committed 5-instance trivia fixture.

    Writes ``traces/<id>.jsonl`` under ``out_dir`` and returns the report.
    """
    from ruleagents.bench import load_dataset
    from ruleagents.config import load_config
    from ruleagents.orchestrator import run_benchmark

    config = load_config(FIXTURES / "trivia5.yaml")
    instances = load_dataset(FIXTURES / "trivia5.json", "trivia", 5)
    return run_benchmark(
        instances,
        config.make_backend(),
        config.run_settings(),
        trace_dir=out_dir / "traces",
        baseline_pct=baseline_pct,
    )


def attribute_trivia_bench(out_dir: Path, mode: str = "exact", permutations: int = 1000, seed: int = 0):
    """Bench + attribution; returns ``(report, samples, rows, attribution)``."""
    from ruleagents import explain
    from ruleagents.bench import instance_from_dict
    from ruleagents.trace import RunTrace

    report = run_trivia_bench(out_dir)
    traces = {p.stem: RunTrace.load(p) for p in sorted((out_dir / "traces").glob("*.jsonl"))}
    scores = {r["run_id"]: r["score"] for r in report.rows}
    instances = {r["run_id"]: instance_from_dict(r["instance"], r["kind"]) for r in report.rows}
    samples = explain.build_samples(traces, scores)
    value_fns = {s.sample_id: explain.trace_value_fn(s, traces, instances) for s in samples}
    rows, attribution = explain.attribute(samples, value_fns, mode, permutations, seed)
    return report, samples, rows, attribution
