"""End-to-end run driver.

A run plans a task-execution graph, executes it level by level (sub-task
nodes of one level run concurrently), fuses the sub-task results and keeps a
complete :class:`~ruleagents.trace.RunTrace`.  :func:`replay` re-executes a
recorded run from any node using the recorded upstream results.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import bench
from .agents import Agents, fuse_sub_tasks, plan
from .backend import Backend, CompletionRequest, CompletionResponse
from .core import NodeContext, NodeKind, Task, TaskExecutionGraph, topological_levels
from .errors import ReplayError, RuleAgentsError, RunError
from .fusion import FusionSettings, SubTaskResult, _call_payload, run_subtask_node
from .trace import Event, NodeRecorder, RunTrace

log = logging.getLogger(__name__)

__all__ = ["FinalResult", "RunSettings", "RunTrace", "replay", "run", "run_benchmark"]


@dataclass
class RunSettings:
    agents: Agents = field(default_factory=Agents)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    node_retries: int = 1
    concurrency: int = 4


@dataclass
class FinalResult:
    text: str
    run_id: str
    node_results: dict[str, str] = field(default_factory=dict)
    trace: RunTrace | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> str:
        doc = {"run_id": self.run_id, "text": self.text, "node_results": self.node_results}
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def question_keys(task: Task) -> list[str]:
    raw = task.metadata.get("question_keys", "") if task.metadata else ""
    return [k.strip() for k in raw.split(",") if k.strip()]


def _context(graph: TaskExecutionGraph, node_id: str, results: Mapping[str, str]) -> NodeContext:
    return NodeContext(tuple((p, results[p]) for p in graph.predecessors(node_id)))


def _run_node_with_retries(node, context, backend, settings, keys) -> tuple[NodeRecorder, SubTaskResult | None, Exception | None]:
    rec = NodeRecorder(node.id)
    error: Exception | None = None
    for attempt in range(settings.node_retries + 1):
        try:
            result = run_subtask_node(
                node, context, backend, settings.agents, settings.fusion, rec, keys
            )
            return rec, result, None
        except RuleAgentsError as exc:
            error = exc
            log.warning("node %s attempt %d failed: %s", node.id, attempt + 1, exc)
    return rec, None, error


def _execute(
    task: Task,
    graph: TaskExecutionGraph,
    backend: Backend,
    settings: RunSettings,
    trace: RunTrace,
    recorded: Mapping[str, list[Event]] | None = None,
    reuse: frozenset[str] = frozenset(),
) -> FinalResult:
    """Run every node of a validated graph; nodes in ``reuse`` replay recorded events."""
    keys = question_keys(task)
    results: dict[str, str] = {graph.task_node.id: task.text}
    fusion = graph.fusion_node
    for level in topological_levels(graph):
        todo = [graph.node(n) for n in level if graph.node(n).kind is NodeKind.SUBTASK]
        fresh = [n for n in todo if n.id not in reuse]
        with ThreadPoolExecutor(max_workers=max(1, settings.concurrency)) as pool:
            futures = {
                n.id: pool.submit(
                    _run_node_with_retries, n, _context(graph, n.id, results), backend, settings, keys
                )
                for n in fresh
            }
            outcomes = {nid: fut.result() for nid, fut in futures.items()}
        failure = None
        for node in sorted(todo, key=lambda n: n.id):
            if node.id in reuse:
                for ev in recorded[node.id]:
                    trace.append(ev.node_id, ev.kind, ev.payload)
                results[node.id] = _recorded_result(recorded[node.id], node.id)
            else:
                rec, result, error = outcomes[node.id]
                trace.commit(rec)
                if result is None:
                    failure = failure or (node.id, error)
                else:
                    results[node.id] = result.fused_text
            trace.sync()
        if failure:
            node_id, error = failure
            trace.append(node_id, "error", {"error": f"{type(error).__name__}: {error}", "fatal": True})
            trace.sync()
            raise RunError(f"node {node_id} failed: {error}", trace=trace)

    context = _context(graph, fusion.id, results)
    calls: list[dict[str, Any]] = []

    def hook(request: CompletionRequest, response: CompletionResponse) -> None:
        calls.append(_call_payload(request, response))

    try:
        text = fuse_sub_tasks(fusion, context, backend, settings.agents, on_call=hook)
    except RuleAgentsError as exc:
        trace.append(fusion.id, "error", {"error": f"{type(exc).__name__}: {exc}", "fatal": True})
        trace.sync()
        raise RunError(f"fusion failed: {exc}", trace=trace) from exc
    trace.append(fusion.id, "final", {"text": text, "call": calls.pop()})
    trace.sync()
    node_results = {k: v for k, v in results.items() if k != graph.task_node.id}
    return FinalResult(text, trace.run_id, node_results, trace)


def _recorded_result(events: Sequence[Event], node_id: str) -> str:
    for ev in events:
        if ev.kind == "node_result":
            return ev.payload["fused_text"]
    raise ReplayError(node_id, "trace has no result for node")


def run(
    task: Task,
    backend: Backend,
    settings: RunSettings | None = None,
    trace: RunTrace | None = None,
) -> FinalResult:
    """Plan, execute and fuse one task.  Raises :class:`RunError` with the partial trace."""
    settings = settings or RunSettings()
    trace = trace if trace is not None else RunTrace(task.id)
    calls: list[dict[str, Any]] = []

    def hook(request: CompletionRequest, response: CompletionResponse) -> None:
        calls.append(_call_payload(request, response))

    try:
        spec, graph = plan(task, backend, settings.agents, on_call=hook)
    except RuleAgentsError as exc:
        trace.append("T", "error", {"error": f"{type(exc).__name__}: {exc}", "calls": calls, "fatal": True})
        trace.sync()
        raise RunError(f"planning failed: {exc}", trace=trace) from exc
    trace.append(
        graph.task_node.id,
        "plan",
        {
            "call": calls.pop(),
            "task": {"id": task.id, "text": task.text, "metadata": dict(task.metadata)},
            "graph": graph.to_dict(),
        },
    )
    trace.sync()
    return _execute(task, graph, backend, settings, trace)


def replay(
    trace: RunTrace,
    backend: Backend,
    settings: RunSettings | None = None,
    from_node: str | None = None,
) -> FinalResult:
    """Recompute a recorded run from ``from_node`` (default: every node).

    Nodes that are neither ``from_node`` nor downstream of it reuse their
    recorded events.  The planner is never re-invoked.
    """
    settings = settings or RunSettings()
    plans = trace.of_kind("plan")
    if not plans:
        raise ReplayError("T", "trace has no plan event")
    plan_event = plans[0]
    graph = TaskExecutionGraph.from_dict(plan_event.payload["graph"])
    t = plan_event.payload["task"]
    task = Task(t["id"], t["text"], t.get("metadata", {}))
    if from_node is None:
        recompute = set(graph.node_ids)
    else:
        graph.node(from_node)
        recompute = {from_node} | graph.descendants(from_node)

    by_node: dict[str, list[Event]] = {}
    for ev in trace.events:
        if ev.kind != "plan":
            by_node.setdefault(ev.node_id, []).append(ev)
    reuse = set()
    for node in graph.of_kind(NodeKind.SUBTASK):
        if node.id in recompute:
            continue
        if not any(ev.kind == "node_result" for ev in by_node.get(node.id, [])):
            raise ReplayError(node.id, "trace has no result for node")
        reuse.add(node.id)

    out = RunTrace(trace.run_id)
    out.append(plan_event.node_id, "plan", plan_event.payload)
    return _execute(task, graph, backend, settings, out, recorded=by_node, reuse=frozenset(reuse))


def run_benchmark(
    instances: Sequence[bench.Instance],
    backend: Backend,
    settings: RunSettings | None = None,
    trace_dir: str | Path | None = None,
    baseline_pct: float | None = None,
    clock: str = "logical",
) -> bench.ScoreReport:
    """Run and score every instance; a failed run scores 0 and is flagged."""
    settings = settings or RunSettings()
    scores: list[float] = []
    rows: list[dict[str, Any]] = []
    for inst in instances:
        task = inst.to_task()
        path = Path(trace_dir) / f"{task.id}.jsonl" if trace_dir is not None else None
        trace = RunTrace(task.id, path=path, clock=clock)
        flags: list[str] = []
        text = ""
        try:
            text = run(task, backend, settings, trace).text
            score, flags = bench.score_output(text, inst)
        except RunError as exc:
            log.error("run %s failed: %s", task.id, exc)
            score, flags = 0.0, ["run_failed"]
        finally:
            trace.close()
        scores.append(score)
        rows.append(
            {
                "run_id": task.id,
                "kind": task.metadata["kind"],
                "score": score,
                "flags": flags,
                "output": text,
                "instance": bench.instance_to_dict(inst),
            }
        )
    report = bench.aggregate(scores, baseline_pct)
    report.rows = rows
    return report
