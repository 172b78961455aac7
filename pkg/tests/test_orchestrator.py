from __future__ import annotations

import json
import threading
import time

import pytest

from ruleagents.backend import CompletionResponse, Playbook, PlaybookEntry, ScriptedBackend
from ruleagents.bench import load_dataset
from ruleagents.config import load_config
from ruleagents.core import Task
from ruleagents.errors import PlaybookMissError, ReplayError, RunError
from ruleagents.orchestrator import RunSettings, replay, run, run_benchmark
from ruleagents.trace import Event, RunTrace

from conftest import FIXTURES, GOLDEN, run_trivia_bench, scripted


def hollywood():
    config = load_config(FIXTURES / "trivia5.yaml")
    inst = load_dataset(FIXTURES / "trivia5.json", "trivia", 5)[0]
    return inst.to_task(), config.make_backend(), config.run_settings()


def kinds(trace, node=None):
    return [e.kind for e in trace.events if node is None or e.node_id == node]


# --------------------------------------------------------------------------
# Happy path
# --------------------------------------------------------------------------


def test_conflict_case_end_to_end():
    config = load_config(FIXTURES / "conflict_case" / "config.yaml")
    doc = json.loads((FIXTURES / "conflict_case" / "task.json").read_text())
    task = Task(doc["id"], doc["text"], doc["metadata"])
    result = run(task, config.make_backend(), config.run_settings())
    assert "Guess Who's Coming to Dinner" in result.text
    assert kinds(result.trace) == [
        "plan", "rule_generated", "dea_call", "dea_call", "dea_call", "claims", "votes", "trust",
        "resolution", "node_result", "final",
    ]
    assert [e.seq for e in result.trace] == list(range(11))
    assert [e.timestamp for e in result.trace] == [float(i) for i in range(11)]


def test_two_subtask_run_matches_golden(tmp_path):
    task, backend, settings = hollywood()
    trace = RunTrace(task.id, path=tmp_path / "h.jsonl")
    result = run(task, backend, settings, trace)
    trace.close()
    golden = (GOLDEN / "hollywood.trace.jsonl").read_text(encoding="utf-8")
    assert (tmp_path / "h.jsonl").read_text(encoding="utf-8") == golden
    assert trace.dumps() == golden
    assert set(result.node_results) == {"T1", "T2"}
    assert json.loads(result.to_json())["run_id"] == "hollywood"


def test_trace_round_trips_through_disk(tmp_path):
    task, backend, settings = hollywood()
    trace = RunTrace(task.id, path=tmp_path / "hollywood.jsonl")
    run(task, backend, settings, trace)
    trace.close()
    loaded = RunTrace.load(tmp_path / "hollywood.jsonl")
    assert loaded.run_id == "hollywood"
    assert loaded.dumps() == trace.dumps()


DIAMOND_PLAN = "```plan\nA: first\nB: second\nC: join\nA -> C\nB -> C\nFUSE: finish\n```"


def diamond_backend(delay=0.0, active=None):
    inner = scripted(
        {"role": "PA", "match": "Task:", "response": DIAMOND_PLAN},
        {"role": "DAA", "match": "Analyze", "response": "```rules\nHistory: High\n```"},
        {"role": "DEA", "match": "Sub-task:\nfirst", "response": "```claims\nanswer: alpha\n```"},
        {"role": "DEA", "match": "Sub-task:\nsecond", "response": "```claims\nanswer: beta\n```"},
        {"role": "DEA", "match": "Sub-task:\njoin", "response": "```claims\nanswer: gamma\n```"},
        {"role": "FEA", "match": "Fuse the expert claims for sub-task A", "response": "result A"},
        {"role": "FEA", "match": "Fuse the expert claims for sub-task B", "response": "result B"},
        {"role": "FEA", "match": "Fuse the expert claims for sub-task C", "response": "result C"},
        {"role": "FEA", "match": "Fusion instruction:\nfinish", "response": "done"},
    )
    if not delay:
        return inner

    class Slow:
        def complete(self, request):
            if request.role_tag == "DAA":
                with active["lock"]:
                    active["now"] += 1
                    active["peak"] = max(active["peak"], active["now"])
                time.sleep(delay)
                with active["lock"]:
                    active["now"] -= 1
            return inner.complete(request)

    return Slow()


def test_levels_run_concurrently():
    active = {"lock": threading.Lock(), "now": 0, "peak": 0}
    result = run(Task("d", "diamond task"), diamond_backend(0.05, active))
    assert active["peak"] == 2  # A and B together, C alone
    assert result.text == "done"
    # events are committed per node in id order regardless of completion order
    assert [e.node_id for e in result.trace.of_kind("node_result")] == ["A", "B", "C"]


def test_context_follows_edge_declaration_order(monkeypatch):
    seen = {}
    backend = diamond_backend()
    original = backend.complete

    def spy(request):
        if request.role_tag == "DAA" and "join" in request.user_prompt:
            seen["prompt"] = request.user_prompt
        return original(request)

    monkeypatch.setattr(backend, "complete", spy)
    run(Task("d", "diamond task"), backend)
    prompt = seen["prompt"]
    assert prompt.index("[A]\nresult A") < prompt.index("[B]\nresult B")


# --------------------------------------------------------------------------
# Faults
# --------------------------------------------------------------------------


def test_single_expert_fault_is_recorded_and_run_continues():
    task, backend, settings = hollywood()
    fault = PlaybookEntry("DEA", "Domain: Arts-and-Design\nSub-task:\n[hollywood/T1]", error="503")
    faulty = ScriptedBackend(Playbook((fault,) + backend.playbook.entries))
    result = run(task, faulty, settings)
    failed = [e for e in result.trace.of_kind("dea_call") if e.payload["failed"]]
    assert [e.payload["rule_id"] for e in failed] == ["T1.R2"]
    assert "503" in failed[0].payload["error"]
    assert "Guess Who's Coming to Dinner" in result.text


def test_planner_failure_raises_run_error_with_trace():
    with pytest.raises(RunError) as err:
        run(Task("x", "anything"), scripted())
    assert kinds(err.value.trace) == ["error"]
    assert "PlaybookMissError" in err.value.trace.events[0].payload["error"]


def test_node_failure_retries_then_fails_with_partial_trace(tmp_path):
    backend = scripted(
        {"role": "PA", "match": "Task:", "response": DIAMOND_PLAN},
        {"role": "DAA", "match": "Sub-task:\nsecond", "error": "overloaded"},
        {"role": "DAA", "match": "Analyze", "response": "```rules\nHistory: High\n```"},
        {"role": "DEA", "match": "Domain", "response": "```claims\nanswer: x\n```"},
        {"role": "FEA", "match": "Fuse the expert claims", "response": "ok"},
    )
    trace = RunTrace("d", path=tmp_path / "d.jsonl")
    with pytest.raises(RunError, match="node B"):
        run(Task("d", "diamond"), backend, RunSettings(node_retries=2), trace)
    trace.close()
    on_disk = RunTrace.load(tmp_path / "d.jsonl")
    # A completed and was committed; B recorded one error per attempt plus the fatal marker
    assert kinds(on_disk, "A")[-1] == "node_result"
    assert kinds(on_disk, "B") == ["error", "error", "error", "error"]
    assert on_disk.events[-1].payload["fatal"] is True
    assert not on_disk.of_kind("final")


def test_fusion_failure_is_a_run_error():
    backend = diamond_backend()
    original = backend.complete

    class Broken:
        def complete(self, request):
            if request.user_prompt.startswith("Fusion instruction:"):
                raise PlaybookMissError("FEA", "x")
            return original(request)

    with pytest.raises(RunError, match="fusion"):
        run(Task("d", "diamond"), Broken())


def test_benchmark_scores_failed_runs_as_zero(tmp_path):
    insts = load_dataset(FIXTURES / "trivia5.json", "trivia", 5)[:2]
    report = run_benchmark(insts, scripted(), trace_dir=tmp_path)
    assert report.per_instance == [0.0, 0.0]
    assert all(r["flags"] == ["run_failed"] for r in report.rows)
    assert (tmp_path / "hollywood.jsonl").exists()


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------


def test_full_replay_is_byte_identical():
    task, backend, settings = hollywood()
    original = run(task, backend, settings).trace
    again = replay(original, backend, settings)
    assert again.trace.dumps() == original.dumps()


@pytest.mark.parametrize("node", ["T1", "T2"])
def test_partial_replay_is_byte_identical(node):
    task, backend, settings = hollywood()
    original = run(task, backend, settings).trace
    assert replay(original, backend, settings, from_node=node).trace.dumps() == original.dumps()


def test_replay_only_recomputes_downstream():
    task, backend, settings = hollywood()
    original = run(task, backend, settings).trace
    calls = []

    class Counting:
        def complete(self, request):
            calls.append(request.role_tag)
            return backend.complete(request)

    replay(original, Counting(), settings, from_node="T2")
    # T2: DAA + 2 DEA + FEA compose; F: final fusion.  No planner, nothing for T1.
    assert sorted(calls) == sorted(["DAA", "DEA", "DEA", "FEA", "FEA"])


def test_replay_with_changed_backend_changes_only_recomputed_node():
    task, backend, settings = hollywood()
    original = run(task, backend, settings).trace

    class Rewrite:
        def complete(self, request):
            out = backend.complete(request)
            if "[hollywood/T2]" in request.user_prompt and request.role_tag == "FEA":
                return CompletionResponse("rewritten T2", source="scripted")
            return out

    new = replay(original, Rewrite(), settings, from_node="T2").trace
    before = [e for e in original.events if e.node_id == "T1"]
    after = [e for e in new.events if e.node_id == "T1"]
    assert before == after
    assert new.of_kind("node_result", "T2")[0].payload["fused_text"] == "rewritten T2"


def test_replay_errors():
    task, backend, settings = hollywood()
    original = run(task, backend, settings).trace
    without_t1 = RunTrace.from_events(
        "hollywood", [e for e in original.events if not (e.node_id == "T1" and e.kind == "node_result")]
    )
    with pytest.raises(ReplayError) as err:
        replay(without_t1, backend, settings, from_node="T2")
    assert err.value.node_id == "T1"
    with pytest.raises(ReplayError):
        replay(RunTrace("empty"), backend, settings)
    with pytest.raises(KeyError):
        replay(original, backend, settings, from_node="T9")


def test_bench_traces_are_reproducible(tmp_path):
    run_trivia_bench(tmp_path / "a")
    run_trivia_bench(tmp_path / "b")
    for path in sorted((tmp_path / "a" / "traces").glob("*.jsonl")):
        assert path.read_bytes() == (tmp_path / "b" / "traces" / path.name).read_bytes()


def test_event_json_is_canonical():
    ev = Event(3, 3.0, "T1", "votes", {"b": 1, "a": [1, 2]})
    assert ev.to_json() == '{"kind":"votes","node_id":"T1","payload":{"a":[1,2],"b":1},"seq":3,"timestamp":3.0}'
    with pytest.raises(ValueError):
        RunTrace("x").append("T", "bogus", {})
