"""Append-only run trace persisted as JSON lines."""

from __future__ import annotations

import itertools
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

EVENT_KINDS = (
    "plan",
    "rule_generated",
    "dea_call",
    "claims",
    "votes",
    "trust",
    "resolution",
    "node_result",
    "final",
    "error",
)


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: float
    node_id: str
    kind: str
    payload: dict[str, Any]

    def to_json(self) -> str:
        doc = {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "node_id": self.node_id,
            "kind": self.kind,
            "payload": self.payload,
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Event":
        return cls(doc["seq"], doc["timestamp"], doc["node_id"], doc["kind"], doc["payload"])


class NodeRecorder:
    """Buffers one node's events until the orchestrator commits them."""

    def __init__(self, node_id: str) -> None:
        self.node_id = node_id
        self.pending: list[tuple[str, str, dict[str, Any]]] = []

    def emit(self, kind: str, payload: dict[str, Any]) -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.pending.append((self.node_id, kind, payload))


class RunTrace:
    """Ordered, append-only event log for one run.

    ``clock="logical"`` stamps each event with its sequence number so traces
    from scripted runs are byte-identical; ``"wall"`` uses ``time.time``.
    When ``path`` is set every append is written through and the file is
    fsynced on :meth:`sync`.
    """

    def __init__(self, run_id: str, path: str | os.PathLike | None = None, clock: str = "logical") -> None:
        self.run_id = run_id
        self.events: list[Event] = []
        self._lock = threading.Lock()
        self._seq = itertools.count()
        self._clock: Callable[[int], float] = (lambda seq: float(seq)) if clock == "logical" else (
            lambda seq: round(time.time(), 6)
        )
        self.path = Path(path) if path is not None else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def append(self, node_id: str, kind: str, payload: dict[str, Any]) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            seq = next(self._seq)
            event = Event(seq, self._clock(seq), node_id, kind, payload)
            self.events.append(event)
            if self._fh is not None:
                self._fh.write(event.to_json() + "\n")
        return event

    def commit(self, recorder: NodeRecorder) -> None:
        for node_id, kind, payload in recorder.pending:
            self.append(node_id, kind, payload)
        recorder.pending.clear()

    def sync(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.flush()
                os.fsync(self._fh.fileno())

    def close(self) -> None:
        self.sync()
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def of_kind(self, kind: str, node_id: str | None = None) -> list[Event]:
        return [e for e in self.events if e.kind == kind and (node_id is None or e.node_id == node_id)]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def dumps(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_events(cls, run_id: str, events: Iterable[Event]) -> "RunTrace":
        trace = cls(run_id)
        trace.events = list(events)
        trace._seq = itertools.count(len(trace.events))
        return trace

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunTrace":
        path = Path(path)
        events = [
            Event.from_dict(json.loads(line))
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls.from_events(path.stem, events)
