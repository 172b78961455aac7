"""Domain types and the task-execution graph.

A task-execution graph (TEG) has one task node ``T`` that fans out to
sub-task nodes, which in turn feed a single fusion node ``F``.  Graphs are
immutable once built; :func:`validate_teg` reports structural problems as
data and :func:`topological_levels` yields a schedule of mutually
independent node batches.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import GraphError, ParseError


class NodeKind(str, enum.Enum):
    TASK = "task"
    SUBTASK = "subtask"
    FUSION = "fusion"


class MembershipTerm(str, enum.Enum):
    """Six linguistic membership grades, declared from strongest to weakest."""

    HIGH = "High"
    SUB_HIGH = "Sub-High"
    MEDIUM = "Medium"
    MID_LOW = "Mid-Low"
    LOWER = "Lower"
    LOW = "Low"

    @property
    def value_num(self) -> float:
        return _MEMBERSHIP_VALUES[self]

    @classmethod
    def parse(cls, token: str) -> "MembershipTerm":
        key = "".join(ch for ch in str(token).lower() if ch.isalpha())
        try:
            return _TERM_LOOKUP[key]
        except KeyError:
            raise ParseError(f"unknown membership term {token!r}") from None

    @classmethod
    def from_value(cls, value: float) -> "MembershipTerm":
        for term, num in _MEMBERSHIP_VALUES.items():
            if abs(num - value) < 1e-9:
                return term
        raise ParseError(f"no membership term has value {value!r}")


_MEMBERSHIP_VALUES: dict[MembershipTerm, float] = {
    MembershipTerm.HIGH: 1.0,
    MembershipTerm.SUB_HIGH: 0.8,
    MembershipTerm.MEDIUM: 0.6,
    MembershipTerm.MID_LOW: 0.4,
    MembershipTerm.LOWER: 0.2,
    MembershipTerm.LOW: 0.0,
}

_TERM_LOOKUP = {
    "".join(ch for ch in term.value.lower() if ch.isalpha()): term for term in MembershipTerm
}

MEMBERSHIP_LEVELS: tuple[float, ...] = tuple(sorted(set(_MEMBERSHIP_VALUES.values())))


def membership_value(term: MembershipTerm | str) -> float:
    """Numeric image of a membership term (``High`` -> 1.0 ... ``Low`` -> 0.0)."""
    if not isinstance(term, MembershipTerm):
        term = MembershipTerm.parse(term)
    return _MEMBERSHIP_VALUES[term]


@dataclass(frozen=True)
class Task:
    id: str
    text: str
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("task text must be non-empty")


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    spec: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if not self.id:
            raise ValueError("node id must be non-empty")
        if self.kind is NodeKind.SUBTASK and not self.spec.strip():
            raise ValueError(f"sub-task node {self.id} has an empty instruction")


@dataclass(frozen=True)
class ExpertConfig:
    role: str
    temperature: float


@dataclass(frozen=True)
class DomainRule:
    """IF the sub-task belongs to ``domain`` (to degree ``membership``) THEN ask ``expert``."""

    rule_id: str
    domain: str
    membership: MembershipTerm
    expert: ExpertConfig

    @property
    def weight(self) -> float:
        return membership_value(self.membership)


@dataclass(frozen=True)
class NodeContext:
    """Upstream ``(node_id, response_text)`` pairs, one per incoming edge."""

    inputs: tuple[tuple[str, str], ...] = ()

    def render(self) -> str:
        return "\n\n".join(f"[{node_id}]\n{text}" for node_id, text in self.inputs)


@dataclass(frozen=True)
class TaskExecutionGraph:
    """Unweighted DAG over task/sub-task/fusion nodes.

    Edges keep their declaration order; it decides the order of a node's
    context inputs.
    """

    nodes: tuple[Node, ...]
    edges: tuple[tuple[str, str], ...]

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Iterable[str]]) -> None:
        nodes = tuple(nodes)
        seen: set[str] = set()
        dupes = []
        for node in nodes:
            if node.id in seen:
                dupes.append(node.id)
            seen.add(node.id)
        if dupes:
            raise GraphError([f"duplicate node id {d}" for d in dupes])
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in edges))

    def node(self, node_id: str) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind]

    @property
    def task_node(self) -> Node:
        return self.of_kind(NodeKind.TASK)[0]

    @property
    def fusion_node(self) -> Node:
        return self.of_kind(NodeKind.FUSION)[0]

    def predecessors(self, node_id: str) -> list[str]:
        return [a for a, b in self.edges if b == node_id]

    def successors(self, node_id: str) -> list[str]:
        return [b for a, b in self.edges if a == node_id]

    def descendants(self, node_id: str) -> set[str]:
        return _reach(node_id, _adjacency(self.edges))

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [{"id": n.id, "kind": n.kind.value, "spec": n.spec} for n in self.nodes],
            "edges": [[a, b] for a, b in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TaskExecutionGraph":
        if not isinstance(doc, Mapping):
            raise ParseError("malformed graph document: expected a mapping with 'nodes' and 'edges'")
        try:
            nodes = [
                Node(str(item["id"]), NodeKind(item["kind"]), str(item.get("spec") or ""))
                for item in doc["nodes"]
            ]
            edges = [(str(a), str(b)) for a, b in doc.get("edges", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed graph document: {exc}") from exc
        return cls(nodes, edges)


def _adjacency(edges: Iterable[tuple[str, str]]) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
    return adj


def _reach(start: str, adj: Mapping[str, list[str]]) -> set[str]:
    seen: set[str] = set()
    stack = [start]
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _cycles(order: list[str], edges: list[tuple[str, str]]) -> list[list[str]]:
    """Strongly connected components that contain a cycle (Tarjan)."""
    adj = _adjacency(edges)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0

    def visit(v: str) -> None:
        nonlocal counter
        index[v] = low[v] = counter
        counter += 1
        stack.append(v)
        on_stack.add(v)
        for w in adj.get(v, ()):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            if len(comp) > 1 or v in adj.get(v, ()):
                out.append(comp)

    for v in order:
        if v not in index:
            visit(v)
    rank = {v: i for i, v in enumerate(order)}
    return [sorted(c, key=rank.__getitem__) for c in out]


def validate_teg(graph: TaskExecutionGraph) -> list[str]:
    """Return structural violations; an empty list means the graph is valid."""
    violations: list[str] = []
    ids = list(graph.node_ids)
    known = set(ids)
    tasks = graph.of_kind(NodeKind.TASK)
    fusions = graph.of_kind(NodeKind.FUSION)
    subtasks = graph.of_kind(NodeKind.SUBTASK)

    if not tasks:
        violations.append("no task node")
    elif len(tasks) > 1:
        violations.append("multiple task nodes: " + ", ".join(n.id for n in tasks))
    if not fusions:
        violations.append("no fusion node")
    elif len(fusions) > 1:
        violations.append("multiple fusion nodes: " + ", ".join(n.id for n in fusions))
    if not subtasks:
        violations.append("no sub-task nodes")

    edges = []
    seen_edges = set()
    for a, b in graph.edges:
        if a not in known or b not in known:
            missing = a if a not in known else b
            violations.append(f"edge {a}->{b} references unknown node {missing}")
            continue
        if (a, b) in seen_edges:
            violations.append(f"duplicate edge {a}->{b}")
            continue
        seen_edges.add((a, b))
        edges.append((a, b))

    for n in tasks:
        for a, b in edges:
            if b == n.id:
                violations.append(f"task node {n.id} has incoming edge {a}->{b}")
    for n in fusions:
        for a, b in edges:
            if a == n.id:
                violations.append(f"fusion node {n.id} has outgoing edge {a}->{b}")

    for comp in _cycles(ids, edges):
        violations.append("cycle through " + ",".join(comp))

    adj = _adjacency(edges)
    radj = _adjacency((b, a) for a, b in edges)
    if len(tasks) == 1:
        from_root = _reach(tasks[0].id, adj)
        for n in subtasks + fusions:
            if n.id not in from_root:
                violations.append(f"{n.kind.value} node {n.id} unreachable from task node")
    if len(fusions) == 1:
        to_sink = _reach(fusions[0].id, radj)
        for n in subtasks:
            if n.id not in to_sink:
                violations.append(f"subtask node {n.id} does not reach fusion node")
    return violations


def ensure_valid(graph: TaskExecutionGraph) -> TaskExecutionGraph:
    violations = validate_teg(graph)
    if violations:
        raise GraphError(violations)
    return graph


def topological_levels(graph: TaskExecutionGraph) -> list[list[str]]:
    """Group nodes by longest-path distance from the task node.

    Within a level, ids keep declaration order.  Raises :class:`GraphError`
    on an invalid (e.g. cyclic) graph.
    """
    ensure_valid(graph)
    preds: dict[str, list[str]] = defaultdict(list)
    for a, b in graph.edges:
        preds[b].append(a)
    indeg = {n: len(preds[n]) for n in graph.node_ids}
    adj = _adjacency(graph.edges)
    rank = {n: 0 for n in graph.node_ids}
    frontier = [n for n in graph.node_ids if indeg[n] == 0]
    order = []
    while frontier:
        nxt = []
        for v in frontier:
            order.append(v)
            for w in adj.get(v, ()):
                rank[w] = max(rank[w], rank[v] + 1)
                indeg[w] -= 1
                if indeg[w] == 0:
                    nxt.append(w)
        frontier = nxt
    depth = max(rank.values()) + 1
    levels: list[list[str]] = [[] for _ in range(depth)]
    for n in graph.node_ids:
        levels[rank[n]].append(n)
    return levels
