"""The five agent roles as prompt templates plus strict output parsers.

Agents are asked to answer inside fenced blocks (```plan, ```rules,
```claims).  Parsers read only those blocks and fail loudly otherwise.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .backend import Backend, CompletionRequest, CompletionResponse
from .core import (
    DomainRule,
    ExpertConfig,
    MembershipTerm,
    Node,
    NodeContext,
    NodeKind,
    Task,
    TaskExecutionGraph,
    ensure_valid,
    membership_value,
)
from .errors import AnalysisError, BackendError, NodeError, ParseError, PlanParseError
from .prompts import DEFAULT_CATALOG, AgentProfile, build_profiles, render
from .text import normalize_claim

log = logging.getLogger(__name__)

CallHook = Callable[[CompletionRequest, CompletionResponse], None]

_FENCE = re.compile(r"```[ \t]*(\w+)[ \t]*\n(.*?)```", re.DOTALL)
_SUBTASK_ID = re.compile(r"^[A-Za-z][\w.-]*$")


@dataclass(frozen=True)
class PlanSpec:
    sub_tasks: tuple[tuple[str, str], ...]
    dependencies: tuple[tuple[str, str], ...]
    fusion_instruction: str
    raw: str = ""

    def compile(self, task: Task | None = None) -> TaskExecutionGraph:
        """Build the graph: T feeds every root sub-task, every leaf feeds F."""
        ids = [sid for sid, _ in self.sub_tasks]
        has_pred = {b for _, b in self.dependencies}
        has_succ = {a for a, _ in self.dependencies}
        nodes = [Node("T", NodeKind.TASK, task.text if task else "")]
        nodes += [Node(sid, NodeKind.SUBTASK, text) for sid, text in self.sub_tasks]
        nodes.append(Node("F", NodeKind.FUSION, self.fusion_instruction))
        edges = [("T", sid) for sid in ids if sid not in has_pred]
        edges += list(self.dependencies)
        edges += [(sid, "F") for sid in ids if sid not in has_succ]
        return ensure_valid(TaskExecutionGraph(nodes, edges))


@dataclass(frozen=True)
class Claim:
    """An atomic assertion; ``value`` is normalized, ``text`` keeps the surface form."""

    key: str
    value: str
    text: str = ""

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("claim key must be non-empty")

    @classmethod
    def of(cls, key: str, text: str) -> "Claim":
        return cls(key.strip().lower(), normalize_claim(text), text.strip())

    def conflicts(self, other: "Claim") -> bool:
        return self.key == other.key and self.value != other.value


@dataclass(frozen=True)
class RuleResponse:
    rule_id: str
    domain: str
    membership: MembershipTerm
    answer_text: str = ""
    claims: tuple[Claim, ...] = ()
    failed: bool = False
    error: str | None = None
    digest: str = ""
    source: str = ""


@dataclass
class Agents:
    """Bundle of agent profiles and the tunables that shape their calls."""

    profiles: dict[str, AgentProfile] = field(default_factory=build_profiles)
    catalog: tuple[str, ...] = ()
    max_rules: int = 5
    threshold: MembershipTerm = MembershipTerm.LOWER
    domain_temperatures: Mapping[str, float] = field(default_factory=dict)
    concurrency: int = 4

    def __post_init__(self) -> None:
        self.catalog = tuple(self.catalog) or DEFAULT_CATALOG


def fenced_blocks(text: str, tag: str) -> list[str]:
    return [body for t, body in _FENCE.findall(text or "") if t.lower() == tag]


def _request(
    profile: AgentProfile, values: Mapping[str, object], temperature: float | None = None
) -> CompletionRequest:
    return CompletionRequest(
        role_tag=profile.role_tag,
        system_prompt=render(profile.system_prompt_template, **values),
        user_prompt=render(profile.user_prompt_template, **values),
        temperature=profile.temperature if temperature is None else temperature,
        model_id=profile.model_id,
    )


def _call(
    backend: Backend,
    profile: AgentProfile,
    values: Mapping[str, object],
    temperature: float | None = None,
    on_call: CallHook | None = None,
) -> tuple[CompletionRequest, CompletionResponse]:
    request = _request(profile, values, temperature)
    response = backend.complete(request)
    if on_call is not None:
        on_call(request, response)
    return request, response


# --------------------------------------------------------------------------
# Planner
# --------------------------------------------------------------------------


def parse_plan(text: str) -> PlanSpec:
    blocks = fenced_blocks(text, "plan")
    if not blocks:
        raise PlanParseError("planner reply has no ```plan block", raw=text)
    sub_tasks: list[tuple[str, str]] = []
    deps: list[tuple[str, str]] = []
    fusion = ""
    for line in blocks[0].splitlines():
        line = line.strip().lstrip("-*").strip()
        if not line:
            continue
        if "->" in line and ":" not in line.split("->")[0]:
            a, b = (part.strip() for part in line.split("->", 1))
            deps.append((a, b))
            continue
        head, sep, body = line.partition(":")
        head, body = head.strip(), body.strip()
        if not sep or not body:
            raise PlanParseError(f"unrecognized plan line {line!r}", raw=text)
        if head.upper() == "FUSE":
            fusion = body
        elif _SUBTASK_ID.match(head) and head not in ("T", "F"):
            if any(head == sid for sid, _ in sub_tasks):
                raise PlanParseError(f"duplicate sub-task id {head}", raw=text)
            sub_tasks.append((head, body))
        else:
            raise PlanParseError(f"bad sub-task id {head!r}", raw=text)
    if not sub_tasks:
        raise PlanParseError("plan declares no sub-tasks", raw=text)
    if not fusion:
        fusion = "Combine the sub-task results into the final answer."
    return PlanSpec(tuple(sub_tasks), tuple(deps), fusion, raw=text)


def plan(
    task: Task, backend: Backend, agents: Agents | None = None, on_call: CallHook | None = None
) -> tuple[PlanSpec, TaskExecutionGraph]:
    agents = agents or Agents()
    _, response = _call(backend, agents.profiles["PA"], {"task": task.text}, on_call=on_call)
    spec = parse_plan(response.text)
    return spec, spec.compile(task)


# --------------------------------------------------------------------------
# Domain analyst
# --------------------------------------------------------------------------


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_domain(name: str, catalog: Sequence[str], max_distance: int = 2) -> str | None:
    """Map a (possibly misspelled) domain name onto the catalog, or ``None``."""
    folded = name.strip().lower()
    best, best_d = None, max_distance + 1
    for entry in catalog:
        d = edit_distance(folded, entry.lower())
        if d < best_d:
            best, best_d = entry, d
    return best


def parse_rules(text: str) -> list[tuple[str, MembershipTerm]]:
    blocks = fenced_blocks(text, "rules")
    if not blocks:
        raise ParseError("domain analyst reply has no ```rules block")
    out = []
    for line in blocks[0].splitlines():
        line = line.strip().lstrip("-*").strip()
        if not line:
            continue
        domain, sep, grade = line.rpartition(":")
        if not sep or not domain.strip():
            raise ParseError(f"unrecognized rules line {line!r}")
        out.append((domain.strip(), MembershipTerm.parse(grade.strip())))
    return out


def analyze_domains(
    sub_task: Node,
    context: NodeContext,
    backend: Backend,
    agents: Agents | None = None,
    on_call: CallHook | None = None,
) -> list[DomainRule]:
    """Ask the DAA for domain memberships and materialize them as rules.

    Rules come back sorted by descending membership (stable for ties),
    capped at ``max_rules``, with sub-threshold grades dropped.
    """
    agents = agents or Agents()
    if sub_task.kind is not NodeKind.SUBTASK:
        raise ValueError(f"{sub_task.id} is not a sub-task node")
    values = {
        "task": sub_task.spec,
        "context": context.render() or "(none)",
        "catalog": ", ".join(agents.catalog),
        "max_rules": agents.max_rules,
    }
    _, response = _call(backend, agents.profiles["DAA"], values, on_call=on_call)
    floor = max(membership_value(agents.threshold), 1e-9)
    picked: dict[str, MembershipTerm] = {}
    for name, term in parse_rules(response.text):
        domain = match_domain(name, agents.catalog)
        if domain is None:
            log.warning("dropping unknown domain %r from %s", name, sub_task.id)
            continue
        if membership_value(term) < floor:
            continue
        if domain not in picked or membership_value(term) > membership_value(picked[domain]):
            picked[domain] = term
    ranked = sorted(picked.items(), key=lambda kv: -membership_value(kv[1]))[: agents.max_rules]
    if not ranked:
        raise AnalysisError(f"{sub_task.id}: no domain rule above threshold {agents.threshold.value}")
    dea_temp = agents.profiles["DEA"].temperature
    return [
        DomainRule(
            rule_id=f"{sub_task.id}.R{k}",
            domain=domain,
            membership=term,
            expert=ExpertConfig(
                role=f"Domain expert in {domain}",
                temperature=float(agents.domain_temperatures.get(domain, dea_temp)),
            ),
        )
        for k, (domain, term) in enumerate(ranked, start=1)
    ]


# --------------------------------------------------------------------------
# Inference expert / domain experts
# --------------------------------------------------------------------------


def execute_rules(
    rules: Sequence[DomainRule],
    sub_task: Node,
    context: NodeContext,
    backend: Backend,
    agents: Agents | None = None,
    question_keys: Sequence[str] = (),
) -> list[RuleResponse]:
    """Dispatch every rule to its domain expert; one response per rule, in order."""
    agents = agents or Agents()
    if not rules:
        raise ValueError("execute_rules needs at least one rule")
    profile = agents.profiles["DEA"]
    ctx = context.render() or "(none)"
    keys = ", ".join(question_keys) or "answer"

    def ask(rule: DomainRule) -> RuleResponse:
        values = {"domain": rule.domain, "task": sub_task.spec, "context": ctx, "keys": keys}
        request = _request(profile, values, rule.expert.temperature)
        try:
            response = backend.complete(request)
        except BackendError as exc:
            return RuleResponse(
                rule.rule_id,
                rule.domain,
                rule.membership,
                failed=True,
                error=str(exc),
                digest=request.digest,
            )
        return RuleResponse(
            rule.rule_id,
            rule.domain,
            rule.membership,
            answer_text=response.text,
            digest=request.digest,
            source=response.source,
        )

    with ThreadPoolExecutor(max_workers=max(1, agents.concurrency)) as pool:
        responses = list(pool.map(ask, rules))
    if all(r.failed for r in responses):
        raise NodeError(sub_task.id, "every domain expert call failed")
    return responses


def parse_claims(text: str) -> list[Claim] | None:
    blocks = fenced_blocks(text, "claims")
    if not blocks:
        return None
    claims = []
    for line in blocks[-1].splitlines():
        line = line.strip().lstrip("-*").strip()
        key, sep, value = line.partition(":")
        if sep and key.strip() and value.strip():
            claims.append(Claim.of(key, value))
    return claims


def extract_claims(
    answer_text: str,
    question_keys: Sequence[str] = (),
    backend: Backend | None = None,
    agents: Agents | None = None,
    on_call: CallHook | None = None,
) -> list[Claim]:
    """Split an expert answer into keyed claims.

    A ```claims block is parsed directly.  Without one, a backend (if given)
    is asked to extract claims; failing that the whole answer becomes a
    single ``answer`` claim.
    """
    if not answer_text or not answer_text.strip():
        return []
    claims = parse_claims(answer_text)
    if claims:
        return claims
    if backend is not None:
        agents = agents or Agents()
        values = {"keys": ", ".join(question_keys) or "answer", "answer": answer_text}
        _, response = _call(backend, agents.profiles["FEA_extract"], values, on_call=on_call)
        claims = parse_claims(response.text)
        if claims:
            return claims
    return [Claim.of("answer", answer_text)]


# --------------------------------------------------------------------------
# Fusion expert
# --------------------------------------------------------------------------


def compose_claims(
    node: Node,
    claims_text: str,
    backend: Backend,
    agents: Agents | None = None,
    on_call: CallHook | None = None,
) -> tuple[str, CompletionRequest]:
    agents = agents or Agents()
    values = {"node": node.id, "task": node.spec, "claims": claims_text or "(no trusted claims)"}
    request, response = _call(backend, agents.profiles["FEA_rules"], values, on_call=on_call)
    return response.text, request


def fuse_sub_tasks(
    fusion_node: Node,
    context: NodeContext,
    backend: Backend,
    agents: Agents | None = None,
    on_call: CallHook | None = None,
) -> str:
    """Fuse the upstream sub-task results into the final answer."""
    if not context.inputs:
        raise ValueError("fusion needs at least one sub-task result")
    agents = agents or Agents()
    values = {"task": fusion_node.spec, "context": context.render()}
    _, response = _call(backend, agents.profiles["FEA_sub"], values, on_call=on_call)
    return response.text
