"""Rule-level fusion: claim voting, membership-weighted trust, conflict resolution.

The pure functions here (:func:`vote_claims`, :func:`trust_degrees`,
:func:`resolve_conflicts`) carry no I/O.  :func:`run_subtask_node` wires them
between the domain-analyst, domain-expert and fusion-expert calls of one
sub-task node.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

from .agents import (
    Agents,
    Claim,
    RuleResponse,
    analyze_domains,
    compose_claims,
    execute_rules,
    extract_claims,
)
from .backend import Backend, CompletionRequest, CompletionResponse
from .core import DomainRule, MembershipTerm, Node, NodeContext, NodeKind, membership_value
from .errors import BackendError, NodeError
from .text import normalize_claim
from .trace import NodeRecorder

log = logging.getLogger(__name__)

__all__ = [
    "ClaimCluster",
    "FusionSettings",
    "SubTaskResult",
    "normalize_claim",
    "render_claims",
    "resolve_conflicts",
    "run_subtask_node",
    "trust_degrees",
    "vote_claims",
]

WEIGHTINGS = ("membership", "votes")


def _tenths(term: MembershipTerm) -> int:
    # integer image keeps trust ties exact
    return round(membership_value(term) * 10)


@dataclass(frozen=True)
class ClaimCluster:
    key: str
    value: str
    text: str
    supporters: tuple[tuple[str, MembershipTerm], ...]
    trust: float | None = None
    flags: tuple[str, ...] = ()

    @property
    def votes(self) -> int:
        return len(self.supporters)

    @property
    def membership_sum(self) -> float:
        return sum(_tenths(term) for _, term in self.supporters) / 10

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "value": self.value,
            "text": self.text,
            "votes": self.votes,
            "supporters": [[rid, term.value] for rid, term in self.supporters],
            "trust": self.trust,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SubTaskResult:
    node_id: str
    retained: tuple[ClaimCluster, ...]
    discarded: tuple[tuple[ClaimCluster, str], ...]
    fused_text: str
    rule_responses: tuple[RuleResponse, ...] = ()
    rules: tuple[DomainRule, ...] = ()


@dataclass(frozen=True)
class FusionSettings:
    tau: float = 0.5
    weighting: str = "membership"
    extract_with_fea: bool = True

    def __post_init__(self) -> None:
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown trust weighting {self.weighting!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


def vote_claims(responses: Iterable[RuleResponse]) -> list[ClaimCluster]:
    """Merge equal ``(key, normalized value)`` claims; one vote per distinct rule.

    Clusters come out grouped by key, keys in first-seen order.
    """
    order: dict[str, list[str]] = {}
    texts: dict[tuple[str, str], str] = {}
    backers: dict[tuple[str, str], dict[str, MembershipTerm]] = {}
    for resp in responses:
        if resp.failed:
            continue
        for claim in resp.claims:
            slot = (claim.key, claim.value)
            if slot not in backers:
                order.setdefault(claim.key, []).append(claim.value)
                texts[slot] = claim.text or claim.value
                backers[slot] = {}
            backers[slot].setdefault(resp.rule_id, resp.membership)
    return [
        ClaimCluster(key, value, texts[(key, value)], tuple(backers[(key, value)].items()))
        for key, values in order.items()
        for value in values
    ]


def _groups(clusters: Iterable[ClaimCluster]) -> dict[str, list[ClaimCluster]]:
    groups: dict[str, list[ClaimCluster]] = {}
    for c in clusters:
        groups.setdefault(c.key, []).append(c)
    return groups


def _weight(cluster: ClaimCluster, weighting: str) -> int:
    if weighting == "votes":
        return cluster.votes
    return sum(_tenths(term) for _, term in cluster.supporters)


def trust_degrees(clusters: Sequence[ClaimCluster], weighting: str = "membership") -> list[ClaimCluster]:
    """Set each cluster's trust to its share of the key group's support.

    With the default ``membership`` weighting the share is the cluster's
    summed supporter membership over the group's total; ``votes`` uses raw
    vote counts.  A group whose total is zero gets uniform trust.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown trust weighting {weighting!r}")
    out = []
    for key, group in _groups(clusters).items():
        weights = [_weight(c, weighting) for c in group]
        total = sum(weights)
        if total == 0:
            warnings.warn(f"all supporters of {key!r} have zero weight; using uniform trust")
            out += [replace(c, trust=1.0 / len(group)) for c in group]
        else:
            out += [replace(c, trust=w / total) for c, w in zip(group, weights)]
    return out


def _rank(cluster: ClaimCluster) -> tuple:
    return (-cluster.trust, -cluster.membership_sum, -cluster.votes, cluster.value)


def resolve_conflicts(
    clusters: Sequence[ClaimCluster], tau: float = 0.5
) -> tuple[list[ClaimCluster], list[tuple[ClaimCluster, str]]]:
    """Keep the most trusted cluster per key and discard the rest as ``outvoted``.

    Ties fall to higher summed membership, then more votes, then the
    lexicographically smaller value.  A kept cluster whose trust is below
    ``tau`` is flagged ``low-confidence`` rather than dropped.
    """
    retained: list[ClaimCluster] = []
    discarded: list[tuple[ClaimCluster, str]] = []
    for group in _groups(clusters).values():
        if any(c.trust is None for c in group):
            raise ValueError("resolve_conflicts needs clusters with trust set")
        # trusts in a group share one integer denominator, so float ties are exact
        ranked = sorted(group, key=_rank)
        winner = ranked[0]
        if winner.trust < tau:
            winner = replace(winner, flags=winner.flags + ("low-confidence",))
        retained.append(winner)
        discarded += [(c, "outvoted") for c in ranked[1:]]
    return retained, discarded


def render_claims(clusters: Iterable[ClaimCluster]) -> str:
    lines = []
    for c in clusters:
        note = " [low confidence]" if "low-confidence" in c.flags else ""
        lines.append(f"- {c.key}: {c.text}{note}")
    return "\n".join(lines)


def active_responses(responses: Iterable[RuleResponse]) -> list[RuleResponse]:
    """Responses that take part in voting: succeeded and membership above Low."""
    return [r for r in responses if not r.failed and r.membership is not MembershipTerm.LOW]


def fuse_responses(
    responses: Sequence[RuleResponse], settings: FusionSettings = FusionSettings()
) -> tuple[list[ClaimCluster], list[ClaimCluster], list[ClaimCluster], list[tuple[ClaimCluster, str]]]:
    """Pure vote -> trust -> resolve chain; returns every intermediate stage."""
    votes = vote_claims(active_responses(responses))
    trusted = trust_degrees(votes, settings.weighting)
    retained, discarded = resolve_conflicts(trusted, settings.tau)
    return votes, trusted, retained, discarded


def _call_payload(request: CompletionRequest, response: CompletionResponse) -> dict[str, Any]:
    return {
        "role": request.role_tag,
        "digest": request.digest,
        "source": response.source,
        "text": response.text,
    }


def rule_response_to_dict(r: RuleResponse) -> dict[str, Any]:
    return {
        "rule_id": r.rule_id,
        "domain": r.domain,
        "membership": r.membership.value,
        "failed": r.failed,
        "error": r.error,
        "claims": [[c.key, c.value, c.text] for c in r.claims],
    }


def rule_response_from_dict(doc: dict[str, Any]) -> RuleResponse:
    return RuleResponse(
        rule_id=doc["rule_id"],
        domain=doc["domain"],
        membership=MembershipTerm.parse(doc["membership"]),
        claims=tuple(Claim(k, v, t) for k, v, t in doc.get("claims", [])),
        failed=doc.get("failed", False),
        error=doc.get("error"),
    )


def run_subtask_node(
    node: Node,
    context: NodeContext,
    backend: Backend,
    agents: Agents | None = None,
    settings: FusionSettings = FusionSettings(),
    recorder: NodeRecorder | None = None,
    question_keys: Sequence[str] = (),
) -> SubTaskResult:
    """Run one sub-task node end to end, recording each decision."""
    if node.kind is not NodeKind.SUBTASK:
        raise ValueError(f"{node.id} is not a sub-task node")
    agents = agents or Agents()
    rec = recorder or NodeRecorder(node.id)
    calls: list[dict[str, Any]] = []

    def hook(request: CompletionRequest, response: CompletionResponse) -> None:
        calls.append(_call_payload(request, response))

    try:
        return _pipeline(node, context, backend, agents, settings, rec, question_keys, calls, hook)
    except Exception as exc:
        rec.emit("error", {"error": f"{type(exc).__name__}: {exc}", "calls": calls})
        raise


def _pipeline(node, context, backend, agents, settings, rec, question_keys, calls, hook) -> SubTaskResult:
    rules = analyze_domains(node, context, backend, agents, on_call=hook)
    rec.emit(
        "rule_generated",
        {
            "call": calls.pop(),
            "rules": [
                {
                    "rule_id": r.rule_id,
                    "domain": r.domain,
                    "membership": r.membership.value,
                    "temperature": r.expert.temperature,
                }
                for r in rules
            ],
        },
    )

    responses = execute_rules(rules, node, context, backend, agents, question_keys)
    for r in responses:
        rec.emit(
            "dea_call",
            {
                "rule_id": r.rule_id,
                "domain": r.domain,
                "membership": r.membership.value,
                "failed": r.failed,
                "error": r.error,
                "call": {"role": "DEA", "digest": r.digest, "source": r.source, "text": r.answer_text},
            },
        )

    extractor = backend if settings.extract_with_fea else None
    with_claims = []
    for r in responses:
        if r.failed:
            with_claims.append(r)
            continue
        try:
            claims = extract_claims(r.answer_text, question_keys, extractor, agents, on_call=hook)
        except BackendError as exc:
            log.warning("claim extraction failed for %s: %s", r.rule_id, exc)
            claims = extract_claims(r.answer_text, question_keys)
        with_claims.append(replace(r, claims=tuple(claims)))
    rec.emit(
        "claims",
        {"rules": [rule_response_to_dict(r) for r in with_claims], "calls": list(calls)},
    )
    calls.clear()

    votes, trusted, retained, discarded = fuse_responses(with_claims, settings)
    rec.emit("votes", {"clusters": [c.to_dict() for c in votes]})
    rec.emit("trust", {"clusters": [c.to_dict() for c in trusted], "weighting": settings.weighting})
    rec.emit(
        "resolution",
        {
            "retained": [c.to_dict() for c in retained],
            "discarded": [dict(c.to_dict(), reason=why) for c, why in discarded],
            "tau": settings.tau,
        },
    )

    try:
        fused, _ = compose_claims(node, render_claims(retained), backend, agents, on_call=hook)
    except BackendError as exc:
        raise NodeError(node.id, f"fusion expert failed: {exc}") from exc
    rec.emit("node_result", {"fused_text": fused, "call": calls.pop()})
    return SubTaskResult(
        node_id=node.id,
        retained=tuple(retained),
        discarded=tuple(discarded),
        fused_text=fused,
        rule_responses=tuple(with_claims),
        rules=tuple(rules),
    )
