"""Default prompt templates and agent profiles.

Each template is a ``str.format`` string.  The keys of :data:`TEMPLATES` are
template names; several FEA templates share the ``FEA`` role tag.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Mapping

DEFAULT_CATALOG: tuple[str, ...] = (
    "Entertainment-and-Media",
    "Arts-and-Design",
    "History",
    "Science",
    "Technology",
    "Literature",
    "Geography",
    "Sports",
    "Music",
    "Film",
    "Politics",
    "Economics",
    "Medicine",
    "Law",
    "Mathematics",
    "Philosophy",
    "Religion",
    "Nature",
    "Food-and-Drink",
    "Pop-Culture",
)

DEFAULT_TEMPERATURES: dict[str, float] = {
    "PA": 0.2,
    "DAA": 0.2,
    "IEA": 0.2,
    "FEA": 0.2,
    "DEA": 0.7,
}

PA_SYSTEM = (
    "You are the planner agent. Decompose the task into simple sub-tasks that "
    "can be solved independently or in a stated order, then describe how their "
    "results are fused into the final answer. Do not assign domains or experts."
)
PA_USER = (
    "Task:\n{task}\n\n"
    "Reply with exactly one fenced block tagged plan. Inside it write one line "
    "per sub-task as `<id>: <instruction>` (ids T1, T2, ...), one line per "
    "dependency as `<id> -> <id>`, and a final line `FUSE: <fusion instruction>`."
)

DAA_SYSTEM = (
    "You are the domain analyst agent. Judge how strongly a sub-task belongs to "
    "each knowledge domain using the grades High, Sub-High, Medium, Mid-Low, "
    "Lower, Low."
)
DAA_USER = (
    "Analyze the domains of this sub-task.\n\n"
    "Sub-task:\n{task}\n\nContext:\n{context}\n\n"
    "Allowed domains: {catalog}\n\n"
    "Reply with one fenced block tagged rules, one `<domain>: <grade>` line per "
    "relevant domain, at most {max_rules} lines, strongest first."
)

DEA_SYSTEM = "You are a domain expert in {domain}. Answer strictly from the perspective of {domain}."
DEA_USER = (
    "Domain: {domain}\n"
    "Sub-task:\n{task}\n\nContext:\n{context}\n\n"
    "Answer the sub-task. End with one fenced block tagged claims holding one "
    "`<key>: <answer>` line per question ({keys})."
)

FEA_RULES_SYSTEM = (
    "You are the fusion expert agent. Merge the trusted expert claims into one "
    "coherent answer for the sub-task. Use only the claims given."
)
FEA_RULES_USER = (
    "Fuse the expert claims for sub-task {node}.\n\n"
    "Sub-task:\n{task}\n\nTrusted claims:\n{claims}"
)

FEA_SUB_SYSTEM = (
    "You are the fusion expert agent. Combine the sub-task results into the "
    "final result of the whole task."
)
FEA_SUB_USER = "Fusion instruction:\n{task}\n\nSub-task results:\n{context}"

FEA_EXTRACT_SYSTEM = (
    "You are the fusion expert agent. Extract atomic answers from an expert "
    "response, canonicalizing synonyms to a single surface form."
)
FEA_EXTRACT_USER = (
    "Extract the claims from this answer, one per key ({keys}).\n\n"
    "Answer:\n{answer}\n\n"
    "Reply with one fenced block tagged claims, `<key>: <answer>` per line."
)

TEMPLATES: dict[str, tuple[str, str, str]] = {
    # name: (role tag, system template, user template)
    "PA": ("PA", PA_SYSTEM, PA_USER),
    "DAA": ("DAA", DAA_SYSTEM, DAA_USER),
    "DEA": ("DEA", DEA_SYSTEM, DEA_USER),
    "FEA_rules": ("FEA", FEA_RULES_SYSTEM, FEA_RULES_USER),
    "FEA_sub": ("FEA", FEA_SUB_SYSTEM, FEA_SUB_USER),
    "FEA_extract": ("FEA", FEA_EXTRACT_SYSTEM, FEA_EXTRACT_USER),
}


def placeholders(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


def render(template: str, **values: object) -> str:
    missing = placeholders(template) - values.keys()
    if missing:
        raise KeyError(f"unbound template placeholders: {sorted(missing)}")
    return template.format(**values)


@dataclass(frozen=True)
class AgentProfile:
    role_tag: str
    system_prompt_template: str
    user_prompt_template: str
    temperature: float
    model_id: str = "gpt-4"


def build_profiles(
    overrides: Mapping[str, Mapping[str, str]] | None = None,
    temperatures: Mapping[str, float] | None = None,
    model_id: str = "gpt-4",
) -> dict[str, AgentProfile]:
    """Profiles for every template name, with optional config overrides."""
    temps = {**DEFAULT_TEMPERATURES, **(temperatures or {})}
    profiles = {}
    for name, (role, system, user) in TEMPLATES.items():
        override = (overrides or {}).get(name, {})
        profiles[name] = AgentProfile(
            role_tag=role,
            system_prompt_template=override.get("system", system),
            user_prompt_template=override.get("user", user),
            temperature=float(temps[role]),
            model_id=model_id,
        )
    return profiles
