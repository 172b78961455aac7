"""Rule-based multi-agent orchestration with membership-weighted fusion."""

from .core import (
    DomainRule,
    MembershipTerm,
    Node,
    NodeContext,
    NodeKind,
    Task,
    TaskExecutionGraph,
    membership_value,
    topological_levels,
    validate_teg,
)
from .orchestrator import FinalResult, RunSettings, replay, run

__version__ = "0.1.0"
