"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RuleAgentsError(Exception):
    """Base class for every error raised by this package."""


class ParseError(RuleAgentsError, ValueError):
    pass


class GraphError(RuleAgentsError):
    """A task-execution graph failed structural validation."""

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("invalid task execution graph: " + "; ".join(self.violations))


class ConfigurationError(RuleAgentsError):
    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class BackendError(RuleAgentsError):
    pass


class TransportError(BackendError):
    """Live call failed after exhausting retries (or a scripted fault)."""

    def __init__(self, message: str, attempts: list[dict] | None = None) -> None:
        self.attempts = list(attempts or [])
        super().__init__(message)


class PlaybookMissError(BackendError):
    def __init__(self, role_tag: str, digest: str) -> None:
        self.role_tag = role_tag
        self.digest = digest
        super().__init__(f"no playbook entry for role={role_tag} prompt={digest}")


class PlanParseError(ParseError):
    def __init__(self, message: str, raw: str) -> None:
        self.raw = raw
        super().__init__(message)


class AnalysisError(RuleAgentsError):
    pass


class NodeError(RuleAgentsError):
    def __init__(self, node_id: str, message: str) -> None:
        self.node_id = node_id
        super().__init__(f"node {node_id}: {message}")


class RunError(RuleAgentsError):
    """A run failed; ``trace`` holds every event recorded before the failure."""

    def __init__(self, message: str, trace=None) -> None:
        self.trace = trace
        super().__init__(message)


class ReplayError(RuleAgentsError):
    def __init__(self, node_id: str, message: str) -> None:
        self.node_id = node_id
        super().__init__(f"{message}: {node_id}")


class JoinError(RuleAgentsError):
    def __init__(self, orphans: list[str]) -> None:
        self.orphans = sorted(orphans)
        super().__init__("unmatched run ids: " + ", ".join(self.orphans))


class DatasetError(RuleAgentsError):
    def __init__(self, message: str, index: int | None = None) -> None:
        self.index = index
        super().__init__(f"record {index}: {message}" if index is not None else message)
