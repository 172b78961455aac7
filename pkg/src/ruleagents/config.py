"""YAML configuration: backend, engine tunables, agent overrides, domain catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .agents import Agents
from .backend import CachedBackend, HttpBackend, RetryPolicy, ScriptedBackend
from .core import MembershipTerm
from .errors import ConfigurationError, ParseError
from .fusion import WEIGHTINGS, FusionSettings
from .orchestrator import RunSettings
from .prompts import DEFAULT_CATALOG, TEMPLATES, build_profiles

TIE_BREAKS = ("membership-votes-lexical",)


@dataclass
class BackendConfig:
    kind: str = "scripted"
    playbook: Path | None = None
    base_url: str = ""
    model_id: str = "gpt-4"
    api_key_env: str = "XAGENTS_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    concurrency: int = 4


@dataclass
class EngineConfig:
    max_rules: int = 5
    execution_threshold: MembershipTerm = MembershipTerm.LOWER
    tau: float = 0.5
    tie_break: str = TIE_BREAKS[0]
    trust_weighting: str = "membership"
    node_retries: int = 1
    extract_with_fea: bool = True


@dataclass
class AgentsConfig:
    templates: dict[str, dict[str, str]] = field(default_factory=dict)
    temperatures: dict[str, float] = field(default_factory=dict)
    domain_temperatures: dict[str, float] = field(default_factory=dict)


@dataclass
class Config:
    backend: BackendConfig = field(default_factory=BackendConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    agents: AgentsConfig = field(default_factory=AgentsConfig)
    domains: tuple[str, ...] = DEFAULT_CATALOG

    @property
    def deterministic(self) -> bool:
        return self.backend.kind == "scripted"

    def run_settings(self) -> RunSettings:
        profiles = build_profiles(
            self.agents.templates, self.agents.temperatures, model_id=self.backend.model_id
        )
        agents = Agents(
            profiles=profiles,
            catalog=self.domains,
            max_rules=self.engine.max_rules,
            threshold=self.engine.execution_threshold,
            domain_temperatures=self.agents.domain_temperatures,
            concurrency=self.backend.concurrency,
        )
        fusion = FusionSettings(
            tau=self.engine.tau,
            weighting=self.engine.trust_weighting,
            extract_with_fea=self.engine.extract_with_fea,
        )
        return RunSettings(agents, fusion, self.engine.node_retries, self.backend.concurrency)

    def make_backend(self, cache_path: Path | None = None):
        b = self.backend
        if b.kind == "scripted":
            backend = ScriptedBackend.from_file(b.playbook)
        else:
            backend = HttpBackend(
                b.base_url,
                b.model_id,
                api_key_env=b.api_key_env,
                timeout=b.timeout,
                retry=RetryPolicy(b.max_retries, b.backoff_base),
                concurrency=b.concurrency,
            )
        if cache_path is not None:
            backend = CachedBackend(backend, cache_path)
        return backend


def _section(doc: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = doc.get(name) or {}
    if not isinstance(value, Mapping):
        raise ConfigurationError("must be a mapping", field=name)
    return value


def _num(section: Mapping, key: str, path: str, default, kind=float, lo=None, hi=None):
    raw = section.get(key, default)
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected {kind.__name__}, got {raw!r}", field=f"{path}.{key}") from None
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigurationError(f"{value} outside [{lo}, {hi}]", field=f"{path}.{key}")
    return value


def parse_config(doc: Mapping[str, Any], base_dir: Path = Path(".")) -> Config:
    if not isinstance(doc, Mapping):
        raise ConfigurationError("top level must be a mapping", field="<root>")
    known = {"backend", "engine", "agents", "domains"}
    for key in doc:
        if key not in known:
            raise ConfigurationError("unknown section", field=str(key))

    b = _section(doc, "backend")
    kind = b.get("kind", "scripted")
    if kind not in ("scripted", "http"):
        raise ConfigurationError(f"must be 'scripted' or 'http', got {kind!r}", field="backend.kind")
    playbook = b.get("playbook")
    if kind == "scripted":
        if not playbook:
            raise ConfigurationError("scripted backend requires a playbook", field="backend.playbook")
        playbook = (base_dir / playbook).resolve()
        if not playbook.exists():
            raise ConfigurationError(f"{playbook} does not exist", field="backend.playbook")
    if kind == "http" and not b.get("base_url"):
        raise ConfigurationError("http backend requires base_url", field="backend.base_url")
    backend = BackendConfig(
        kind=kind,
        playbook=playbook,
        base_url=str(b.get("base_url", "")),
        model_id=str(b.get("model_id", "gpt-4")),
        api_key_env=str(b.get("api_key_env", "XAGENTS_API_KEY")),
        timeout=_num(b, "timeout", "backend", 60.0, lo=0.001),
        max_retries=_num(b, "max_retries", "backend", 3, int, lo=0),
        backoff_base=_num(b, "backoff_base", "backend", 0.5, lo=0.0),
        concurrency=_num(b, "concurrency", "backend", 4, int, lo=1),
    )

    e = _section(doc, "engine")
    try:
        threshold = MembershipTerm.parse(e.get("execution_threshold", "Lower"))
    except ParseError as exc:
        raise ConfigurationError(str(exc), field="engine.execution_threshold") from None
    if threshold is MembershipTerm.LOW:
        raise ConfigurationError("threshold must be above Low", field="engine.execution_threshold")
    weighting = e.get("trust_weighting", "membership")
    if weighting not in WEIGHTINGS:
        raise ConfigurationError(f"must be one of {WEIGHTINGS}", field="engine.trust_weighting")
    tie_break = e.get("tie_break", TIE_BREAKS[0])
    if tie_break not in TIE_BREAKS:
        raise ConfigurationError(f"must be one of {TIE_BREAKS}", field="engine.tie_break")
    engine = EngineConfig(
        max_rules=_num(e, "max_rules", "engine", 5, int, lo=1),
        execution_threshold=threshold,
        tau=_num(e, "tau", "engine", 0.5, lo=0.0, hi=1.0),
        tie_break=tie_break,
        trust_weighting=weighting,
        node_retries=_num(e, "node_retries", "engine", 1, int, lo=0),
        extract_with_fea=bool(e.get("extract_with_fea", True)),
    )

    a = _section(doc, "agents")
    templates = dict(a.get("templates") or {})
    for name, override in templates.items():
        if name not in TEMPLATES:
            raise ConfigurationError("unknown template", field=f"agents.templates.{name}")
        if not isinstance(override, Mapping) or not set(override) <= {"system", "user"}:
            raise ConfigurationError("expected {system, user}", field=f"agents.templates.{name}")
    temps = dict(a.get("temperatures") or {})
    for role in temps:
        temps[role] = _num(temps, role, "agents.temperatures", None, lo=0.0, hi=2.0)
    dtemps = dict(a.get("domain_temperatures") or {})
    for dom in dtemps:
        dtemps[dom] = _num(dtemps, dom, "agents.domain_temperatures", None, lo=0.0, hi=2.0)
    agents = AgentsConfig(templates, temps, dtemps)

    domains = doc.get("domains") or DEFAULT_CATALOG
    if not isinstance(domains, (list, tuple)) or not all(isinstance(d, str) and d for d in domains):
        raise ConfigurationError("must be a list of domain names", field="domains")
    return Config(backend, engine, agents, tuple(domains))


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{path} not found", field="--config")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"not valid YAML: {exc}", field=str(path)) from None
    return parse_config(doc, path.parent)
