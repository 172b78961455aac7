"""Shapley attribution of run scores to per-domain membership features.

Each run becomes a sample whose features are the memberships of the domain
rules it executed.  A coalition's value is the score obtained when only the
coalition's domains keep their rules: every other rule is masked to ``Low``
(excluded from voting) and the recorded claims are re-fused and re-scored.
Exact attribution enumerates all coalitions; the sampled variant averages
marginal contributions over random permutations.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import bench
from .agents import RuleResponse
from .core import MEMBERSHIP_LEVELS, MembershipTerm, NodeKind, TaskExecutionGraph
from .errors import JoinError, RuleAgentsError
from .fusion import FusionSettings, fuse_responses, render_claims, rule_response_from_dict
from .prompts import DEFAULT_CATALOG
from .trace import RunTrace

log = logging.getLogger(__name__)

MAX_EXACT_FEATURES = 12
BEESWARM_HEADER = ("sample_id", "domain", "feature_value", "shap_value")

ValueFn = Callable[[frozenset], float]


class TooManyFeatures(RuleAgentsError, ValueError):
    pass


@dataclass(frozen=True)
class AttributionSample:
    sample_id: str
    features: Mapping[str, float]
    outcome: float
    run_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for domain, value in self.features.items():
            if not any(abs(value - lv) < 1e-9 for lv in MEMBERSHIP_LEVELS):
                raise ValueError(f"feature {domain}={value} is not a membership level")

    @property
    def players(self) -> list[str]:
        return sorted(d for d, v in self.features.items() if v > 0)


@dataclass(frozen=True)
class ShapRow:
    sample_id: str
    domain: str
    feature_value: float
    shap_value: float
    stderr: float | None = None


# --------------------------------------------------------------------------
# Samples from traces
# --------------------------------------------------------------------------


def _graph(trace: RunTrace) -> TaskExecutionGraph:
    return TaskExecutionGraph.from_dict(trace.of_kind("plan")[0].payload["graph"])


def executed_rules(trace: RunTrace) -> dict[str, list[RuleResponse]]:
    """Last recorded claim set per sub-task node (the attempt that counted)."""
    out: dict[str, list[RuleResponse]] = {}
    for ev in trace.of_kind("claims"):
        out[ev.node_id] = [rule_response_from_dict(d) for d in ev.payload["rules"]]
    return out


def run_features(trace: RunTrace, catalog: Sequence[str] = DEFAULT_CATALOG) -> dict[str, float]:
    feats = {d: 0.0 for d in catalog}
    for responses in executed_rules(trace).values():
        for r in responses:
            if r.failed:
                continue
            feats[r.domain] = max(feats.get(r.domain, 0.0), r.membership.value_num)
    return feats


def build_samples(
    traces: Mapping[str, RunTrace],
    scores: Mapping[str, float],
    group: int = 1,
    catalog: Sequence[str] = DEFAULT_CATALOG,
) -> list[AttributionSample]:
    """One sample per run, or composite samples of ``group`` runs.

    A composite takes the per-domain maximum membership of its runs and
    their mean score.  Runs are grouped in sorted id order.
    """
    orphans = set(traces) ^ set(scores)
    if orphans:
        raise JoinError(sorted(orphans))
    if group < 1:
        raise ValueError("group size must be positive")
    ids = sorted(traces)
    samples = []
    for start in range(0, len(ids), group):
        members = tuple(ids[start : start + group])
        feats: dict[str, float] = {d: 0.0 for d in catalog}
        for rid in members:
            for d, v in run_features(traces[rid], catalog).items():
                feats[d] = max(feats.get(d, 0.0), v)
        outcome = math.fsum(scores[r] for r in members) / len(members)
        sample_id = members[0] if group == 1 else "+".join(members)
        samples.append(AttributionSample(sample_id, feats, outcome, members))
    return samples


def masked_output(trace: RunTrace, coalition: frozenset, settings: FusionSettings = FusionSettings()) -> str:
    """Re-fuse recorded claims with every rule outside ``coalition`` masked to Low."""
    graph = _graph(trace)
    recorded = executed_rules(trace)
    parts = []
    for node in graph.nodes:
        if node.kind is not NodeKind.SUBTASK or node.id not in recorded:
            continue
        masked = [
            r if r.domain in coalition else replace(r, membership=MembershipTerm.LOW)
            for r in recorded[node.id]
        ]
        _, _, retained, _ = fuse_responses(masked, settings)
        text = render_claims(retained)
        if text:
            parts.append(text)
    return "\n".join(parts)


def trace_value_fn(
    sample: AttributionSample,
    traces: Mapping[str, RunTrace],
    instances: Mapping[str, bench.Instance],
    settings: FusionSettings = FusionSettings(),
) -> ValueFn:
    """Value of a coalition: mean re-scored outcome over the sample's runs."""

    def value(coalition: frozenset) -> float:
        total = []
        for rid in sample.run_ids:
            text = masked_output(traces[rid], coalition, settings)
            total.append(bench.score_output(text, instances[rid])[0])
        return math.fsum(total) / len(total)

    return value


class Memo:
    """Cache coalition values; value functions may be expensive."""

    def __init__(self, fn: ValueFn) -> None:
        self.fn = fn
        self.cache: dict[frozenset, float] = {}

    def __call__(self, coalition: Iterable[str]) -> float:
        key = frozenset(coalition)
        if key not in self.cache:
            self.cache[key] = self.fn(key)
        return self.cache[key]


# --------------------------------------------------------------------------
# Shapley values
# --------------------------------------------------------------------------


def _zero_rows(sample: AttributionSample, players: Sequence[str]) -> list[ShapRow]:
    return [
        ShapRow(sample.sample_id, d, v, 0.0, 0.0)
        for d, v in sample.features.items()
        if d not in players
    ]


def shapley_exact(sample: AttributionSample, value_fn: ValueFn) -> list[ShapRow]:
    """Exact Shapley values by enumerating every coalition of non-zero features.

    Zero-membership features are dummies and get exactly 0.
    """
    players = sample.players
    k = len(players)
    if k > MAX_EXACT_FEATURES:
        raise TooManyFeatures(
            f"{sample.sample_id}: {k} non-zero features exceeds {MAX_EXACT_FEATURES}; use sampled mode"
        )
    v = Memo(value_fn)
    values = {}
    for mask in range(1 << k):
        values[mask] = v(p for i, p in enumerate(players) if mask >> i & 1)
    # Rational accumulation: one rounding per value, so the result is
    # bit-identical to averaging over every permutation.
    exact = {mask: Fraction(val) for mask, val in values.items()}
    weight = [Fraction(math.factorial(s) * math.factorial(k - s - 1), math.factorial(k)) for s in range(k)]
    rows = []
    for i, p in enumerate(players):
        bit = 1 << i
        phi = sum(
            (
                weight[bin(mask).count("1")] * (exact[mask | bit] - exact[mask])
                for mask in range(1 << k)
                if not mask & bit
            ),
            Fraction(0),
        )
        rows.append(ShapRow(sample.sample_id, p, sample.features[p], float(phi)))
    rows += _zero_rows(sample, players)
    return sorted(rows, key=lambda r: r.domain)


def shapley_sampled(
    sample: AttributionSample, value_fn: ValueFn, permutations: int, seed: int = 0
) -> list[ShapRow]:
    """Permutation-sampling estimate with a standard error per feature.

    When ``permutations`` reaches ``K!`` every ordering is used exactly once
    and the result equals the exact values.
    """
    if permutations < 1:
        raise ValueError("need at least one permutation")
    players = sample.players
    k = len(players)
    v = Memo(value_fn)
    if k == 0:
        return sorted(_zero_rows(sample, players), key=lambda r: r.domain)
    if permutations >= math.factorial(k):
        orders: Iterable[Sequence[int]] = itertools.permutations(range(k))
    else:
        rng = np.random.default_rng(seed)
        orders = (rng.permutation(k) for _ in range(permutations))
    marginals: list[list[Fraction]] = [[] for _ in range(k)]
    for order in orders:
        coalition: list[str] = []
        prev = Fraction(v(coalition))
        for idx in order:
            coalition.append(players[idx])
            cur = Fraction(v(coalition))
            marginals[idx].append(cur - prev)
            prev = cur
    rows = []
    for i, p in enumerate(players):
        m = marginals[i]
        mean = sum(m, Fraction(0)) / len(m)
        spread = np.asarray(m, dtype=float)
        se = float(spread.std(ddof=1) / math.sqrt(len(m))) if len(m) > 1 else math.nan
        rows.append(ShapRow(sample.sample_id, p, sample.features[p], float(mean), se))
    rows += _zero_rows(sample, players)
    return sorted(rows, key=lambda r: r.domain)


def efficiency_residual(rows: Sequence[ShapRow], value_fn: ValueFn, players: Sequence[str]) -> float:
    """``|sum(phi) - (v(all) - v(empty))|`` for one sample's rows."""
    gap = value_fn(frozenset(players)) - value_fn(frozenset())
    return abs(math.fsum(r.shap_value for r in rows) - gap)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def beeswarm_csv(rows: Sequence[ShapRow]) -> str:
    if not rows:
        raise ValueError("no attribution rows to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BEESWARM_HEADER)
    for r in sorted(rows, key=lambda r: (r.sample_id, r.domain)):
        writer.writerow([r.sample_id, r.domain, repr(float(r.feature_value)), repr(float(r.shap_value))])
    return buf.getvalue()


def emit_beeswarm(rows: Sequence[ShapRow], path: str | Path) -> Path:
    """Write one CSV row per attribution, ordered by sample then domain."""
    text = beeswarm_csv(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


@dataclass
class AttributionReport:
    samples: list[dict] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((s["residual"] for s in self.samples), default=0.0)

    def to_dict(self) -> dict:
        return {"samples": self.samples, "max_residual": self.max_residual}


def attribute(
    samples: Sequence[AttributionSample],
    value_fns: Mapping[str, ValueFn],
    mode: str = "exact",
    permutations: int = 1000,
    seed: int = 0,
) -> tuple[list[ShapRow], AttributionReport]:
    """Attribute every sample; returns all rows plus per-sample residuals."""
    rows: list[ShapRow] = []
    report = AttributionReport()
    for sample in samples:
        v = Memo(value_fns[sample.sample_id])
        if mode == "exact":
            sample_rows = shapley_exact(sample, v)
        elif mode == "sampled":
            sample_rows = shapley_sampled(sample, v, permutations, seed)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        rows += sample_rows
        report.samples.append(
            {
                "sample_id": sample.sample_id,
                "outcome": sample.outcome,
                "v_full": v(sample.players),
                "v_empty": v(()),
                "residual": efficiency_residual(sample_rows, v, sample.players),
            }
        )
    return rows, report
