"""
Pydantic schemas for configurations, requests, decisions, reports and scenario files.
"""
import math
from typing import Optional, List, Dict, Tuple

import networkx as nx
from pydantic import BaseModel, Field, field_validator, model_validator

from ztlearn.config import get_settings
from ztlearn.models import (
    ACTION, DeploymentMode, EffectMode, RuleEffect, Tier, TimestampPolicyKind, Verdict,
)
from ztlearn.utils.time import validate_bucket_edges

settings = get_settings()

# Attribute domains matching the illustrative 33-row activity log
ILLUSTRATIVE_DOMAINS: Dict[str, List[str]] = {
    "source_ip": ["192.168.1.10", "192.168.1.11", "192.168.1.12"],
    "dest_ip": ["10.0.0.1", "10.0.0.2"],
    "source_port": ["443", "51234", "52415", "56025", "60001"],
    "dest_port": ["22", "443", "8443"],
    "protocol": ["HTTPS", "SSH"],
    "user_id": [f"User{i}" for i in range(1, 9)],
    "application": ["File Sync", "SSH Client", "Web Browser"],
}


# Base schemas
class BaseSchema(BaseModel):
    """Base schema with common configuration."""

    class Config:
        from_attributes = True
        populate_by_name = True


# Dataset schemas
class TimestampPolicy(BaseSchema):
    """How the epoch timestamp column enters a learning dataset."""
    kind: TimestampPolicyKind = Field(default=TimestampPolicyKind.DROP)
    edges: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_edges(self):
        if self.kind == TimestampPolicyKind.BUCKETS:
            validate_bucket_edges(self.edges)
        return self


class SyntheticConfig(BaseSchema):
    """Seeded activity-log generator settings."""
    rows: int = Field(default=33, ge=1)
    domains: Dict[str, List[str]] = Field(default_factory=lambda: {k: list(v) for k, v in ILLUSTRATIVE_DOMAINS.items()})
    fraud_fraction: float = Field(default=0.3, ge=0.0, le=1.0)
    fraud_pattern: Dict[str, str] = Field(default_factory=lambda: {"source_port": "52415"})
    fraud_strength: float = Field(default=1.0, ge=0.0, le=1.0)
    benign_allow_rate: float = Field(default=0.95, ge=0.0, le=1.0)
    start_epoch: int = Field(default=1_672_531_200, ge=0)
    max_gap_seconds: int = Field(default=120, ge=1)

    @field_validator("domains")
    @classmethod
    def validate_domains(cls, v):
        for name, values in v.items():
            if name in (ACTION, "timestamp"):
                raise ValueError(f"'{name}' is generated, not configured")
            if not values:
                raise ValueError(f"domain of '{name}' needs at least one value")
            if len(set(values)) != len(values):
                raise ValueError(f"domain of '{name}' has duplicate values")
        return {name: [str(x) for x in values] for name, values in v.items()}

    @field_validator("fraud_pattern", mode="before")
    @classmethod
    def stringify_pattern(cls, v):
        return {str(k): str(x) for k, x in (v or {}).items()}

    @model_validator(mode="after")
    def validate_pattern(self):
        for name, value in self.fraud_pattern.items():
            if name not in self.domains:
                raise ValueError(f"fraud pattern references unknown variable '{name}'")
            if value not in self.domains[name]:
                raise ValueError(f"fraud pattern value '{value}' is not in the domain of '{name}'")
        return self


# Learning schemas
class SearchConfig(BaseSchema):
    """Hill-climbing structure search parameters."""
    max_parents: int = Field(default_factory=lambda: settings.max_parents, ge=0)
    max_iterations: int = Field(default_factory=lambda: settings.max_iterations, ge=0)
    random_restarts: int = Field(default_factory=lambda: settings.random_restarts, ge=0)
    restart_length: int = Field(default_factory=lambda: settings.restart_length, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    alpha: float = Field(default_factory=lambda: settings.alpha, ge=0.0)
    forbidden_edges: List[Tuple[str, str]] = Field(default_factory=list)
    required_edges: List[Tuple[str, str]] = Field(default_factory=list)
    reserve_other: bool = Field(default_factory=lambda: settings.reserve_other)


class ScoreReport(BaseSchema):
    """Log-likelihood, parameter count and BIC of one structure (lower BIC is better)."""
    loglikelihood: float
    k: int = Field(..., ge=0)
    N: int = Field(..., ge=1)
    bic: float

    @classmethod
    def from_terms(cls, loglikelihood: float, k: int, N: int) -> "ScoreReport":
        return cls(loglikelihood=loglikelihood, k=k, N=N, bic=bic_value(loglikelihood, k, N))

    @model_validator(mode="after")
    def validate_identity(self):
        expected = bic_value(self.loglikelihood, self.k, self.N)
        if not (self.bic == expected or (math.isnan(self.bic) and math.isnan(expected))):
            raise ValueError(f"bic {self.bic!r} violates k*ln(N) - 2*LL = {expected!r}")
        return self


def bic_value(loglikelihood: float, k: int, N: int) -> float:
    return k * math.log(N) - 2.0 * loglikelihood


class TraceEntry(BaseSchema):
    """One accepted structure-search move."""
    iter: int
    op: str
    edge: Tuple[str, str]
    bic_before: float
    bic_after: float
    restart: int = 0


# Inference schemas
class EffectEntry(BaseSchema):
    value: str
    p_allowed: Optional[float] = Field(None, ge=0.0, le=1.0)


class EffectTable(BaseSchema):
    """P(action = allowed) per value of one attribute."""
    attribute: str
    mode: EffectMode = Field(default=EffectMode.CONDITIONAL)
    entries: List[EffectEntry] = Field(default_factory=list)


# Decision schemas
class Thresholds(BaseSchema):
    """Local block gate and offline autonomy thresholds."""
    theta_block: float = Field(default_factory=lambda: settings.theta_block, ge=0.0, le=1.0)
    theta_auto: float = Field(default_factory=lambda: settings.theta_auto, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_order(self):
        if self.theta_block > self.theta_auto:
            raise ValueError("theta_block must not exceed theta_auto")
        return self


class PolicyRule(BaseSchema):
    """Conjunction of attribute=value conditions; '*' matches anything."""
    conditions: Dict[str, str] = Field(default_factory=dict)
    effect: RuleEffect
    name: Optional[str] = Field(None, max_length=100)

    @field_validator("conditions", mode="before")
    @classmethod
    def stringify_conditions(cls, v):
        return {str(k): str(x) for k, x in (v or {}).items()}


class PolicySet(BaseSchema):
    """Ordered first-match rule list with a deny default."""
    rules: List[PolicyRule] = Field(default_factory=list)
    default: RuleEffect = Field(default=RuleEffect.DENY)

    @field_validator("default")
    @classmethod
    def validate_default(cls, v):
        if v != RuleEffect.DENY:
            raise ValueError("policy default must be deny")
        return v


class AccessRequest(BaseSchema):
    """Partial attribute evidence for one access request."""
    request_id: str = Field(..., min_length=1)
    origin: str = Field(default="pep-0")
    evidence: Dict[str, str] = Field(default_factory=dict)
    arrival_time: float = Field(default=0.0, ge=0.0)
    resource: Optional[str] = None

    @field_validator("evidence", mode="before")
    @classmethod
    def stringify_evidence(cls, v):
        return {str(k): str(x) for k, x in (v or {}).items()}

    @field_validator("evidence")
    @classmethod
    def validate_no_action(cls, v):
        if ACTION in v:
            raise ValueError("request evidence must not contain the action variable")
        return v

    @property
    def subject(self) -> str:
        return self.evidence.get("user_id", self.origin)

    @property
    def target(self) -> str:
        if self.resource:
            return self.resource
        return f"{self.evidence.get('dest_ip', '*')}:{self.evidence.get('dest_port', '*')}"


class Decision(BaseSchema):
    """PEP verdict with the probability and path that produced it."""
    request_id: str
    verdict: Verdict
    p_allow: float = Field(..., ge=0.0, le=1.0)
    model_version: int
    rationale: str = ""
    node: str = "pep-0"
    time: float = 0.0
    pep_verdict: Optional[Verdict] = None
    audit_pending: bool = False

    def to_log_record(self) -> Dict[str, object]:
        return {
            "request_id": self.request_id,
            "verdict": self.verdict.value,
            "p_allow": self.p_allow,
            "model_version": self.model_version,
            "node": self.node,
            "time": self.time,
        }


class SessionRecord(BaseSchema):
    """Ledger entry for one subject-resource communication path."""
    session_id: str
    request_id: str
    subject: str
    resource: str
    opened_at: float
    verdict: Verdict
    closed_at: Optional[float] = None
    reason: Optional[str] = None
    audit_pending: bool = False

    @property
    def is_open(self) -> bool:
        return self.closed_at is None


# Continuum schemas
class NodeSpec(BaseSchema):
    id: str = Field(..., min_length=1)
    tier: Tier


class LinkSpec(BaseSchema):
    """Undirected link with base latency and explicit [start, end) outage intervals."""
    a: str
    b: str
    latency_ms: float = Field(..., ge=0.0)
    outages: List[Tuple[float, float]] = Field(default_factory=list)

    @field_validator("outages")
    @classmethod
    def validate_outages(cls, v):
        for start, end in v:
            if end <= start:
                raise ValueError(f"outage [{start}, {end}) is empty")
        return sorted(v)

    def is_up(self, t: float) -> bool:
        return not any(start <= t < end for start, end in self.outages)


class Topology(BaseSchema):
    """Continuum node graph; exactly one cloud node hosts PDP, PA and resource management."""
    nodes: List[NodeSpec]
    links: List[LinkSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_graph(self):
        ids = [node.id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("topology has duplicate node ids")
        clouds = [node.id for node in self.nodes if node.tier == Tier.CLOUD]
        if len(clouds) != 1:
            raise ValueError(f"topology needs exactly one cloud node, found {len(clouds)}")
        for link in self.links:
            for end in (link.a, link.b):
                if end not in ids:
                    raise ValueError(f"link endpoint '{end}' is not a node")
        graph = nx.Graph()
        graph.add_nodes_from(ids)
        graph.add_edges_from((link.a, link.b) for link in self.links)
        if not nx.is_connected(graph):
            raise ValueError("topology is not connected with all links up")
        return self

    @property
    def cloud_node(self) -> str:
        return next(node.id for node in self.nodes if node.tier == Tier.CLOUD)

    def nodes_in(self, tier: Tier) -> List[str]:
        return [node.id for node in self.nodes if node.tier == tier]


class WorkloadSpec(BaseSchema):
    """Per-edge-node Poisson arrivals drawn from a synthetic log domain."""
    rates: Dict[str, float] = Field(default_factory=dict)  # requests per second
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    missing_rate: float = Field(default=0.0, ge=0.0, lt=1.0)

    @field_validator("rates")
    @classmethod
    def validate_rates(cls, v):
        if any(rate < 0 for rate in v.values()):
            raise ValueError("arrival rates must be non-negative")
        return v


class MessageSizes(BaseSchema):
    request_bytes: int = Field(default_factory=lambda: settings.request_bytes, ge=0)
    verdict_bytes: int = Field(default_factory=lambda: settings.verdict_bytes, ge=0)


class SimConfig(BaseSchema):
    """Seeded simulation parameters."""
    seed: int = Field(default_factory=lambda: settings.default_seed)
    duration_ms: float = Field(..., gt=0)
    mode: DeploymentMode = Field(default=DeploymentMode.HYBRID)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    sync_interval_ms: float = Field(default=60_000.0, gt=0)
    retrain_interval_ms: float = Field(default=120_000.0, gt=0)
    workload: WorkloadSpec = Field(default_factory=WorkloadSpec)
    alpha: float = Field(default_factory=lambda: settings.alpha, ge=0.0)
    search: SearchConfig = Field(default_factory=SearchConfig)
    sizes: MessageSizes = Field(default_factory=MessageSizes)
    policies: PolicySet = Field(default_factory=PolicySet)
    timestamp_policy: TimestampPolicy = Field(default_factory=TimestampPolicy)
    bootstrap_rows: int = Field(default=500, ge=1)
    pep_eval_ms: float = Field(default=0.5, ge=0.0)
    pdp_eval_ms: float = Field(default=2.0, ge=0.0)
    pdp_timeout_ms: float = Field(default=1000.0, ge=0.0)
    session_lifetime_ms: float = Field(default=30_000.0, gt=0)
    plot_bucket_ms: float = Field(default=10_000.0, gt=0)


class Scenario(BaseSchema):
    topology: Topology
    config: SimConfig


class ConfusionMatrix(BaseSchema):
    """Learning-gate predictions (positive = flagged) against ground truth (positive = fraudulent)."""
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def recall(self) -> float:
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0

    @property
    def precision(self) -> float:
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else 0.0


class Metrics(BaseSchema):
    """Aggregated counters and latencies of one simulation run."""
    request_count: int = 0
    labeled_count: int = 0
    verdict_totals: Dict[str, int] = Field(default_factory=dict)
    pdp_query_count: int = 0
    blocked_local_count: int = 0
    autonomous_count: int = 0
    anomalous_count: int = 0
    connectivity_blocked_count: int = 0
    audit_count: int = 0
    revoked_count: int = 0
    model_push_count: int = 0
    retrain_count: int = 0
    latency_mean_ms: float = 0.0
    latency_p50_ms: float = 0.0
    latency_p95_ms: float = 0.0
    latency_p99_ms: float = 0.0
    bytes_on_wire: int = 0
    confusion: ConfusionMatrix = Field(default_factory=ConfusionMatrix)
    staleness_histogram: Dict[int, int] = Field(default_factory=dict)


# Command-line schemas
class CliConfig(BaseSchema):
    """Validated view of the parsed command line."""
    subcommand: str
    input: Optional[str] = None
    output: Optional[str] = None
    seed: int = Field(default_factory=lambda: settings.default_seed)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    alpha: float = Field(default_factory=lambda: settings.alpha, ge=0.0)
    max_parents: int = Field(default_factory=lambda: settings.max_parents, ge=0)
    max_iterations: int = Field(default_factory=lambda: settings.max_iterations, ge=0)
    output_format: str = Field(default="json", pattern="^(json|csv)$")
