"""
Discrete-event simulation of PEPs, a cloud PDP and model distribution across
an edge-fog-cloud continuum.

Two deployments are compared on identical seeded workloads:
cloud mode routes every request to the PDP, while hybrid mode gates requests
with the PEP's learning model first. Model retraining, sync pushes, session
lifetimes and audits of autonomous allows run as simpy processes. Every run
emits an event trace; metrics are computed from the trace alone.
"""
import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
import simpy
from pydantic import ValidationError

from ztlearn.models import (
    ACTION, ALLOWED, BLOCKED, TIMESTAMP, BayesianNetwork, Dataset, DeploymentMode,
    GroundTruth, RuleEffect, SchemaLookupError, Tier, TimestampPolicyKind, Verdict, ZtError,
)
from ztlearn.schemas import (
    AccessRequest, ConfusionMatrix, Decision, LinkSpec, Metrics, NodeSpec, PolicyRule,
    PolicySet, Scenario, SimConfig, SyntheticConfig, Thresholds, Topology, WorkloadSpec,
)
from ztlearn.services.bayesnet import serialize
from ztlearn.services.dataset import (
    draw_labels, draw_records, generate_synthetic, learning_view, sorted_domains,
)
from ztlearn.services.decision import PolicyEnforcementPoint, PosteriorMemo, gate, resolve_at_pdp
from ztlearn.services.policies import PolicyEngine
from ztlearn.services.sessions import PolicyAdministrator
from ztlearn.services.structure_learning import hill_climb
from ztlearn.utils.jsonl import canonical_dumps, read_jsonl, write_jsonl
from ztlearn.utils.time import bucket_label, hour_of_day_label, ms_to_seconds

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
GATE_BLOCKS = (Verdict.BLOCKED_LOCAL, Verdict.BLOCKED_ANOMALOUS)


class SimulationError(ZtError):
    """Exception raised when a scenario cannot be simulated."""
    pass


def derive_seed(seed: int, stream: str) -> int:
    """Independent, reproducible seed per named random stream."""
    return int(np.random.SeedSequence([seed, zlib.crc32(stream.encode("utf-8"))]).generate_state(1)[0])


def path_latency(topology: Topology, src: str, dst: str, t: float) -> Optional[float]:
    """Shortest-path latency over links up at time t; None when no path exists."""
    if src == dst:
        return 0.0
    graph = nx.Graph()
    graph.add_nodes_from(node.id for node in topology.nodes)
    for link in topology.links:
        if link.is_up(t):
            graph.add_edge(link.a, link.b, latency_ms=link.latency_ms)
    try:
        return float(nx.dijkstra_path_length(graph, src, dst, weight="latency_ms"))
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


@dataclass(frozen=True)
class WorkloadItem:
    """One timed request with its ground truth and the full attribute record behind it."""
    request: AccessRequest
    label: GroundTruth
    record: Dict[str, str]
    epoch: int


def generate_workload(config: SimConfig, seed: Optional[int] = None) -> List[WorkloadItem]:
    """
    Seeded Poisson arrivals per origin node.

    Inter-arrival times are exponential with mean 1/rate; fraudulent requests
    carry the configured fraud pattern. Nodes with rate 0 emit nothing.

    Args:
        config: Simulation config holding the workload spec and duration
        seed: Overrides config.seed

    Returns:
        List[WorkloadItem]: Requests ordered by (arrival time, origin, index)
    """
    seed = config.seed if seed is None else seed
    spec = config.workload
    rng = np.random.default_rng(derive_seed(seed, "workload"))
    domains = sorted_domains(spec.synthetic)

    drafts: List[Tuple[float, int, int, Dict[str, str], bool]] = []
    for rank, node in enumerate(sorted(spec.rates)):
        rate = spec.rates[node]
        if rate <= 0:
            continue
        scale = 1000.0 / rate
        times = []
        t = float(rng.exponential(scale))
        while t < config.duration_ms:
            times.append(t)
            t += float(rng.exponential(scale))
        if not times:
            continue
        fraudulent = draw_labels(rng, spec.synthetic, len(times))
        columns, _ = draw_records(rng, spec.synthetic, fraudulent)
        for i, arrival in enumerate(times):
            record = {name: domains[name][int(columns[name][i])] for name in domains}
            drafts.append((arrival, rank, i, record, bool(fraudulent[i])))

    drafts.sort(key=lambda d: (d[0], d[1], d[2]))
    origins = sorted(spec.rates)
    items = []
    for index, (arrival, rank, _, record, fraudulent) in enumerate(drafts):
        evidence = dict(record)
        if spec.missing_rate > 0:
            dropped = rng.random(len(evidence)) < spec.missing_rate
            evidence = {k: v for k, v, d in zip(record, record.values(), dropped) if not d}
        request = AccessRequest(
            request_id=f"r{index:06d}", origin=origins[rank], evidence=evidence, arrival_time=arrival,
        )
        epoch = spec.synthetic.start_epoch + int(ms_to_seconds(arrival))
        label = GroundTruth.FRAUDULENT if fraudulent else GroundTruth.BENIGN
        items.append(WorkloadItem(request, label, record, epoch))
    logger.info(f"Generated {len(items)} workload requests from {len(origins)} origins (seed={seed})")
    return items


class ContinuumState:
    """
    Mutable simulator state: the cloud model, one PEP per non-cloud node,
    the PA ledger and the event trace.
    """

    def __init__(self, topology: Topology, config: SimConfig, initial_model: BayesianNetwork):
        self.topology = topology
        self.config = config
        self.cloud = topology.cloud_node
        self.cloud_model = initial_model
        self.engine = PolicyEngine(config.policies)
        self.pa = PolicyAdministrator()
        self.ledger_seen = 0
        memo = PosteriorMemo()
        self.peps: Dict[str, PolicyEnforcementPoint] = {
            node.id: PolicyEnforcementPoint(node.id, initial_model, config.thresholds, self.engine, memo)
            for node in topology.nodes if node.tier != Tier.CLOUD
        }
        self.shadow = PolicyEnforcementPoint(self.cloud, initial_model, config.thresholds, memo=memo)
        self.trace: List[Dict[str, Any]] = []
        self.decided: List[Tuple[WorkloadItem, Decision]] = []
        self.audit_requests: Dict[str, WorkloadItem] = {}

    def record(self, kind: str, time: float, **payload: Any) -> Dict[str, Any]:
        event = {"seq": len(self.trace), "time": time, "type": kind, **payload}
        self.trace.append(event)
        return event

    def reachable(self, node: str, t: float) -> Optional[float]:
        return path_latency(self.topology, node, self.cloud, t)

    def staleness(self, node: str) -> int:
        return self.cloud_model.version - self.peps[node].version

    def publish(self, net: BayesianNetwork) -> BayesianNetwork:
        """Make net the cloud's current model under the next version number."""
        net = net.with_metadata(version=self.cloud_model.version + 1)
        self.cloud_model = net
        self.shadow.install(net)
        return net


def model_sync(state: ContinuumState, time: float = 0.0) -> Dict[str, int]:
    """
    Push the cloud model to every PEP reachable at the given time.

    Unreachable PEPs keep their model; PEPs already current receive nothing.
    Pending audits of a reachable PEP's autonomous allows are resolved here.

    Returns:
        Dict[str, int]: Model version held by each PEP after the sync
    """
    if state.config.mode == DeploymentMode.CLOUD:
        return {node: pep.version for node, pep in state.peps.items()}
    payload = None
    for node, pep in state.peps.items():
        up = state.reachable(node, time) is not None
        pushed = up and pep.version < state.cloud_model.version
        size = 0
        previous = pep.version
        if pushed:
            payload = payload or serialize(state.cloud_model).encode("utf-8")
            size = len(payload)
            pep.install(state.cloud_model)
        state.record(
            "sync", time, node=node, reachable=up, pushed=pushed, bytes=size,
            from_version=previous, to_version=pep.version, staleness=state.staleness(node),
        )
        if up:
            _run_audits(state, node, time)
    return {node: pep.version for node, pep in state.peps.items()}


def _run_audits(state: ContinuumState, node: str, time: float) -> None:
    sizes = state.config.sizes
    for session in state.pa.pending_audits():
        item = state.audit_requests.get(session.session_id)
        if item is None or item.request.origin != node:
            continue
        verdict = state.engine.decide(item.request)
        state.pa.resolve_audit(session.session_id, verdict, time)
        state.record(
            "audit", time, node=node, session_id=session.session_id,
            request_id=item.request.request_id, verdict=verdict.value,
            bytes=sizes.request_bytes + sizes.verdict_bytes,
        )
        _record_revocations(state, node)


def _record_revocations(state: ContinuumState, node: str) -> None:
    """Copy revocations appended to the PA ledger since the last call into the trace."""
    events = state.pa.events_since(state.ledger_seen)
    state.ledger_seen += len(events)
    for event in events:
        if event["op"] == "revoke":
            state.record(
                "revoke", event["time"], node=node, session_id=event["session_id"], reason=event["reason"],
            )


def _training_record(state: ContinuumState, item: WorkloadItem, decision: Decision,
                     names: Sequence[str]) -> Dict[str, str]:
    record = dict(item.record)
    if TIMESTAMP in names:
        policy = state.config.timestamp_policy
        if policy.kind == TimestampPolicyKind.HOUR_OF_DAY:
            record[TIMESTAMP] = hour_of_day_label(item.epoch)
        else:
            record[TIMESTAMP] = bucket_label(item.epoch, policy.edges)
    record[ACTION] = ALLOWED if decision.verdict.allows else BLOCKED
    return record


def _training_dataset(state: ContinuumState, bootstrap: Dataset) -> Dataset:
    schema = bootstrap.schema
    rows = []
    skipped = 0
    for item, decision in state.decided:
        record = _training_record(state, item, decision, schema.names)
        try:
            rows.append([schema.encode(name, record[name]) for name in schema.names])
        except (SchemaLookupError, KeyError):
            skipped += 1
    if skipped:
        logger.warning(f"Skipped {skipped} decided requests outside the bootstrap schema")
    if not rows:
        return bootstrap
    return bootstrap.concat(Dataset(schema, np.array(rows, dtype=np.int64)))


def bootstrap_dataset(config: SimConfig) -> Dataset:
    synthetic = config.workload.synthetic.model_copy(update={"rows": config.bootstrap_rows})
    log, _ = generate_synthetic(derive_seed(config.seed, "bootstrap"), synthetic, full_domains=True)
    return learning_view(log, config.timestamp_policy)


def train_model(config: SimConfig, dataset: Dataset) -> BayesianNetwork:
    search = config.search.model_copy(update={"alpha": config.alpha, "seed": config.seed})
    net, _, _ = hill_climb(dataset, search)
    return net


class _Simulator:
    """simpy processes over one ContinuumState."""

    def __init__(self, env: simpy.Environment, state: ContinuumState, bootstrap: Dataset):
        self.env = env
        self.state = state
        self.config = state.config
        self.bootstrap = bootstrap

    def arrivals(self, items: Sequence[WorkloadItem]):
        for item in items:
            delay = item.request.arrival_time - self.env.now
            if delay > 0:
                yield self.env.timeout(delay)
            self.env.process(self.handle(item))

    def handle(self, item: WorkloadItem):
        state, config = self.state, self.config
        request = item.request
        node = request.origin
        t = self.env.now
        latency = state.reachable(node, t)
        sizes = config.sizes

        if config.mode == DeploymentMode.CLOUD:
            p_shadow, _ = state.shadow.score(request)
            gate_flagged = gate(p_shadow, config.thresholds, True) in GATE_BLOCKS
            version, staleness = state.cloud_model.version, 0
            if latency is None:
                decision = Decision(
                    request_id=request.request_id, verdict=Verdict.BLOCKED_UNREACHABLE,
                    p_allow=p_shadow or 0.0, model_version=version, node=node, time=t,
                    rationale="PDP unreachable, fail-closed",
                )
                elapsed, size, queried = config.pep_eval_ms + config.pdp_timeout_ms, 0, False
            else:
                forwarded = Decision(
                    request_id=request.request_id, verdict=Verdict.FORWARDED_TO_PDP,
                    p_allow=p_shadow or 0.0, model_version=version, node=node, time=t,
                    rationale="cloud deployment routes every request to the PDP",
                )
                decision = resolve_at_pdp(forwarded, request, state.engine)
                elapsed = config.pep_eval_ms + 2 * latency + config.pdp_eval_ms
                size, queried = sizes.request_bytes + sizes.verdict_bytes, True
        else:
            pep = state.peps[node]
            staleness = state.staleness(node)
            decision = pep.evaluate(request, pdp_reachable=latency is not None)
            version = decision.model_version
            gate_flagged = decision.verdict in GATE_BLOCKS
            elapsed, size, queried = config.pep_eval_ms, 0, False
            if decision.verdict == Verdict.FORWARDED_TO_PDP:
                decision = resolve_at_pdp(decision, request, state.engine)
                elapsed += 2 * latency + config.pdp_eval_ms
                size, queried = sizes.request_bytes + sizes.verdict_bytes, True

        yield self.env.timeout(elapsed)
        done = self.env.now
        decision = decision.model_copy(update={"time": done})
        state.decided.append((item, decision))
        state.record(
            "decision", done, request_id=request.request_id, node=node, arrival=t,
            label=item.label.value, verdict=decision.verdict.value,
            pep_verdict=decision.pep_verdict.value if decision.pep_verdict else None,
            p_allow=decision.p_allow, gate_flagged=gate_flagged, model_version=version,
            staleness=staleness, latency_ms=elapsed, bytes=size, pdp_query=queried,
        )
        if decision.verdict.allows:
            session = state.pa.establish(
                request.request_id, request.subject, request.target, decision.verdict, done,
            )
            if session.audit_pending:
                state.audit_requests[session.session_id] = item
            self.env.process(self.expire(session.session_id))

    def expire(self, session_id: str):
        yield self.env.timeout(self.config.session_lifetime_ms)
        if self.state.pa.get(session_id).is_open:
            self.state.pa.teardown(session_id, self.env.now)

    def sync_loop(self):
        while True:
            yield self.env.timeout(self.config.sync_interval_ms)
            if self.env.now > self.config.duration_ms:
                return
            model_sync(self.state, self.env.now)

    def retrain_loop(self):
        while True:
            yield self.env.timeout(self.config.retrain_interval_ms)
            if self.env.now > self.config.duration_ms:
                return
            dataset = _training_dataset(self.state, self.bootstrap)
            net = self.state.publish(train_model(self.config, dataset))
            self.state.record(
                "retrain", self.env.now, version=net.version, rows=dataset.N,
                bic=net.metadata.bic, edges=len(net.dag.edges()),
            )
            logger.info(f"Retrained model v{net.version} on {dataset.N} rows at t={self.env.now:.0f} ms")


def _validate_scenario(topology: Topology, config: SimConfig) -> None:
    tiers = {node.id: node.tier for node in topology.nodes}
    for node in config.workload.rates:
        if node not in tiers:
            raise SimulationError(f"workload origin '{node}' is not a topology node")
        if tiers[node] == Tier.CLOUD:
            raise SimulationError(f"workload origin '{node}' is the cloud node; requests originate at PEPs")


def run_sim(topology: Topology, config: SimConfig) -> Tuple[Metrics, List[Dict[str, Any]]]:
    """
    Simulate one deployment.

    Args:
        topology: Continuum nodes and links with outage schedules
        config: Seed, mode, thresholds, intervals, workload and learning settings

    Returns:
        Tuple of (Metrics, event trace); the same inputs give an identical trace

    Raises:
        SimulationError: If workload origins do not fit the topology
    """
    _validate_scenario(topology, config)
    bootstrap = bootstrap_dataset(config)
    initial = train_model(config, bootstrap)
    state = ContinuumState(topology, config, initial)
    state.record(
        "start", 0.0, mode=config.mode.value, seed=config.seed, model_version=initial.version,
        nodes=sorted(state.peps), bootstrap_rows=bootstrap.N,
    )
    items = generate_workload(config)

    env = simpy.Environment()
    sim = _Simulator(env, state, bootstrap)
    env.process(sim.arrivals(items))
    env.process(sim.sync_loop())
    env.process(sim.retrain_loop())
    env.run()

    metrics = collect_metrics(state.trace)
    logger.info(
        f"{config.mode.value} run: {metrics.request_count} requests, "
        f"{metrics.pdp_query_count} PDP queries, {metrics.bytes_on_wire} bytes"
    )
    return metrics, state.trace


def collect_metrics(trace: Sequence[Dict[str, Any]]) -> Metrics:
    """Aggregate a run's metrics from its event trace."""
    decisions = [e for e in trace if e["type"] == "decision"]
    totals: Dict[str, int] = {}
    for e in decisions:
        totals[e["verdict"]] = totals.get(e["verdict"], 0) + 1

    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    labeled = 0
    for e in decisions:
        if e.get("label") is None:
            continue
        labeled += 1
        fraud = e["label"] == GroundTruth.FRAUDULENT.value
        if e["gate_flagged"]:
            counts["tp" if fraud else "fp"] += 1
        else:
            counts["fn" if fraud else "tn"] += 1
    confusion = ConfusionMatrix(**counts)

    staleness: Dict[int, int] = {}
    for e in decisions:
        staleness[e["staleness"]] = staleness.get(e["staleness"], 0) + 1

    latencies = np.array([e["latency_ms"] for e in decisions], dtype=np.float64)
    if latencies.size:
        p50, p95, p99 = (float(x) for x in np.percentile(latencies, [50, 95, 99]))
        mean = float(latencies.mean())
    else:
        p50 = p95 = p99 = mean = 0.0

    def count(verdicts: Sequence[Verdict]) -> int:
        return sum(totals.get(v.value, 0) for v in verdicts)

    return Metrics(
        request_count=len(decisions),
        labeled_count=labeled,
        verdict_totals=dict(sorted(totals.items())),
        pdp_query_count=sum(1 for e in decisions if e["pdp_query"]),
        blocked_local_count=count([Verdict.BLOCKED_LOCAL]),
        autonomous_count=count([Verdict.ALLOWED_AUTONOMOUS, Verdict.BLOCKED_AUTONOMOUS]),
        anomalous_count=count([Verdict.BLOCKED_ANOMALOUS]),
        connectivity_blocked_count=count([Verdict.BLOCKED_UNREACHABLE]),
        audit_count=sum(1 for e in trace if e["type"] == "audit"),
        revoked_count=sum(1 for e in trace if e["type"] == "revoke"),
        model_push_count=sum(1 for e in trace if e["type"] == "sync" and e["pushed"]),
        retrain_count=sum(1 for e in trace if e["type"] == "retrain"),
        latency_mean_ms=mean, latency_p50_ms=p50, latency_p95_ms=p95, latency_p99_ms=p99,
        bytes_on_wire=sum(int(e.get("bytes", 0)) for e in trace),
        confusion=confusion,
        staleness_histogram=dict(sorted(staleness.items())),
    )


def write_trace(trace: Sequence[Dict[str, Any]], path: PathLike) -> int:
    return write_jsonl(path, trace)


def replay_metrics(path: PathLike) -> Metrics:
    """Recompute metrics from a recorded trace file."""
    return collect_metrics(read_jsonl(path))


def metrics_json(metrics: Metrics) -> str:
    return canonical_dumps(metrics.model_dump(mode="json"), indent=2) + "\n"


def pdp_load_frame(trace: Sequence[Dict[str, Any]], bucket_ms: float) -> pd.DataFrame:
    decisions = pd.DataFrame(
        [(e["arrival"], e["pdp_query"]) for e in trace if e["type"] == "decision"],
        columns=["arrival", "pdp_query"],
    )
    if decisions.empty:
        return pd.DataFrame(columns=["bucket_start_ms", "requests", "pdp_queries"])
    decisions["bucket_start_ms"] = (decisions["arrival"] // bucket_ms) * bucket_ms
    frame = decisions.groupby("bucket_start_ms", sort=True).agg(
        requests=("pdp_query", "size"), pdp_queries=("pdp_query", "sum"),
    ).reset_index()
    frame["pdp_queries"] = frame["pdp_queries"].astype(int)
    return frame


def staleness_frame(metrics: Metrics) -> pd.DataFrame:
    return pd.DataFrame(
        sorted(metrics.staleness_histogram.items()), columns=["staleness", "decisions"]
    )


def confusion_frame(metrics: Metrics) -> pd.DataFrame:
    c = metrics.confusion
    return pd.DataFrame(
        [
            (GroundTruth.FRAUDULENT.value, "flagged", c.tp),
            (GroundTruth.FRAUDULENT.value, "passed", c.fn),
            (GroundTruth.BENIGN.value, "flagged", c.fp),
            (GroundTruth.BENIGN.value, "passed", c.tn),
        ],
        columns=["actual", "gate", "count"],
    )


def write_plot_data(trace: Sequence[Dict[str, Any]], out_dir: PathLike,
                    bucket_ms: float = 10_000.0) -> List[Path]:
    """Write PDP-load, staleness-histogram and confusion-matrix CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = collect_metrics(trace)
    frames = {
        "pdp_load.csv": pdp_load_frame(trace, bucket_ms),
        "staleness_histogram.csv": staleness_frame(metrics),
        "confusion_matrix.csv": confusion_frame(metrics),
    }
    paths = []
    for name, frame in frames.items():
        path = out / name
        frame.to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    logger.info(f"Wrote plot data to {out}")
    return paths


def random_outage_schedule(seed: int, links: Sequence[LinkSpec], duration_ms: float,
                           mean_gap_ms: float, mean_length_ms: float) -> List[LinkSpec]:
    """
    Seeded random outages as explicit interval lists.

    Gaps and outage lengths are exponential; intervals never overlap.
    """
    if mean_gap_ms <= 0 or mean_length_ms <= 0:
        raise SimulationError("outage gap and length means must be positive")
    rng = np.random.default_rng(derive_seed(seed, "outages"))
    scheduled = []
    for link in links:
        outages = list(link.outages)
        t = float(rng.exponential(mean_gap_ms))
        while t < duration_ms:
            end = min(duration_ms, t + float(rng.exponential(mean_length_ms)))
            if end > t:
                outages.append((t, end))
            t = end + float(rng.exponential(mean_gap_ms))
        scheduled.append(link.model_copy(update={"outages": sorted(outages)}))
    return scheduled


DEFAULT_POLICIES = PolicySet(rules=[
    PolicyRule(name="deny-suspicious-port", conditions={"source_port": "52415"}, effect=RuleEffect.DENY),
    PolicyRule(name="allow-https", conditions={"protocol": "HTTPS"}, effect=RuleEffect.ALLOW),
    PolicyRule(name="allow-ssh", conditions={"protocol": "SSH"}, effect=RuleEffect.ALLOW),
])


def default_topology(edge_nodes: int = 3) -> Topology:
    """Edge nodes behind one fog node, which uplinks to the cloud."""
    nodes = [NodeSpec(id=f"edge-{i}", tier=Tier.EDGE) for i in range(edge_nodes)]
    nodes += [NodeSpec(id="fog-0", tier=Tier.FOG), NodeSpec(id="cloud-0", tier=Tier.CLOUD)]
    links = [LinkSpec(a=f"edge-{i}", b="fog-0", latency_ms=5.0) for i in range(edge_nodes)]
    links.append(LinkSpec(a="fog-0", b="cloud-0", latency_ms=20.0))
    return Topology(nodes=nodes, links=links)


def default_scenario(seed: int = 0, mode: DeploymentMode = DeploymentMode.HYBRID) -> Scenario:
    """3 edge + 1 fog + 1 cloud node, about 10^4 requests, 30% fraud on source_port=52415."""
    topology = default_topology()
    workload = WorkloadSpec(
        rates={node: 10.0 for node in topology.nodes_in(Tier.EDGE)},
        synthetic=SyntheticConfig(fraud_fraction=0.3, fraud_pattern={"source_port": "52415"},
                                  fraud_strength=1.0),
    )
    config = SimConfig(
        seed=seed, duration_ms=333_334.0, mode=mode, thresholds=Thresholds(),
        workload=workload, policies=DEFAULT_POLICIES,
    )
    return Scenario(topology=topology, config=config)


def load_scenario(path: PathLike) -> Scenario:
    """
    Load a scenario file {topology, config}.

    Raises:
        SimulationError: If the file is unreadable or invalid
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return Scenario(**payload)
    except (OSError, json.JSONDecodeError, ValidationError, TypeError) as e:
        raise SimulationError(f"invalid scenario {path}: {e}") from e


def save_scenario(scenario: Scenario, path: PathLike) -> None:
    Path(path).write_text(canonical_dumps(scenario.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
