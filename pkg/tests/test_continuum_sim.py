"""
Tests for the continuum simulator: routing, workloads, model sync, runs and metrics.
"""
import numpy as np
import pytest

from ztlearn.models import DeploymentMode, GroundTruth, Tier, Verdict
from ztlearn.schemas import (
    LinkSpec, NodeSpec, PolicySet, SimConfig, SyntheticConfig, Thresholds, Topology, WorkloadSpec,
)
from ztlearn.services.continuum_sim import (
    ContinuumState, SimulationError, collect_metrics, default_scenario, derive_seed,
    generate_workload, load_scenario, metrics_json, model_sync, path_latency,
    random_outage_schedule, replay_metrics, run_sim, save_scenario, write_plot_data, write_trace,
)
from tests.factories import small_config, small_topology

FOREVER = [(0.0, 1e12)]


def decisions_of(trace):
    return [e for e in trace if e["type"] == "decision"]


@pytest.fixture(scope="module")
def hybrid_run():
    return run_sim(small_topology(), small_config())


@pytest.fixture(scope="module")
def partitioned_run():
    return run_sim(small_topology({"edge-0": FOREVER}), small_config())


class TestPathLatency:
    def test_sums_links(self):
        assert path_latency(small_topology(), "edge-0", "cloud-0", 0.0) == 25.0

    def test_same_node(self):
        assert path_latency(small_topology(), "cloud-0", "cloud-0", 0.0) == 0.0

    def test_outage_is_half_open(self):
        topology = small_topology({"fog-0": [(100.0, 200.0)]})
        assert path_latency(topology, "edge-0", "cloud-0", 99.9) == 25.0
        assert path_latency(topology, "edge-0", "cloud-0", 100.0) is None
        assert path_latency(topology, "edge-0", "cloud-0", 200.0) == 25.0

    def test_partition_only_affects_the_cut_node(self):
        topology = small_topology({"edge-0": FOREVER})
        assert path_latency(topology, "edge-0", "cloud-0", 5.0) is None
        assert path_latency(topology, "edge-1", "cloud-0", 5.0) == 25.0


class TestTopology:
    def test_needs_exactly_one_cloud(self):
        with pytest.raises(ValueError):
            Topology(nodes=[NodeSpec(id="a", tier=Tier.EDGE)])

    def test_must_be_connected(self):
        nodes = [NodeSpec(id="a", tier=Tier.EDGE), NodeSpec(id="c", tier=Tier.CLOUD)]
        with pytest.raises(ValueError):
            Topology(nodes=nodes)

    def test_empty_outage_interval_is_rejected(self):
        with pytest.raises(ValueError):
            LinkSpec(a="a", b="b", latency_ms=1.0, outages=[(5.0, 5.0)])

    def test_workload_from_cloud_node_is_rejected(self):
        config = small_config(workload=WorkloadSpec(rates={"cloud-0": 1.0}))
        with pytest.raises(SimulationError):
            run_sim(small_topology(), config)

    def test_workload_from_unknown_node_is_rejected(self):
        config = small_config(workload=WorkloadSpec(rates={"edge-9": 1.0}))
        with pytest.raises(SimulationError):
            run_sim(small_topology(), config)


class TestWorkload:
    def test_zero_rates_give_an_empty_stream(self):
        config = small_config(workload=WorkloadSpec(rates={"edge-0": 0.0, "edge-1": 0.0}))
        assert generate_workload(config) == []

    def test_full_fraud_fraction(self):
        workload = WorkloadSpec(rates={"edge-0": 5.0}, synthetic=SyntheticConfig(fraud_fraction=1.0))
        items = generate_workload(small_config(workload=workload))
        assert items
        assert {item.label for item in items} == {GroundTruth.FRAUDULENT}
        assert all(item.request.evidence["source_port"] == "52415" for item in items)

    def test_mean_inter_arrival_matches_rate(self):
        workload = WorkloadSpec(rates={"edge-0": 10.0})
        items = generate_workload(small_config(workload=workload, duration_ms=1_050_000.0))
        arrivals = np.array([item.request.arrival_time for item in items])
        assert len(arrivals) >= 10_000
        gaps = np.diff(np.concatenate([[0.0], arrivals]))
        assert abs(gaps.mean() - 100.0) <= 5.0

    def test_is_seeded(self):
        config = small_config()
        assert generate_workload(config) == generate_workload(config)
        assert generate_workload(config, seed=8) != generate_workload(config)

    def test_ordered_with_sequential_ids(self):
        items = generate_workload(small_config())
        times = [item.request.arrival_time for item in items]
        assert times == sorted(times)
        assert [item.request.request_id for item in items[:3]] == ["r000000", "r000001", "r000002"]
        assert all(t < 20_000.0 for t in times)

    def test_missing_attributes(self):
        workload = WorkloadSpec(rates={"edge-0": 5.0}, missing_rate=0.5)
        items = generate_workload(small_config(workload=workload))
        assert any(len(item.request.evidence) < len(item.record) for item in items)

    def test_derived_seeds_differ_per_stream(self):
        assert derive_seed(1, "workload") != derive_seed(1, "bootstrap")
        assert derive_seed(1, "workload") == derive_seed(1, "workload")


class TestModelSync:
    def state(self, trained_model, outages=None):
        return ContinuumState(small_topology(outages), small_config(), trained_model)

    def test_all_links_up(self, trained_model):
        state = self.state(trained_model)
        state.publish(trained_model)
        versions = model_sync(state, 1000.0)
        assert set(versions.values()) == {2}
        pushes = [e for e in state.trace if e["type"] == "sync" and e["pushed"]]
        assert len(pushes) == 3
        assert all(e["bytes"] > 0 for e in pushes)

    def test_partitioned_pep_falls_behind(self, trained_model):
        state = self.state(trained_model, {"edge-0": FOREVER})
        for i in range(3):
            state.publish(trained_model)
            model_sync(state, 1000.0 * (i + 1))
        assert state.staleness("edge-0") == 3
        assert state.peps["edge-0"].version == 1
        assert state.peps["edge-1"].version == 4
        last = [e for e in state.trace if e["type"] == "sync" and e["node"] == "edge-0"][-1]
        assert last["staleness"] == 3
        assert not last["reachable"]

    def test_current_peps_receive_nothing(self, trained_model):
        state = self.state(trained_model)
        model_sync(state, 1000.0)
        assert not any(e["pushed"] for e in state.trace)

    def test_cloud_mode_does_not_push(self, trained_model):
        state = ContinuumState(small_topology(), small_config(mode=DeploymentMode.CLOUD), trained_model)
        state.publish(trained_model)
        assert set(model_sync(state, 1000.0).values()) == {1}
        assert state.trace == []

    def test_denied_audit_is_traced_from_the_ledger(self, trained_model):
        config = small_config(policies=PolicySet())
        state = ContinuumState(small_topology(), config, trained_model)
        item = next(i for i in generate_workload(config) if i.request.origin == "edge-0")
        session = state.pa.establish(
            item.request.request_id, item.request.subject, item.request.target,
            Verdict.ALLOWED_AUTONOMOUS, 10.0,
        )
        state.audit_requests[session.session_id] = item
        model_sync(state, 1000.0)
        revokes = [e for e in state.trace if e["type"] == "revoke"]
        assert [(e["session_id"], e["reason"], e["node"], e["time"]) for e in revokes] == [
            (session.session_id, "audit_denied", "edge-0", 1000.0),
        ]
        assert state.ledger_seen == len(state.pa.events_since())
        assert not state.pa.get(session.session_id).is_open


class TestRun:
    def test_is_deterministic(self, hybrid_run, tmp_path):
        metrics, trace = run_sim(small_topology(), small_config())
        assert metrics == hybrid_run[0]
        assert trace == hybrid_run[1]
        write_trace(trace, tmp_path / "a.jsonl")
        write_trace(hybrid_run[1], tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_replay_reproduces_metrics(self, hybrid_run, tmp_path):
        metrics, trace = hybrid_run
        path = tmp_path / "trace.jsonl"
        write_trace(trace, path)
        assert replay_metrics(path) == metrics
        assert metrics_json(replay_metrics(path)) == metrics_json(metrics)

    def test_every_request_is_decided_once(self, hybrid_run):
        metrics, trace = hybrid_run
        ids = [e["request_id"] for e in decisions_of(trace)]
        expected = [item.request.request_id for item in generate_workload(small_config())]
        assert sorted(ids) == sorted(expected)
        assert len(set(ids)) == len(ids)
        assert sum(metrics.verdict_totals.values()) == metrics.request_count == len(expected)

    def test_terminal_verdicts_only(self, hybrid_run):
        _, trace = hybrid_run
        assert all(e["verdict"] != Verdict.FORWARDED_TO_PDP.value for e in decisions_of(trace))

    def test_pdp_queries_equal_forwards(self, hybrid_run):
        metrics, trace = hybrid_run
        forwards = sum(e["pep_verdict"] == Verdict.FORWARDED_TO_PDP.value for e in decisions_of(trace))
        assert metrics.pdp_query_count == forwards

    def test_confusion_covers_every_labeled_request(self, hybrid_run):
        metrics, _ = hybrid_run
        assert metrics.confusion.total == metrics.labeled_count == metrics.request_count

    def test_bytes_are_the_sum_of_messages(self, hybrid_run):
        metrics, trace = hybrid_run
        sizes = small_config().sizes
        per_query = sizes.request_bytes + sizes.verdict_bytes
        pushes = sum(e["bytes"] for e in trace if e["type"] == "sync")
        audits = sum(e["bytes"] for e in trace if e["type"] == "audit")
        assert metrics.bytes_on_wire == metrics.pdp_query_count * per_query + pushes + audits

    def test_retrains_and_pushes(self, hybrid_run):
        metrics, trace = hybrid_run
        assert metrics.retrain_count == 2
        versions = [e["version"] for e in trace if e["type"] == "retrain"]
        assert versions == [2, 3]
        assert metrics.model_push_count > 0

    def test_partitioned_pep_keeps_serving_with_its_old_model(self, partitioned_run):
        metrics, trace = partitioned_run
        edge0 = [e for e in decisions_of(trace) if e["node"] == "edge-0"]
        assert edge0
        assert {e["model_version"] for e in edge0} == {1}
        assert max(e["staleness"] for e in edge0) >= 1
        assert all(not e["pdp_query"] for e in edge0)
        assert all(
            e["verdict"] in (Verdict.ALLOWED_AUTONOMOUS.value, Verdict.BLOCKED_AUTONOMOUS.value,
                             Verdict.BLOCKED_LOCAL.value, Verdict.BLOCKED_ANOMALOUS.value)
            for e in edge0
        )
        late = [e for e in decisions_of(trace) if e["node"] == "edge-1" and e["arrival"] > 16_000.0]
        assert all(e["model_version"] >= 2 for e in late)

    def test_audits_run_once_the_partition_heals(self):
        topology = small_topology({"edge-0": [(0.0, 12_000.0)]})
        metrics, trace = run_sim(topology, small_config())
        autonomous_allows = [
            e for e in decisions_of(trace) if e["verdict"] == Verdict.ALLOWED_AUTONOMOUS.value
        ]
        assert autonomous_allows
        assert metrics.audit_count == len(autonomous_allows)
        assert all(e["time"] >= 12_000.0 for e in trace if e["type"] == "audit")

    def test_cloud_mode_fails_closed_under_partition(self):
        config = small_config(mode=DeploymentMode.CLOUD)
        metrics, trace = run_sim(small_topology({"edge-0": FOREVER}), config)
        edge0 = [e for e in decisions_of(trace) if e["node"] == "edge-0"]
        assert edge0
        assert all(e["verdict"] == Verdict.BLOCKED_UNREACHABLE.value for e in edge0)
        assert metrics.connectivity_blocked_count == len(edge0)
        assert metrics.pdp_query_count == metrics.request_count - len(edge0)

    def test_cloud_mode_queries_pdp_for_every_request(self):
        metrics, trace = run_sim(small_topology(), small_config(mode=DeploymentMode.CLOUD))
        assert metrics.pdp_query_count == metrics.request_count
        assert metrics.blocked_local_count == 0
        assert metrics.model_push_count == 0

    @pytest.mark.parametrize("theta_block,theta_auto,allowed", [(0.0, 0.0, True), (0.5, 1.0, False)])
    def test_offline_boundary_thresholds(self, theta_block, theta_auto, allowed):
        topology = small_topology({"edge-0": FOREVER, "edge-1": FOREVER, "fog-0": FOREVER})
        config = small_config(thresholds=Thresholds(theta_block=theta_block, theta_auto=theta_auto))
        metrics, trace = run_sim(topology, config)
        verdicts = {e["verdict"] for e in decisions_of(trace)}
        if allowed:
            assert verdicts == {Verdict.ALLOWED_AUTONOMOUS.value}
        else:
            assert not any(Verdict(v).allows for v in verdicts)
        assert metrics.pdp_query_count == 0

    def test_plot_data(self, hybrid_run, tmp_path):
        paths = write_plot_data(hybrid_run[1], tmp_path / "plots", bucket_ms=5_000.0)
        names = sorted(path.name for path in paths)
        assert names == ["confusion_matrix.csv", "pdp_load.csv", "staleness_histogram.csv"]
        load = (tmp_path / "plots" / "pdp_load.csv").read_text(encoding="utf-8").splitlines()
        assert load[0] == "bucket_start_ms,requests,pdp_queries"
        assert len(load) == 1 + 4

    def test_empty_trace_metrics(self):
        metrics = collect_metrics([])
        assert metrics.request_count == 0
        assert metrics.latency_p99_ms == 0.0


class TestScenarios:
    def test_round_trip(self, tmp_path):
        scenario = default_scenario(seed=3, mode=DeploymentMode.CLOUD)
        path = tmp_path / "scenario.json"
        save_scenario(scenario, path)
        assert load_scenario(path) == scenario

    def test_invalid_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text('{"topology": {"nodes": []}}', encoding="utf-8")
        with pytest.raises(SimulationError):
            load_scenario(path)

    def test_random_outages_are_seeded_and_disjoint(self):
        links = small_topology().links
        first = random_outage_schedule(4, links, 60_000.0, 10_000.0, 2_000.0)
        assert first == random_outage_schedule(4, links, 60_000.0, 10_000.0, 2_000.0)
        for link in first:
            for (s1, e1), (s2, e2) in zip(link.outages, link.outages[1:]):
                assert e1 <= s2
            assert all(0.0 <= s < e <= 60_000.0 for s, e in link.outages)

    def test_random_outages_need_positive_means(self):
        with pytest.raises(SimulationError):
            random_outage_schedule(0, small_topology().links, 1000.0, 0.0, 10.0)


@pytest.mark.slow
class TestPairedDefaultScenario:
    @pytest.fixture(scope="class")
    def paired(self):
        hybrid = default_scenario(seed=0, mode=DeploymentMode.HYBRID)
        cloud = default_scenario(seed=0, mode=DeploymentMode.CLOUD)
        return run_sim(hybrid.topology, hybrid.config)[0], run_sim(cloud.topology, cloud.config)[0]

    def test_workload_size(self, paired):
        hybrid, cloud = paired
        assert hybrid.request_count == cloud.request_count
        assert 9_000 <= hybrid.request_count <= 11_000

    def test_gate_catches_the_planted_pattern(self, paired):
        hybrid, cloud = paired
        assert hybrid.confusion.recall >= 0.9
        assert cloud.confusion.recall >= 0.9

    def test_hybrid_offloads_the_pdp(self, paired):
        hybrid, cloud = paired
        assert hybrid.blocked_local_count > 0
        assert hybrid.pdp_query_count < cloud.pdp_query_count
        assert hybrid.bytes_on_wire < cloud.bytes_on_wire
