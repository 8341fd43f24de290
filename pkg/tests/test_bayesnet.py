"""
Tests for DAG/CPT invariants, joint probability and the model JSON format.
"""
import itertools
import json
import math

import numpy as np
import pytest

from ztlearn.models import (
    OTHER_LABEL, AcyclicityError, BayesianNetwork, Cpt, Dag, ModelError, ModelValidationError,
    SchemaLookupError, Variable, VariableSchema,
)
from ztlearn.services.bayesnet import (
    deserialize, joint_probability, load_model, save_model, serialize, topological_order,
)
from tests.factories import make_schema, random_network


class TestDag:
    def test_rejects_cycle(self):
        with pytest.raises(AcyclicityError):
            Dag.from_edges(3, [(0, 1), (1, 2), (2, 0)])

    def test_rejects_self_loop(self):
        with pytest.raises(AcyclicityError):
            Dag(((0,), ()))

    def test_parents_are_canonically_sorted(self):
        dag = Dag.from_edges(3, [(2, 0), (1, 0)])
        assert dag.parents[0] == (1, 2)
        assert dag.edges() == [(1, 0), (2, 0)]

    def test_edge_moves(self):
        dag = Dag.empty(3).add_edge(0, 1).add_edge(1, 2)
        assert dag.has_edge(0, 1)
        assert not dag.remove_edge(0, 1).has_edge(0, 1)
        assert dag.reverse_edge(0, 1).has_edge(1, 0)
        with pytest.raises(AcyclicityError):
            dag.add_edge(2, 0)

    def test_topological_order_breaks_ties_by_id(self):
        dag = Dag.from_edges(4, [(3, 0), (2, 1)])
        assert topological_order(dag) == [2, 1, 3, 0]

    @pytest.mark.parametrize("seed", range(20))
    def test_topological_order_puts_parents_first(self, seed):
        net = random_network(seed)
        order = topological_order(net.dag)
        position = {node: i for i, node in enumerate(order)}
        for u, v in net.dag.edges():
            assert position[u] < position[v]


class TestSchema:
    def test_encode_decode(self):
        schema = make_schema([3])
        assert schema.encode("v0", "c2") == 2
        assert schema.decode("v0", 1) == "c1"

    def test_unknown_value_without_reserved_slot(self):
        with pytest.raises(SchemaLookupError):
            make_schema([2]).encode("v0", "zzz")

    def test_unknown_value_maps_to_reserved_slot(self):
        schema = make_schema([2]).with_other()
        assert schema.variable("v0").categories[-1] == OTHER_LABEL
        assert schema.encode("v0", "zzz") == 2

    def test_with_other_respects_exclusions(self):
        schema = make_schema([2, 2]).with_other(exclude=("v1",))
        assert schema.cardinalities == (3, 2)

    def test_duplicate_categories_rejected(self):
        with pytest.raises(SchemaLookupError):
            Variable("x", ("a", "a"))


class TestCpt:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ModelValidationError) as excinfo:
            Cpt(0, (), (), np.array([[0.5, 0.6]]))
        assert excinfo.value.row == 0

    def test_shape_must_match_parent_cardinalities(self):
        with pytest.raises(ModelValidationError):
            Cpt(1, (0,), (3,), np.full((2, 2), 0.5))

    def test_row_index_is_mixed_radix_first_parent_most_significant(self):
        cpt = Cpt(2, (0, 1), (2, 3), np.full((6, 2), 0.5))
        assert cpt.row_index([1, 2]) == 5
        assert cpt.row_index([1, 0]) == 3


@pytest.mark.parametrize("seed", range(30))
def test_joint_probability_sums_to_one(seed):
    net = random_network(seed, max_card=3)
    total = math.fsum(
        joint_probability(net, assignment)
        for assignment in itertools.product(*(range(c) for c in net.schema.cardinalities))
    )
    assert abs(total - 1.0) < 1e-9


def test_joint_probability_needs_a_full_assignment():
    net = random_network(0, n_vars=3)
    with pytest.raises(ModelError):
        joint_probability(net, [0, 0])
    with pytest.raises(ModelError):
        joint_probability(net, [0, 0, 0, 0])


@pytest.mark.parametrize("seed", range(50))
def test_serialize_round_trips_bit_exactly(seed):
    net = random_network(seed)
    text = serialize(net)
    restored = deserialize(text)
    assert restored == net
    assert serialize(restored) == text
    for a, b in zip(net.cpts, restored.cpts):
        assert a.table.tobytes() == b.table.tobytes()


def test_round_trip_keeps_metadata_and_weights(trained_model, tmp_path):
    path = tmp_path / "model.json"
    save_model(trained_model, path)
    restored = load_model(path)
    assert restored == trained_model
    assert restored.edge_weights == trained_model.edge_weights
    assert restored.metadata.bic == trained_model.metadata.bic


def test_tampered_row_names_variable_and_row():
    net = random_network(4, n_vars=3)
    doc = json.loads(serialize(net))
    doc["cpts"][1]["table"][0][0] += 0.25
    with pytest.raises(ModelValidationError) as excinfo:
        deserialize(json.dumps(doc))
    assert excinfo.value.variable == doc["cpts"][1]["variable"]
    assert excinfo.value.row == 0


@pytest.mark.parametrize("text", ["not json", "{}", '{"schema": [], "edges": [["a", "b"]], "cpts": []}'])
def test_malformed_documents(text):
    with pytest.raises(ModelValidationError):
        deserialize(text)


def test_network_rejects_cpt_parent_mismatch():
    schema = make_schema([2, 2])
    dag = Dag.from_edges(2, [(0, 1)])
    cpts = (Cpt(0, (), (), np.array([[0.5, 0.5]])), Cpt(1, (), (), np.array([[0.5, 0.5]])))
    with pytest.raises(ModelValidationError):
        BayesianNetwork(schema, dag, cpts)


def test_markov_blanket():
    schema = VariableSchema(tuple(Variable(n, ("a", "b")) for n in ["a", "b", "c", "d"]))
    dag = Dag.from_edges(4, [(0, 1), (2, 1), (1, 3)])
    uniform = lambda i, ps: Cpt(i, ps, (2,) * len(ps), np.full((2 ** len(ps), 2), 0.5))
    net = BayesianNetwork(schema, dag, tuple(uniform(i, dag.parents[i]) for i in range(4)))
    assert net.markov_blanket("a") == ["b", "c"]
    assert net.markov_blanket("b") == ["a", "c", "d"]
