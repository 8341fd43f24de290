"""
Bayesian-network operations: topological order, joint probability and the
canonical JSON model format used to distribute models across the continuum.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import networkx as nx
import numpy as np

from ztlearn.models import (
    ROW_SUM_TOLERANCE, AcyclicityError, BayesianNetwork, Cpt, Dag, ModelError,
    ModelMetadata, ModelValidationError, SchemaLookupError, VariableSchema,
)
from ztlearn.utils.jsonl import canonical_dumps

logger = logging.getLogger(__name__)

__all__ = [
    "AcyclicityError", "ModelError", "ModelValidationError",
    "topological_order", "joint_probability", "serialize", "deserialize",
    "save_model", "load_model",
]


def topological_order(dag: Dag) -> List[int]:
    """
    Order nodes so every node follows all of its parents.

    Ties are broken by the smallest node id.

    Raises:
        AcyclicityError: If the graph has a cycle
    """
    graph = dag.to_networkx()
    try:
        return list(nx.lexicographical_topological_sort(graph))
    except nx.NetworkXUnfeasible:
        cycle = nx.find_cycle(graph)
        raise AcyclicityError([u for u, _ in cycle]) from None


def joint_probability(net: BayesianNetwork, assignment: Sequence[int]) -> float:
    """
    Product of CPT entries for a full index assignment.

    Raises:
        ModelError: If the assignment does not cover every variable
    """
    if len(assignment) != len(net.schema):
        raise ModelError(
            f"assignment covers {len(assignment)} of {len(net.schema)} variables"
        )
    probability = 1.0
    for cpt in net.cpts:
        row = cpt.row_index([assignment[p] for p in cpt.parents])
        probability *= float(cpt.table[row, assignment[cpt.variable]])
    return probability


def to_document(net: BayesianNetwork) -> Dict[str, Any]:
    names = net.schema.names
    return {
        "schema": net.schema.to_dict(),
        "edges": [[names[u], names[v]] for u, v in net.dag.edges()],
        "cpts": [
            {
                "variable": names[cpt.variable],
                "parents": [names[p] for p in cpt.parents],
                "table": [[float(x) for x in row] for row in cpt.table],
            }
            for cpt in net.cpts
        ],
        "edge_weights": [
            {"source": names[u], "target": names[v], "weight": float(w)}
            for (u, v), w in sorted(net.edge_weights.items())
        ],
        "metadata": net.metadata.to_dict(),
    }


def serialize(net: BayesianNetwork) -> str:
    """Canonical model JSON: sorted keys, fixed indentation, round-trip float repr."""
    return canonical_dumps(to_document(net), indent=2) + "\n"


def _validate_table(name: str, table: List[List[float]]) -> np.ndarray:
    array = np.array(table, dtype=np.float64)
    if array.ndim != 2:
        raise ModelValidationError(f"CPT of '{name}' is not a table", variable=name)
    for r, row in enumerate(array):
        if np.any(row < 0.0) or np.any(row > 1.0):
            raise ModelValidationError(
                f"CPT of '{name}' row {r} has entries outside [0, 1]", variable=name, row=r
            )
        total = math.fsum(row)
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            raise ModelValidationError(
                f"CPT of '{name}' row {r} sums to {total!r}", variable=name, row=r
            )
    return array


def from_document(doc: Dict[str, Any]) -> BayesianNetwork:
    try:
        schema = VariableSchema.from_dict(doc["schema"])
        names = schema.names
        dag = Dag.from_edges(
            len(schema), [(schema.index_of(u), schema.index_of(v)) for u, v in doc["edges"]]
        )
        cards = schema.cardinalities
        cpts_by_var = {}
        for item in doc["cpts"]:
            name = item["variable"]
            i = schema.index_of(name)
            parents = tuple(schema.index_of(p) for p in item["parents"])
            table = _validate_table(name, item["table"])
            cpts_by_var[i] = Cpt(i, parents, tuple(cards[p] for p in parents), table)
        missing = [names[i] for i in range(len(schema)) if i not in cpts_by_var]
        if missing:
            raise ModelValidationError(f"no CPT for '{missing[0]}'", variable=missing[0])
        weights = {
            (schema.index_of(w["source"]), schema.index_of(w["target"])): float(w["weight"])
            for w in doc.get("edge_weights", [])
        }
        metadata = ModelMetadata.from_dict(doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError, SchemaLookupError) as e:
        raise ModelValidationError(f"malformed model document: {e}") from e
    return BayesianNetwork(
        schema, dag, tuple(cpts_by_var[i] for i in range(len(schema))), weights, metadata
    )


def deserialize(text: Union[str, bytes]) -> BayesianNetwork:
    """
    Parse and validate a model document.

    Raises:
        ModelValidationError: If a CPT row does not sum to 1 or the document is malformed
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"model document is not JSON: {e}") from e
    return from_document(doc)


def save_model(net: BayesianNetwork, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize(net), encoding="utf-8")
    logger.info(f"Saved model v{net.version} to {path}")


def load_model(path: Union[str, Path]) -> BayesianNetwork:
    net = deserialize(Path(path).read_text(encoding="utf-8"))
    logger.info(f"Loaded model v{net.version} ({len(net.schema)} variables) from {path}")
    return net
