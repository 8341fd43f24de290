"""
Exact inference over discrete Bayesian networks.

Conditional queries use variable elimination over numpy factors with a
min-degree elimination order; enumerate_query sums the full joint and serves
as the reference for small networks. Effect tables report P(action=allowed)
per attribute value, conditionally or under intervention.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from ztlearn.config import get_settings
from ztlearn.models import (
    ACTION, ALLOWED, BayesianNetwork, Cpt, Dag, EffectMode, SchemaLookupError,
    VariableSchema, ZtError,
)
from ztlearn.schemas import EffectEntry, EffectTable
from ztlearn.utils.jsonl import canonical_dumps

logger = logging.getLogger(__name__)
settings = get_settings()

Evidence = Mapping[str, str]
EFFECT_COLUMNS = ["attribute", "value", "p_allowed", "mode"]


class InferenceError(ZtError):
    """Exception raised when a query cannot be answered."""
    pass


class ZeroEvidenceError(InferenceError):
    """Evidence has probability zero under the model."""

    def __init__(self, evidence: Mapping[str, str]):
        self.evidence = dict(evidence)
        super().__init__(f"evidence {self.evidence} has probability 0 under the model")


class EvidenceError(InferenceError):
    """Evidence names an unknown variable or the query target."""

    def __init__(self, message: str, variable: Optional[str] = None):
        self.variable = variable
        super().__init__(message)


class UnknownValueError(EvidenceError):
    """Evidence value outside the variable's categories and no reserved slot to absorb it."""

    def __init__(self, variable: str, value: str):
        self.value = value
        super().__init__(f"value '{value}' is not a category of '{variable}'", variable=variable)


@dataclass(frozen=True)
class Factor:
    """Non-negative table over an ordered tuple of variable ids (one numpy axis each)."""
    variables: Tuple[int, ...]
    values: np.ndarray

    @classmethod
    def from_cpt(cls, cpt: Cpt) -> "Factor":
        return cls(cpt.parents + (cpt.variable,), cpt.as_factor_array())

    @property
    def cards(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def _aligned(self, variables: Sequence[int]) -> np.ndarray:
        """View of the values broadcastable against the given axis order."""
        own = [v for v in variables if v in self.variables]
        values = np.transpose(self.values, [self.variables.index(v) for v in own])
        shape = [self.values.shape[self.variables.index(v)] if v in self.variables else 1
                 for v in variables]
        return values.reshape(shape)

    def product(self, other: "Factor") -> "Factor":
        variables = self.variables + tuple(v for v in other.variables if v not in self.variables)
        return Factor(variables, self._aligned(variables) * other._aligned(variables))

    def marginalize(self, variable: int) -> "Factor":
        axis = self.variables.index(variable)
        return Factor(self.variables[:axis] + self.variables[axis + 1:], self.values.sum(axis=axis))

    def reduce(self, variable: int, value: int) -> "Factor":
        if variable not in self.variables:
            return self
        axis = self.variables.index(variable)
        return Factor(
            self.variables[:axis] + self.variables[axis + 1:],
            np.take(self.values, value, axis=axis),
        )

    @property
    def is_constant(self) -> bool:
        return not self.variables


def resolve_evidence(schema: VariableSchema, evidence: Evidence,
                     target: Optional[str] = None) -> Dict[int, int]:
    """
    Validate evidence and encode it as {variable id: category index}.

    Values outside a variable's categories map to the reserved slot when the
    schema carries one.

    Raises:
        EvidenceError: If a variable is unknown or is the query target
        UnknownValueError: If a value is unknown and there is no reserved slot
    """
    resolved = {}
    for name, value in evidence.items():
        if name == target:
            raise EvidenceError(f"target '{name}' cannot appear in its own evidence", variable=name)
        if name not in schema:
            raise EvidenceError(f"unknown evidence variable '{name}'", variable=name)
        try:
            resolved[schema.index_of(name)] = schema.encode(name, value)
        except SchemaLookupError:
            raise UnknownValueError(name, str(value)) from None
    return resolved


def _relevant_nodes(dag: Dag, nodes: Sequence[int]) -> set:
    # Descendants outside the query and evidence sum out to 1
    graph = dag.to_networkx()
    relevant = set(nodes)
    for node in nodes:
        relevant |= nx.ancestors(graph, node)
    return relevant


def _min_degree_order(factors: List[Factor], hidden: set) -> List[int]:
    scopes = [set(f.variables) for f in factors]
    order = []
    remaining = set(hidden)
    while remaining:
        def degree(v: int) -> int:
            neighbours = set()
            for scope in scopes:
                if v in scope:
                    neighbours |= scope
            neighbours.discard(v)
            return len(neighbours)

        chosen = min(remaining, key=lambda v: (degree(v), v))
        merged = set()
        kept = []
        for scope in scopes:
            if chosen in scope:
                merged |= scope
            else:
                kept.append(scope)
        merged.discard(chosen)
        scopes = kept + [merged]
        remaining.discard(chosen)
        order.append(chosen)
    return order


def _multiply(factors: Sequence[Factor]) -> Factor:
    result = factors[0]
    for factor in factors[1:]:
        result = result.product(factor)
    return result


def query(net: BayesianNetwork, target: str, evidence: Optional[Evidence] = None) -> np.ndarray:
    """
    Exact posterior P(target | evidence) by variable elimination.

    Args:
        net: Network to query
        target: Name of the query variable
        evidence: Partial assignment {variable: category label}, possibly empty

    Returns:
        np.ndarray: Distribution over the target's categories

    Raises:
        ZeroEvidenceError: If the evidence has probability zero
        EvidenceError: If the evidence is invalid for this network
    """
    evidence = dict(evidence or {})
    t = net.index_of(target)
    observed = resolve_evidence(net.schema, evidence, target)
    relevant = _relevant_nodes(net.dag, [t, *observed])

    factors = []
    for cpt in net.cpts:
        if cpt.variable not in relevant:
            continue
        factor = Factor.from_cpt(cpt)
        for var, value in observed.items():
            factor = factor.reduce(var, value)
        if factor.is_constant:
            # Constants cancel under normalisation unless they are zero
            if float(factor.values) == 0.0:
                raise ZeroEvidenceError(evidence)
            continue
        factors.append(factor)

    hidden = relevant - {t} - set(observed)
    for var in _min_degree_order(factors, hidden):
        involved = [f for f in factors if var in f.variables]
        if not involved:
            continue
        factors = [f for f in factors if var not in f.variables]
        factors.append(_multiply(involved).marginalize(var))

    joint = _multiply(factors)
    for var in joint.variables:
        if var != t:
            joint = joint.marginalize(var)
    values = joint.values.reshape(-1)
    total = math.fsum(values)
    if total <= 0.0:
        raise ZeroEvidenceError(evidence)
    return values / total


def enumerate_query(net: BayesianNetwork, target: str, evidence: Optional[Evidence] = None,
                    limit: Optional[int] = None) -> np.ndarray:
    """
    Posterior by summing the full joint over every assignment consistent with the evidence.

    Raises:
        InferenceError: If the joint space exceeds the enumeration limit
        ZeroEvidenceError: If the consistent assignments carry no mass
    """
    evidence = dict(evidence or {})
    limit = settings.enumeration_limit if limit is None else limit
    cards = net.schema.cardinalities
    size = math.prod(cards)
    if size > limit:
        raise InferenceError(f"joint space of {size} assignments exceeds the limit of {limit}")
    t = net.index_of(target)
    observed = resolve_evidence(net.schema, evidence, target)

    n = len(cards)
    joint = np.ones(cards, dtype=np.float64)
    for cpt in net.cpts:
        axes = cpt.parents + (cpt.variable,)
        order = np.argsort(axes)
        table = np.transpose(cpt.as_factor_array(), order)
        shape = [1] * n
        for axis in axes:
            shape[axis] = cards[axis]
        joint = joint * table.reshape(shape)

    index = tuple(observed.get(i, slice(None)) for i in range(n))
    consistent = joint[index]
    kept_axes = [i for i in range(n) if i not in observed]
    marginal = consistent.sum(axis=tuple(a for a, i in enumerate(kept_axes) if i != t))
    total = math.fsum(marginal.reshape(-1))
    if total <= 0.0:
        raise ZeroEvidenceError(evidence)
    return marginal / total


def allowed_index(net: BayesianNetwork) -> int:
    return net.schema.encode(ACTION, ALLOWED)


def mutilate(net: BayesianNetwork, attribute: str, value: str) -> BayesianNetwork:
    """
    Network under do(attribute = value).

    The attribute loses its parents and its CPT becomes a point mass on the value.
    """
    i = net.index_of(attribute)
    clamped = net.schema.encode(attribute, value)
    parents = list(net.dag.parents)
    parents[i] = ()
    dag = Dag(tuple(parents))
    table = np.zeros((1, net.schema.cardinalities[i]))
    table[0, clamped] = 1.0
    cpts = list(net.cpts)
    cpts[i] = Cpt(i, (), (), table)
    weights = {edge: w for edge, w in net.edge_weights.items() if edge[1] != i}
    return BayesianNetwork(net.schema, dag, tuple(cpts), weights, net.metadata)


def _check_attribute(net: BayesianNetwork, attribute: str) -> None:
    if attribute == ACTION:
        raise InferenceError("effect of the action variable on itself is undefined")
    net.index_of(attribute)


def do_effect(net: BayesianNetwork, attribute: str, value: str) -> float:
    """P(action = allowed | do(attribute = value)) by truncated factorisation."""
    _check_attribute(net, attribute)
    intervened = mutilate(net, attribute, value)
    return float(query(intervened, ACTION, {attribute: value})[allowed_index(net)])


def causal_effect(net: BayesianNetwork, attribute: str,
                  mode: Union[EffectMode, str] = EffectMode.CONDITIONAL) -> EffectTable:
    """
    P(action = allowed) for every observed value of one attribute, sorted by value.

    Values whose evidence has probability zero are reported with p_allowed = None.
    """
    mode = EffectMode(mode)
    _check_attribute(net, attribute)
    allowed = allowed_index(net)
    entries = []
    for value in sorted(net.schema.variable(attribute).observed_categories):
        try:
            if mode == EffectMode.INTERVENTIONAL:
                p = do_effect(net, attribute, value)
            else:
                p = float(query(net, ACTION, {attribute: value})[allowed])
        except ZeroEvidenceError:
            logger.warning(f"Effect of {attribute}={value} is undefined (zero-probability evidence)")
            p = None
        entries.append(EffectEntry(value=value, p_allowed=p))
    return EffectTable(attribute=attribute, mode=mode, entries=entries)


def effect_summary(net: BayesianNetwork,
                   mode: Union[EffectMode, str] = EffectMode.CONDITIONAL) -> List[EffectTable]:
    return [causal_effect(net, name, mode) for name in net.schema.names if name != ACTION]


def effect_frame(tables: Sequence[EffectTable]) -> pd.DataFrame:
    rows = [
        {"attribute": table.attribute, "value": entry.value,
         "p_allowed": entry.p_allowed, "mode": table.mode.value}
        for table in tables for entry in table.entries
    ]
    return pd.DataFrame(rows, columns=EFFECT_COLUMNS)


def write_effect_csv(tables: Sequence[EffectTable], path: Union[str, Path, None] = None) -> str:
    """Write effect tables as attribute,value,p_allowed,mode CSV; returns the text."""
    text = effect_frame(tables).to_csv(index=False, lineterminator="\n")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def effect_tables_to_json(tables: Sequence[EffectTable]) -> str:
    return canonical_dumps([table.model_dump(mode="json") for table in tables], indent=2) + "\n"
