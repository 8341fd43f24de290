"""
Core domain types for the learning-driven zero-trust engine.
Categorical schemas, index-encoded activity-log datasets, DAGs, CPTs and
Bayesian networks. Every type here is immutable after construction.
"""
import enum
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

# Activity-log attributes in canonical CSV order
LOG_ATTRIBUTES: Tuple[str, ...] = (
    "timestamp", "source_ip", "dest_ip", "source_port", "dest_port",
    "protocol", "user_id", "application", "action",
)
ACTION = "action"
TIMESTAMP = "timestamp"
ALLOWED = "allowed"
BLOCKED = "blocked"
# Fixed order: index 1 means allowed
ACTION_CATEGORIES: Tuple[str, ...] = (BLOCKED, ALLOWED)
OTHER_LABEL = "__other__"
ROW_SUM_TOLERANCE = 1e-9


class ZtError(Exception):
    """Base class for all engine errors."""
    pass


class SchemaLookupError(ZtError):
    """Raised when a variable or category is not part of a schema."""

    def __init__(self, message: str, variable: Optional[str] = None, value: Optional[str] = None):
        self.variable = variable
        self.value = value
        super().__init__(message)


class ModelError(ZtError):
    """Raised when a DAG or Bayesian network violates its invariants."""
    pass


class AcyclicityError(ModelError):
    """Raised when an operation would produce a cyclic graph."""

    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(node) for node in self.cycle + self.cycle[:1])
        super().__init__(f"graph is not acyclic, cycle: {path}")


class ModelValidationError(ModelError):
    """Raised when a CPT or model document is inconsistent."""

    def __init__(self, message: str, variable: Optional[str] = None, row: Optional[int] = None):
        self.variable = variable
        self.row = row
        super().__init__(message)


class Verdict(str, enum.Enum):
    """Terminal and intermediate outcomes of an access request."""
    BLOCKED_LOCAL = "BlockedLocal"
    FORWARDED_TO_PDP = "ForwardedToPdp"
    ALLOWED_AUTONOMOUS = "AllowedAutonomous"
    BLOCKED_AUTONOMOUS = "BlockedAutonomous"
    PDP_ALLOWED = "PdpAllowed"
    PDP_DENIED = "PdpDenied"
    BLOCKED_ANOMALOUS = "BlockedAnomalous"
    BLOCKED_UNREACHABLE = "BlockedUnreachable"

    @property
    def allows(self) -> bool:
        return self in (Verdict.PDP_ALLOWED, Verdict.ALLOWED_AUTONOMOUS)


class RuleEffect(str, enum.Enum):
    """Effect of a matching policy rule."""
    ALLOW = "allow"
    DENY = "deny"


class Tier(str, enum.Enum):
    """Continuum tier of a topology node."""
    EDGE = "edge"
    FOG = "fog"
    CLOUD = "cloud"


class DeploymentMode(str, enum.Enum):
    """Where the learning gate runs."""
    CLOUD = "cloud"
    HYBRID = "hybrid"


class EffectMode(str, enum.Enum):
    """How an effect table conditions on the attribute."""
    CONDITIONAL = "conditional"
    INTERVENTIONAL = "interventional"


class GroundTruth(str, enum.Enum):
    """Synthetic label of a log row or request."""
    BENIGN = "benign"
    FRAUDULENT = "fraudulent"


class TimestampPolicyKind(str, enum.Enum):
    """Treatment of the epoch timestamp column."""
    DROP = "drop"
    HOUR_OF_DAY = "hour_of_day"
    BUCKETS = "buckets"


@dataclass(frozen=True)
class Variable:
    """A categorical variable with an ordered category list."""
    name: str
    categories: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if not self.categories:
            raise SchemaLookupError(f"variable '{self.name}' has no categories", variable=self.name)
        if len(set(self.categories)) != len(self.categories):
            raise SchemaLookupError(f"variable '{self.name}' has duplicate categories", variable=self.name)

    @property
    def cardinality(self) -> int:
        return len(self.categories)

    @property
    def has_other(self) -> bool:
        return self.categories[-1] == OTHER_LABEL

    @property
    def observed_categories(self) -> Tuple[str, ...]:
        """Categories without the reserved slot."""
        return self.categories[:-1] if self.has_other else self.categories


@dataclass(frozen=True)
class VariableSchema:
    """Ordered set of categorical variables; index encodings follow category order."""
    variables: Tuple[Variable, ...]
    _lookup: Dict[str, int] = field(init=False, repr=False, compare=False)
    _codes: Tuple[Dict[str, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        lookup = {var.name: i for i, var in enumerate(variables)}
        if len(lookup) != len(variables):
            raise SchemaLookupError("schema has duplicate variable names")
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_codes", tuple(
            {label: idx for idx, label in enumerate(var.categories)} for var in variables
        ))

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(var.name for var in self.variables)

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(var.cardinality for var in self.variables)

    def __contains__(self, name: str) -> bool:
        return name in self._lookup

    def index_of(self, name: str) -> int:
        try:
            return self._lookup[name]
        except KeyError:
            raise SchemaLookupError(f"unknown variable '{name}'", variable=name) from None

    def variable(self, key: Union[str, int]) -> Variable:
        if isinstance(key, str):
            key = self.index_of(key)
        return self.variables[key]

    def encode(self, name: str, value: Any) -> int:
        """
        Encode a category label as its index.

        Unseen labels map to the reserved slot when the variable carries one.

        Raises:
            SchemaLookupError: If the variable or label is unknown.
        """
        i = self.index_of(name)
        label = str(value)
        codes = self._codes[i]
        if label in codes:
            return codes[label]
        if self.variables[i].has_other:
            return codes[OTHER_LABEL]
        raise SchemaLookupError(
            f"value '{label}' is not a category of '{name}'", variable=name, value=label
        )

    def decode(self, name: str, index: int) -> str:
        var = self.variable(name)
        if not 0 <= index < var.cardinality:
            raise SchemaLookupError(f"index {index} out of range for '{name}'", variable=name)
        return var.categories[index]

    def with_other(self, exclude: Sequence[str] = ()) -> "VariableSchema":
        """Append the reserved category to every variable that lacks it, except those excluded."""
        return VariableSchema(tuple(
            var if var.has_other or var.name in exclude
            else Variable(var.name, var.categories + (OTHER_LABEL,))
            for var in self.variables
        ))

    def select(self, names: Sequence[str]) -> "VariableSchema":
        return VariableSchema(tuple(self.variable(name) for name in names))

    def replace(self, variable: Variable) -> "VariableSchema":
        i = self.index_of(variable.name)
        variables = list(self.variables)
        variables[i] = variable
        return VariableSchema(tuple(variables))

    def to_dict(self) -> List[Dict[str, Any]]:
        return [{"name": var.name, "categories": list(var.categories)} for var in self.variables]

    @classmethod
    def from_dict(cls, data: List[Dict[str, Any]]) -> "VariableSchema":
        return cls(tuple(Variable(item["name"], tuple(item["categories"])) for item in data))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Index-encoded table of categorical rows under a schema."""
    schema: VariableSchema
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.int64, copy=True)
        if data.ndim == 1 and data.size == 0:
            data = data.reshape(0, len(self.schema))
        if data.ndim != 2 or data.shape[1] != len(self.schema):
            raise SchemaLookupError(
                f"data shape {data.shape} does not match {len(self.schema)} schema variables"
            )
        cards = np.array(self.schema.cardinalities, dtype=np.int64)
        if data.size and (np.any(data < 0) or np.any(data >= cards)):
            raise SchemaLookupError("dataset cell index out of range for its variable")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return int(self.data.shape[0])

    def __len__(self) -> int:
        return self.N

    @property
    def rows(self) -> List[Tuple[int, ...]]:
        return [tuple(int(v) for v in row) for row in self.data]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.schema.index_of(name)]

    def records(self) -> List[Dict[str, str]]:
        """Decode every row back to a label dictionary."""
        columns = [var.categories for var in self.schema.variables]
        names = self.schema.names
        return [
            {names[j]: columns[j][int(v)] for j, v in enumerate(row)}
            for row in self.data
        ]

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.schema.index_of(name) for name in names]
        return Dataset(self.schema.select(names), self.data[:, idx])

    def drop(self, name: str) -> "Dataset":
        return self.select([n for n in self.schema.names if n != name])

    def with_schema(self, schema: VariableSchema) -> "Dataset":
        """Re-label under a schema whose categories extend the current ones as a prefix."""
        if schema.names != self.schema.names:
            raise SchemaLookupError("schemas have different variables")
        for old, new in zip(self.schema.variables, schema.variables):
            if new.categories[:old.cardinality] != old.categories:
                raise SchemaLookupError(
                    f"schema for '{old.name}' is not an extension", variable=old.name
                )
        return Dataset(schema, self.data)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise SchemaLookupError("cannot concatenate datasets with different schemas")
        return Dataset(self.schema, np.vstack([self.data, other.data]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.schema, self.data.tobytes()))


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over node ids 0..n-1, stored as sorted parent sets."""
    parents: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.parents)
        normalized = []
        for child, ps in enumerate(self.parents):
            ps = tuple(int(p) for p in ps)
            if len(set(ps)) != len(ps):
                raise ModelError(f"node {child} has duplicate parents")
            for p in ps:
                if p == child:
                    raise AcyclicityError([child])
                if not 0 <= p < n:
                    raise ModelError(f"parent {p} of node {child} is out of range")
            normalized.append(tuple(sorted(ps)))
        object.__setattr__(self, "parents", tuple(normalized))
        try:
            cycle = nx.find_cycle(self.to_networkx())
        except nx.NetworkXNoCycle:
            return
        raise AcyclicityError([u for u, _ in cycle])

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(tuple(() for _ in range(n)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "Dag":
        parents: List[List[int]] = [[] for _ in range(n)]
        for u, v in edges:
            parents[v].append(u)
        return cls(tuple(tuple(ps) for ps in parents))

    @property
    def n(self) -> int:
        return len(self.parents)

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((p, child) for child, ps in enumerate(self.parents) for p in ps)

    def has_edge(self, u: int, v: int) -> bool:
        return u in self.parents[v]

    def children(self, node: int) -> Tuple[int, ...]:
        return tuple(child for child, ps in enumerate(self.parents) if node in ps)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from((p, child) for child, ps in enumerate(self.parents) for p in ps)
        return graph

    def _with_parents(self, node: int, parents: Tuple[int, ...]) -> "Dag":
        updated = list(self.parents)
        updated[node] = parents
        return Dag(tuple(updated))

    def add_edge(self, u: int, v: int) -> "Dag":
        if self.has_edge(u, v):
            raise ModelError(f"edge {u}->{v} already present")
        return self._with_parents(v, self.parents[v] + (u,))

    def remove_edge(self, u: int, v: int) -> "Dag":
        if not self.has_edge(u, v):
            raise ModelError(f"edge {u}->{v} not present")
        return self._with_parents(v, tuple(p for p in self.parents[v] if p != u))

    def reverse_edge(self, u: int, v: int) -> "Dag":
        return self.remove_edge(u, v).add_edge(v, u)


@dataclass(frozen=True, eq=False)
class Cpt:
    """
    Conditional probability table of one variable.

    Rows enumerate parent configurations in mixed-radix order with the first
    listed parent most significant; columns are the variable's categories.
    """
    variable: int
    parents: Tuple[int, ...]
    parent_cards: Tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64, copy=True)
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "parent_cards", tuple(self.parent_cards))
        expected_rows = int(np.prod(self.parent_cards, dtype=np.int64))
        if table.ndim != 2 or table.shape[0] != expected_rows:
            raise ModelValidationError(
                f"CPT of variable {self.variable} has shape {table.shape}, expected {expected_rows} rows",
                variable=str(self.variable),
            )
        if np.any(table < 0.0) or np.any(table > 1.0):
            raise ModelValidationError(
                f"CPT of variable {self.variable} has entries outside [0, 1]",
                variable=str(self.variable),
            )
        sums = table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            raise ModelValidationError(
                f"CPT of variable {self.variable} row {int(bad[0])} sums to {sums[bad[0]]!r}",
                variable=str(self.variable), row=int(bad[0]),
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def cardinality(self) -> int:
        return int(self.table.shape[1])

    def row_index(self, parent_values: Sequence[int]) -> int:
        if not self.parents:
            return 0
        return int(np.ravel_multi_index(tuple(parent_values), self.parent_cards))

    def as_factor_array(self) -> np.ndarray:
        """Table reshaped to one axis per parent followed by the variable's axis."""
        return self.table.reshape(self.parent_cards + (self.cardinality,))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.parents == other.parents
            and self.parent_cards == other.parent_cards
            and np.array_equal(self.table, other.table)
        )


@dataclass(frozen=True)
class ModelMetadata:
    """Provenance recorded with every learned model."""
    version: int = 1
    training_n: int = 0
    alpha: float = 1.0
    loglikelihood: Optional[float] = None
    k: Optional[int] = None
    bic: Optional[float] = None
    search: str = ""
    edge_weight_measure: str = "pairwise_mutual_information"
    reserve_other: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelMetadata":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class BayesianNetwork:
    """DAG + one CPT per schema variable + optional edge weights."""
    schema: VariableSchema
    dag: Dag
    cpts: Tuple[Cpt, ...]
    edge_weights: Dict[Tuple[int, int], float] = field(default_factory=dict)
    metadata: ModelMetadata = field(default_factory=ModelMetadata)

    def __post_init__(self):
        cpts = tuple(self.cpts)
        object.__setattr__(self, "cpts", cpts)
        object.__setattr__(self, "edge_weights", dict(self.edge_weights))
        if len(cpts) != len(self.schema) or self.dag.n != len(self.schema):
            raise ModelValidationError("network needs exactly one CPT and one node per schema variable")
        cards = self.schema.cardinalities
        for i, cpt in enumerate(cpts):
            name = self.schema.names[i]
            if cpt.variable != i:
                raise ModelValidationError(f"CPT {i} belongs to variable {cpt.variable}", variable=name)
            if cpt.parents != self.dag.parents[i]:
                raise ModelValidationError(
                    f"CPT parents of '{name}' do not match the DAG", variable=name
                )
            if cpt.parent_cards != tuple(cards[p] for p in cpt.parents) or cpt.cardinality != cards[i]:
                raise ModelValidationError(
                    f"CPT of '{name}' does not match schema cardinalities", variable=name
                )
        for edge in self.edge_weights:
            if not self.dag.has_edge(*edge):
                raise ModelValidationError(f"edge weight given for missing edge {edge}")

    @property
    def version(self) -> int:
        return self.metadata.version

    def index_of(self, name: str) -> int:
        return self.schema.index_of(name)

    def with_metadata(self, **changes: Any) -> "BayesianNetwork":
        return BayesianNetwork(
            self.schema, self.dag, self.cpts, self.edge_weights, replace(self.metadata, **changes)
        )

    def markov_blanket(self, name: str) -> List[str]:
        """Parents, children and children's other parents of a variable."""
        i = self.index_of(name)
        blanket = set(self.dag.parents[i])
        for child in self.dag.children(i):
            blanket.add(child)
            blanket.update(self.dag.parents[child])
        blanket.discard(i)
        return [self.schema.names[j] for j in sorted(blanket)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BayesianNetwork):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.dag == other.dag
            and self.cpts == other.cpts
            and self.edge_weights == other.edge_weights
            and self.metadata == other.metadata
        )
