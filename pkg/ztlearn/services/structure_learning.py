"""
Score-based structure learning for discrete Bayesian networks.
Smoothed CPT fitting, decomposable BIC scoring, greedy hill climbing with
seeded restarts, and exhaustive search over small graphs.
"""
import itertools
import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ztlearn.models import (
    ACTION, AcyclicityError, BayesianNetwork, Cpt, Dag, Dataset, ModelMetadata,
    SchemaLookupError, VariableSchema, ZtError,
)
from ztlearn.schemas import ScoreReport, SearchConfig, TraceEntry
from ztlearn.utils.jsonl import write_jsonl

logger = logging.getLogger(__name__)

# A move must lower BIC by more than this to count as progress
IMPROVEMENT_EPS = 1e-9
# Scores closer than this are ties, resolved lexicographically
TIE_EPS = 1e-9
MAX_EXHAUSTIVE_VARS = 4


class LearningError(ZtError):
    """Exception raised when fitting or structure search fails."""
    pass


class FitError(LearningError):
    """Raised when a CPT row is undefined (unobserved parent configuration with alpha = 0)."""

    def __init__(self, variable: str, row: int):
        self.variable = variable
        self.row = row
        super().__init__(
            f"parent configuration {row} of '{variable}' is unobserved; use alpha > 0"
        )


class SearchConfigError(LearningError):
    """Raised when a search configuration cannot be satisfied."""
    pass


def _require_rows(dataset: Dataset) -> None:
    if dataset.N < 1:
        raise LearningError("learning needs at least one row")


def family_counts(data: np.ndarray, cards: Sequence[int], child: int,
                  parents: Sequence[int]) -> np.ndarray:
    """Count table with one row per parent configuration (first parent most significant)."""
    card = cards[child]
    parent_cards = tuple(cards[p] for p in parents)
    n_rows = int(np.prod(parent_cards, dtype=np.int64))
    if parents:
        row_index = np.ravel_multi_index(tuple(data[:, p] for p in parents), parent_cards)
    else:
        row_index = np.zeros(data.shape[0], dtype=np.int64)
    flat = row_index * card + data[:, child]
    return np.bincount(flat, minlength=n_rows * card).reshape(n_rows, card)


def family_loglikelihood(counts: np.ndarray) -> float:
    """MLE log-likelihood of one family restricted to observed parent configurations."""
    totals = np.broadcast_to(counts.sum(axis=1, keepdims=True), counts.shape)
    mask = counts > 0
    observed = counts[mask].astype(np.float64)
    return float(np.sum(observed * np.log(observed / totals[mask])))


def fit_cpts(dag: Dag, dataset: Dataset, alpha: float) -> Tuple[Cpt, ...]:
    """
    Fit smoothed maximum-likelihood CPTs.

    Each entry is (count(x, cfg) + alpha) / (count(cfg) + alpha * |X|).

    Raises:
        FitError: If alpha is 0 and some parent configuration is unobserved
    """
    if alpha < 0:
        raise LearningError("alpha must be non-negative")
    cards = dataset.schema.cardinalities
    cpts = []
    for child, parents in enumerate(dag.parents):
        counts = family_counts(dataset.data, cards, child, parents).astype(np.float64)
        totals = counts.sum(axis=1, keepdims=True)
        if alpha == 0:
            empty = np.flatnonzero(totals[:, 0] == 0)
            if empty.size:
                raise FitError(dataset.schema.names[child], int(empty[0]))
        table = (counts + alpha) / (totals + alpha * cards[child])
        cpts.append(Cpt(child, parents, tuple(cards[p] for p in parents), table))
    return tuple(cpts)


def count_parameters(dag: Dag, schema: VariableSchema) -> int:
    """k = sum over variables of (|X| - 1) times the product of parent cardinalities."""
    cards = schema.cardinalities
    return sum(
        (cards[i] - 1) * math.prod(cards[p] for p in parents)
        for i, parents in enumerate(dag.parents)
    )


class FamilyScoreCache:
    """
    Per-family (log-likelihood, parameter count) cache over one dataset.

    Totals are summed over families in node order, so rescoring after a local
    move and a fresh full score give identical floats.
    """

    def __init__(self, dataset: Dataset):
        _require_rows(dataset)
        self.dataset = dataset
        self.cards = dataset.schema.cardinalities
        self.N = dataset.N
        self._cache: Dict[Tuple[int, Tuple[int, ...]], Tuple[float, int]] = {}
        self._lock = threading.Lock()

    def family(self, child: int, parents: Sequence[int]) -> Tuple[float, int]:
        key = (child, tuple(sorted(parents)))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        counts = family_counts(self.dataset.data, self.cards, child, key[1])
        k = (self.cards[child] - 1) * math.prod(self.cards[p] for p in key[1])
        value = (family_loglikelihood(counts), k)
        with self._lock:
            self._cache[key] = value
        return value

    def report(self, dag: Dag) -> ScoreReport:
        families = [self.family(child, parents) for child, parents in enumerate(dag.parents)]
        loglik = math.fsum(ll for ll, _ in families)
        k = sum(k for _, k in families)
        return ScoreReport.from_terms(loglik, k, self.N)

    def bic(self, dag: Dag) -> float:
        return self.report(dag).bic

    def __len__(self) -> int:
        return len(self._cache)


def loglikelihood(dag: Dag, dataset: Dataset, cpts: Optional[Sequence[Cpt]] = None) -> float:
    """
    Log-likelihood of a dataset (nats).

    Args:
        dag: Structure over the dataset schema
        dataset: Rows to score
        cpts: Optional fitted CPTs to evaluate (held-out scoring); by default the
            MLE CPTs of the dataset itself are used

    Returns:
        float: Sum of ln P(row); -inf when some row has zero probability
    """
    _require_rows(dataset)
    if cpts is None:
        return FamilyScoreCache(dataset).report(dag).loglikelihood

    total = []
    for cpt in cpts:
        parents = cpt.parents
        if parents:
            rows = np.ravel_multi_index(tuple(dataset.data[:, p] for p in parents), cpt.parent_cards)
        else:
            rows = np.zeros(dataset.N, dtype=np.int64)
        probs = cpt.table[rows, dataset.data[:, cpt.variable]]
        if np.any(probs == 0.0):
            name = dataset.schema.names[cpt.variable]
            logger.warning(f"Zero-probability row under the model for '{name}'; log-likelihood is -inf")
            return float("-inf")
        total.append(float(np.sum(np.log(probs))))
    return math.fsum(total)


def bic_score(dag: Dag, dataset: Dataset) -> ScoreReport:
    """BIC = k ln N - 2 LL; lower is better."""
    return FamilyScoreCache(dataset).report(dag)


def mutual_information(x: np.ndarray, y: np.ndarray, card_x: int, card_y: int) -> float:
    """Empirical mutual information I(X; Y) in nats."""
    n = len(x)
    if n == 0:
        return 0.0
    joint = np.bincount(x * card_y + y, minlength=card_x * card_y).reshape(card_x, card_y) / n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / (px @ py)[mask]
    return max(0.0, float(np.sum(joint[mask] * np.log(ratio))))


def edge_weights(net: BayesianNetwork, dataset: Dataset) -> Dict[Tuple[int, int], float]:
    """Pairwise mutual information of every edge's endpoints, estimated from the dataset."""
    names = net.schema.names
    cards = dataset.schema.cardinalities
    weights = {}
    for u, v in net.dag.edges():
        iu, iv = dataset.schema.index_of(names[u]), dataset.schema.index_of(names[v])
        weights[(u, v)] = mutual_information(
            dataset.data[:, iu], dataset.data[:, iv], cards[iu], cards[iv]
        )
    return weights


@dataclass(frozen=True)
class Move:
    src: int
    dst: int
    op: str

    def apply(self, dag: Dag) -> Dag:
        if self.op == "add":
            return dag.add_edge(self.src, self.dst)
        if self.op == "delete":
            return dag.remove_edge(self.src, self.dst)
        return dag.reverse_edge(self.src, self.dst)


@dataclass(frozen=True)
class _Constraints:
    max_parents: int
    forbidden: frozenset
    required: frozenset


def _resolve_edges(schema: VariableSchema, edges: Sequence[Tuple[str, str]]) -> frozenset:
    try:
        return frozenset((schema.index_of(u), schema.index_of(v)) for u, v in edges)
    except SchemaLookupError as e:
        raise SearchConfigError(str(e)) from e


def legal_moves(dag: Dag, constraints: _Constraints) -> Iterator[Tuple[Move, Dag]]:
    """Every legal single-edge move in lexicographic (src, dst, op) order."""
    n = dag.n
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            if dag.has_edge(u, v):
                if (u, v) in constraints.required:
                    continue
                yield Move(u, v, "delete"), dag.remove_edge(u, v)
                if (v, u) in constraints.forbidden or len(dag.parents[u]) >= constraints.max_parents:
                    continue
                try:
                    yield Move(u, v, "reverse"), dag.reverse_edge(u, v)
                except AcyclicityError:
                    continue
            elif not dag.has_edge(v, u):
                if (u, v) in constraints.forbidden or len(dag.parents[v]) >= constraints.max_parents:
                    continue
                try:
                    yield Move(u, v, "add"), dag.add_edge(u, v)
                except AcyclicityError:
                    continue


def _climb(dag: Dag, cache: FamilyScoreCache, constraints: _Constraints, max_iterations: int,
           names: Sequence[str], trace: List[TraceEntry], restart: int) -> Tuple[Dag, float]:
    current = cache.bic(dag)
    for _ in range(max_iterations):
        best: Optional[Tuple[float, Move, Dag]] = None
        for move, candidate in legal_moves(dag, constraints):
            score = cache.bic(candidate)
            if best is None or score < best[0] - TIE_EPS:
                best = (score, move, candidate)
        if best is None or best[0] >= current - IMPROVEMENT_EPS:
            break
        score, move, candidate = best
        trace.append(TraceEntry(
            iter=len(trace), op=move.op, edge=(names[move.src], names[move.dst]),
            bic_before=current, bic_after=score, restart=restart,
        ))
        logger.debug(f"Accepted {move.op} {names[move.src]}->{names[move.dst]}: {current:.4f} -> {score:.4f}")
        dag, current = candidate, score
    return dag, current


def _perturb(dag: Dag, constraints: _Constraints, rng: np.random.Generator, length: int) -> Dag:
    for _ in range(length):
        moves = [candidate for _, candidate in legal_moves(dag, constraints)]
        if not moves:
            break
        dag = moves[int(rng.integers(len(moves)))]
    return dag


def build_network(dag: Dag, dataset: Dataset, alpha: float, report: ScoreReport,
                  search: str, reserve_other: bool = True) -> BayesianNetwork:
    """Fit the deployable network for a learned structure."""
    with_other = reserve_other and alpha > 0
    fit_data = dataset.with_schema(dataset.schema.with_other(exclude=(ACTION,))) if with_other else dataset
    cpts = fit_cpts(dag, fit_data, alpha)
    draft = BayesianNetwork(fit_data.schema, dag, cpts)
    metadata = ModelMetadata(
        version=1, training_n=dataset.N, alpha=float(alpha),
        loglikelihood=report.loglikelihood, k=report.k, bic=report.bic,
        search=search, reserve_other=with_other,
    )
    return BayesianNetwork(fit_data.schema, dag, cpts, edge_weights(draft, dataset), metadata)


def hill_climb(dataset: Dataset, config: Optional[SearchConfig] = None
               ) -> Tuple[BayesianNetwork, ScoreReport, List[TraceEntry]]:
    """
    Greedy BIC hill climbing over add / delete / reverse moves from the empty graph.

    Each step applies the legal move with the lowest resulting BIC (ties broken
    by (src, dst, op)); the search stops when no move improves or after
    max_iterations steps. Seeded random restarts perturb the best graph and
    climb again.

    Returns:
        Tuple of (fitted network, score report, accepted-move trace)

    Raises:
        SearchConfigError: If required edges are cyclic, forbidden or exceed max_parents
    """
    config = config or SearchConfig()
    _require_rows(dataset)
    schema = dataset.schema
    names = schema.names
    forbidden = _resolve_edges(schema, config.forbidden_edges)
    required = _resolve_edges(schema, config.required_edges)
    if forbidden & required:
        raise SearchConfigError("an edge is both required and forbidden")
    try:
        start = Dag.from_edges(len(schema), sorted(required))
    except AcyclicityError as e:
        raise SearchConfigError(f"required edges are cyclic: {e}") from e
    if any(len(ps) > config.max_parents for ps in start.parents):
        raise SearchConfigError("required edges exceed max_parents")

    constraints = _Constraints(config.max_parents, forbidden, required)
    cache = FamilyScoreCache(dataset)
    trace: List[TraceEntry] = []
    best_dag, best_bic = _climb(start, cache, constraints, config.max_iterations, names, trace, 0)

    rng = np.random.default_rng(config.seed)
    for restart in range(1, config.random_restarts + 1):
        perturbed = _perturb(best_dag, constraints, rng, config.restart_length)
        dag, bic = _climb(perturbed, cache, constraints, config.max_iterations, names, trace, restart)
        if bic < best_bic - IMPROVEMENT_EPS:
            logger.info(f"Restart {restart} improved BIC {best_bic:.4f} -> {bic:.4f}")
            best_dag, best_bic = dag, bic

    report = cache.report(best_dag)
    net = build_network(best_dag, dataset, config.alpha, report, "hill_climb", config.reserve_other)
    logger.info(
        f"Hill climb converged: {len(best_dag.edges())} edges, LL={report.loglikelihood:.4f}, "
        f"BIC={report.bic:.4f}, {len(trace)} moves, {len(cache)} families scored"
    )
    return net, report, trace


@lru_cache(maxsize=None)
def enumerate_dags(n: int) -> Tuple[Dag, ...]:
    """Every labelled DAG on n nodes (1, 1, 3, 25, 543 for n = 0..4)."""
    if n > MAX_EXHAUSTIVE_VARS:
        raise LearningError(f"refusing to enumerate DAGs on {n} > {MAX_EXHAUSTIVE_VARS} nodes")
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    dags = []
    for mask in itertools.product((0, 1), repeat=len(pairs)):
        edges = [pair for pair, bit in zip(pairs, mask) if bit]
        chosen = set(edges)
        if any((v, u) in chosen for u, v in edges):
            continue
        try:
            dags.append(Dag.from_edges(n, edges))
        except AcyclicityError:
            continue
    return tuple(dags)


def exhaustive_search(dataset: Dataset, config: Optional[SearchConfig] = None,
                      max_vars: int = MAX_EXHAUSTIVE_VARS) -> Tuple[BayesianNetwork, ScoreReport]:
    """
    Score every DAG and return the minimum-BIC one.

    Ties go to the lexicographically smallest edge list.

    Raises:
        LearningError: If the schema has more than max_vars (at most 4) variables
    """
    config = config or SearchConfig()
    _require_rows(dataset)
    n = len(dataset.schema)
    if n > min(max_vars, MAX_EXHAUSTIVE_VARS):
        raise LearningError(f"exhaustive search supports at most {min(max_vars, MAX_EXHAUSTIVE_VARS)} variables, got {n}")
    cache = FamilyScoreCache(dataset)
    best: Optional[Tuple[float, List[Tuple[int, int]], Dag]] = None
    for dag in enumerate_dags(n):
        score = cache.bic(dag)
        edges = dag.edges()
        if best is None or score < best[0] - TIE_EPS or (abs(score - best[0]) <= TIE_EPS and edges < best[1]):
            best = (score, edges, dag)
    report = cache.report(best[2])
    net = build_network(best[2], dataset, config.alpha, report, "exhaustive", config.reserve_other)
    logger.info(f"Exhaustive search over {len(enumerate_dags(n))} DAGs: BIC={report.bic:.4f}")
    return net, report


def learn_network(dataset: Dataset, config: Optional[SearchConfig] = None, method: str = "hill_climb"
                  ) -> Tuple[BayesianNetwork, ScoreReport, List[TraceEntry]]:
    """Learn with either search method; exhaustive search has an empty trace."""
    if method == "exhaustive":
        net, report = exhaustive_search(dataset, config)
        return net, report, []
    if method != "hill_climb":
        raise SearchConfigError(f"unknown search method '{method}'")
    return hill_climb(dataset, config)


def write_trace(trace: Sequence[TraceEntry], path: Union[str, Path]) -> None:
    write_jsonl(path, (entry.model_dump(mode="json") for entry in trace))
