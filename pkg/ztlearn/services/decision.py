"""
Policy Enforcement Point with an embedded learning model.

The PEP scores each request with P(action = allowed | evidence). Requests
below theta_block are blocked locally without involving the PDP; the rest are
forwarded when the PDP is reachable, and decided autonomously against
theta_auto when it is not.
"""
import logging
import threading
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from ztlearn.models import ACTION, BayesianNetwork, Verdict, ZtError
from ztlearn.schemas import AccessRequest, Decision, Thresholds
from ztlearn.services.inference import (
    EvidenceError, UnknownValueError, ZeroEvidenceError, allowed_index, query,
)
from ztlearn.services.policies import PolicyEngine
from ztlearn.utils.jsonl import write_jsonl

logger = logging.getLogger(__name__)

EvidenceKey = Tuple[int, FrozenSet[Tuple[str, str]]]
Score = Tuple[Optional[float], str]


class DecisionError(ZtError):
    """Exception raised by the decision layer."""
    pass


class ConfigurationError(DecisionError):
    """Request attributes do not fit the model schema."""
    pass


def allow_probability(net: BayesianNetwork, request: AccessRequest) -> Tuple[Optional[float], str]:
    """
    Score a request.

    Returns:
        Tuple of (p_allow, note); p_allow is None when the evidence is anomalous
        (zero probability, or a value the model has no slot for)

    Raises:
        ConfigurationError: If the evidence names a variable outside the model schema
    """
    try:
        posterior = query(net, ACTION, request.evidence)
    except UnknownValueError as e:
        return None, f"unknown value: {e}"
    except ZeroEvidenceError:
        return None, "zero-probability evidence"
    except EvidenceError as e:
        raise ConfigurationError(str(e)) from e
    p = float(posterior[allowed_index(net)])
    return min(1.0, max(0.0, p)), ""


def gate(p_allow: Optional[float], thresholds: Thresholds, pdp_reachable: bool) -> Verdict:
    """Learning-gate verdict for a score; None scores are anomalous."""
    if p_allow is None:
        return Verdict.BLOCKED_ANOMALOUS
    if p_allow < thresholds.theta_block:
        return Verdict.BLOCKED_LOCAL
    if pdp_reachable:
        return Verdict.FORWARDED_TO_PDP
    if p_allow >= thresholds.theta_auto:
        return Verdict.ALLOWED_AUTONOMOUS
    return Verdict.BLOCKED_AUTONOMOUS


_PATHS = {
    Verdict.BLOCKED_ANOMALOUS: "anomalous evidence, blocked",
    Verdict.BLOCKED_LOCAL: "below theta_block, blocked without the policy engine",
    Verdict.FORWARDED_TO_PDP: "forwarded to the policy engine",
    Verdict.ALLOWED_AUTONOMOUS: "PDP unreachable, allowed autonomously (audit pending)",
    Verdict.BLOCKED_AUTONOMOUS: "PDP unreachable, below theta_auto, blocked",
}


def blanket_evidence(net: BayesianNetwork, request: AccessRequest) -> List[str]:
    """Observed attributes inside the action's Markov blanket."""
    return [name for name in net.markov_blanket(ACTION) if name in request.evidence]


def _build_decision(request: AccessRequest, p_allow: Optional[float], note: str, net: BayesianNetwork,
                    thresholds: Thresholds, pdp_reachable: bool) -> Decision:
    verdict = gate(p_allow, thresholds, pdp_reachable)
    p = 0.0 if p_allow is None else p_allow
    blanket = ",".join(blanket_evidence(net, request)) or "none"
    rationale = (
        f"p_allow={p:.6f} theta_block={thresholds.theta_block} theta_auto={thresholds.theta_auto} "
        f"reachable={pdp_reachable} blanket_evidence={blanket}: {_PATHS[verdict]}"
    )
    if note:
        rationale += f" ({note})"
    return Decision(
        request_id=request.request_id, verdict=verdict, p_allow=p, model_version=net.version,
        rationale=rationale, node=request.origin, time=request.arrival_time,
        pep_verdict=verdict, audit_pending=verdict == Verdict.ALLOWED_AUTONOMOUS,
    )


def pep_evaluate(request: AccessRequest, net: BayesianNetwork, thresholds: Optional[Thresholds] = None,
                 pdp_reachable: bool = True) -> Decision:
    """
    Decide a request at the PEP.

    Args:
        request: Request with partial attribute evidence
        net: Model snapshot trained on a schema covering the request attributes
        thresholds: Block and autonomy thresholds
        pdp_reachable: Whether the PDP can be reached right now

    Returns:
        Decision: One of BlockedAnomalous, BlockedLocal, ForwardedToPdp,
        AllowedAutonomous or BlockedAutonomous

    Raises:
        ConfigurationError: If the request names variables outside the model schema
    """
    thresholds = thresholds or Thresholds()
    p_allow, note = allow_probability(net, request)
    return _build_decision(request, p_allow, note, net, thresholds, pdp_reachable)


def resolve_at_pdp(decision: Decision, request: AccessRequest, engine: PolicyEngine,
                   time: Optional[float] = None) -> Decision:
    """Terminal decision for a forwarded request; the PEP's score is advisory only."""
    verdict, rule = engine.evaluate(request)
    matched = f"rule '{rule.name}'" if rule is not None else "default deny"
    return decision.model_copy(update={
        "verdict": verdict,
        "rationale": f"{decision.rationale}; PDP {verdict.value} by {matched}",
        "time": decision.time if time is None else time,
        "pep_verdict": Verdict.FORWARDED_TO_PDP,
    })


class PosteriorMemo:
    """
    Posterior cache shared by the PEPs of one deployment.

    Entries are keyed by (model version, evidence). Each PEP registers the
    version it holds; entries for versions no holder still uses are evicted.
    """

    def __init__(self):
        self._entries: Dict[EvidenceKey, Score] = {}
        self._holders: Dict[str, int] = {}
        self._lock = threading.Lock()

    def get(self, key: EvidenceKey) -> Optional[Score]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: EvidenceKey, value: Score) -> None:
        with self._lock:
            if key[0] in self._holders.values():
                self._entries[key] = value

    def hold(self, holder: str, version: int) -> None:
        with self._lock:
            self._holders[holder] = version
            live = set(self._holders.values())
            stale = [key for key in self._entries if key[0] not in live]
            for key in stale:
                del self._entries[key]
        if stale:
            logger.debug(f"Evicted {len(stale)} memoised posteriors of retired model versions")

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class PolicyEnforcementPoint:
    """
    PEP holding an immutable model snapshot.

    install() swaps the snapshot under a lock, so a reader sees either the old
    or the new model. Posteriors are memoised per (model version, evidence).
    """

    def __init__(self, node_id: str, net: BayesianNetwork, thresholds: Optional[Thresholds] = None,
                 engine: Optional[PolicyEngine] = None,
                 memo: Optional[PosteriorMemo] = None):
        self.node_id = node_id
        self.thresholds = thresholds or Thresholds()
        self.engine = engine
        self._net = net
        self._lock = threading.Lock()
        # Versions are global, so PEPs holding the same version may share one memo
        self._memo = PosteriorMemo() if memo is None else memo
        self._memo.hold(node_id, net.version)

    @property
    def model(self) -> BayesianNetwork:
        with self._lock:
            return self._net

    @property
    def version(self) -> int:
        return self.model.version

    def install(self, net: BayesianNetwork) -> None:
        with self._lock:
            previous = self._net.version
            self._net = net
        self._memo.hold(self.node_id, net.version)
        logger.debug(f"{self.node_id}: model v{previous} -> v{net.version}")

    def score(self, request: AccessRequest, net: Optional[BayesianNetwork] = None) -> Score:
        net = net or self.model
        key = (net.version, frozenset(request.evidence.items()))
        hit = self._memo.get(key)
        if hit is None:
            hit = allow_probability(net, request)
            self._memo.put(key, hit)
        return hit

    def evaluate(self, request: AccessRequest, pdp_reachable: bool = True) -> Decision:
        net = self.model
        p_allow, note = self.score(request, net)
        decision = _build_decision(request, p_allow, note, net, self.thresholds, pdp_reachable)
        return decision.model_copy(update={"node": self.node_id})

    def decide(self, request: AccessRequest, pdp_reachable: bool = True) -> Decision:
        """Evaluate locally and, when forwarded, resolve with the attached policy engine."""
        decision = self.evaluate(request, pdp_reachable)
        if decision.verdict == Verdict.FORWARDED_TO_PDP and self.engine is not None:
            return resolve_at_pdp(decision, request, self.engine)
        return decision


def write_decision_log(decisions: Iterable[Decision], path: Union[str, Path]) -> int:
    """JSONL, one {request_id, verdict, p_allow, model_version, node, time} per decision."""
    return write_jsonl(path, (d.to_log_record() for d in decisions))
