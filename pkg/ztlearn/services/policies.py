"""
Policy Engine for the Policy Decision Point.
Evaluates ordered allow/deny rules against request attributes; the first
matching rule wins and unmatched requests are denied.
"""
import json
import logging
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

from pydantic import ValidationError

from ztlearn.models import RuleEffect, Verdict, ZtError
from ztlearn.schemas import AccessRequest, PolicyRule, PolicySet

logger = logging.getLogger(__name__)

WILDCARD = "*"


class PolicyError(ZtError):
    """Exception raised when a policy set cannot be loaded or evaluated."""
    pass


def rule_matches(rule: PolicyRule, evidence: Mapping[str, str]) -> bool:
    """
    Check a rule's attribute=value conjunction against request evidence.

    A wildcard condition matches any value, including an absent attribute.
    An empty condition set matches every request.
    """
    for attribute, expected in rule.conditions.items():
        if expected == WILDCARD:
            continue
        if evidence.get(attribute) != expected:
            return False
    return True


class PolicyEngine:
    """Evaluates a PolicySet with first-match semantics."""

    def __init__(self, policies: Optional[PolicySet] = None):
        self.policies = policies or PolicySet()

    def evaluate(self, request: AccessRequest) -> Tuple[Verdict, Optional[PolicyRule]]:
        """
        Decide a request.

        Args:
            request: Access request forwarded by a PEP

        Returns:
            Tuple of (PdpAllowed or PdpDenied, the matching rule or None for the default)
        """
        for rule in self.policies.rules:
            if rule_matches(rule, request.evidence):
                verdict = Verdict.PDP_ALLOWED if rule.effect == RuleEffect.ALLOW else Verdict.PDP_DENIED
                logger.debug(f"Request {request.request_id} matched rule '{rule.name}': {verdict.value}")
                return verdict, rule
        logger.debug(f"Request {request.request_id} matched no rule; default {self.policies.default.value}")
        return Verdict.PDP_DENIED, None

    def decide(self, request: AccessRequest) -> Verdict:
        return self.evaluate(request)[0]


def pdp_decide(request: AccessRequest, policies: PolicySet) -> Verdict:
    """First matching rule decides; unmatched requests are denied."""
    return PolicyEngine(policies).decide(request)


def parse_policy_set(payload: Union[list, dict]) -> PolicySet:
    """Accept either a bare ordered rule list or {"rules": [...], "default": "deny"}."""
    try:
        if isinstance(payload, list):
            return PolicySet(rules=payload)
        return PolicySet(**payload)
    except (ValidationError, TypeError) as e:
        raise PolicyError(f"invalid policy set: {e}") from e


def load_policy_set(path: Union[str, Path]) -> PolicySet:
    """
    Load a PolicySet JSON file.

    Raises:
        PolicyError: If the file is missing, not JSON, or not a valid policy set
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise PolicyError(f"cannot read policy set {path}: {e}") from e
    policies = parse_policy_set(payload)
    logger.info(f"Loaded {len(policies.rules)} policy rules from {path}")
    return policies
