"""
Tests for the PDP policy engine.
"""
import json

import pytest
from pydantic import ValidationError

from ztlearn.models import RuleEffect, Verdict
from ztlearn.schemas import AccessRequest, PolicyRule, PolicySet
from ztlearn.services.policies import (
    PolicyEngine, PolicyError, load_policy_set, parse_policy_set, pdp_decide, rule_matches,
)

POLICIES = PolicySet(rules=[
    PolicyRule(name="deny-port", conditions={"source_port": "52415"}, effect=RuleEffect.DENY),
    PolicyRule(name="allow-https", conditions={"protocol": "HTTPS"}, effect=RuleEffect.ALLOW),
    PolicyRule(name="allow-any-user", conditions={"user_id": "*", "protocol": "SSH"}, effect=RuleEffect.ALLOW),
])


def request(**evidence):
    return AccessRequest(request_id="r1", evidence=evidence)


def test_first_match_wins():
    verdict, rule = PolicyEngine(POLICIES).evaluate(request(source_port="52415", protocol="HTTPS"))
    assert verdict == Verdict.PDP_DENIED
    assert rule.name == "deny-port"


def test_later_rule_allows():
    assert pdp_decide(request(source_port="443", protocol="HTTPS"), POLICIES) == Verdict.PDP_ALLOWED


def test_unmatched_request_is_denied():
    verdict, rule = PolicyEngine(POLICIES).evaluate(request(protocol="FTP"))
    assert verdict == Verdict.PDP_DENIED
    assert rule is None


def test_empty_policy_set_denies_everything():
    assert pdp_decide(request(protocol="HTTPS"), PolicySet()) == Verdict.PDP_DENIED


def test_wildcard_matches_absent_attribute():
    rule = PolicyRule(conditions={"user_id": "*", "protocol": "SSH"}, effect=RuleEffect.ALLOW)
    assert rule_matches(rule, {"protocol": "SSH"})
    assert not rule_matches(rule, {"protocol": "HTTPS"})


def test_empty_conditions_match_everything():
    assert rule_matches(PolicyRule(effect=RuleEffect.ALLOW), {})


def test_missing_attribute_does_not_match_a_literal():
    assert not rule_matches(POLICIES.rules[0], {"protocol": "HTTPS"})


def test_default_must_be_deny():
    with pytest.raises(ValidationError):
        PolicySet(default=RuleEffect.ALLOW)


class TestLoading:
    def test_bare_rule_list(self):
        policies = parse_policy_set([{"conditions": {"protocol": "SSH"}, "effect": "allow"}])
        assert policies.rules[0].effect == RuleEffect.ALLOW
        assert policies.default == RuleEffect.DENY

    def test_values_are_stringified(self):
        policies = parse_policy_set({"rules": [{"conditions": {"source_port": 52415}, "effect": "deny"}]})
        assert policies.rules[0].conditions == {"source_port": "52415"}

    def test_allow_default_is_rejected(self):
        with pytest.raises(PolicyError):
            parse_policy_set({"rules": [], "default": "allow"})

    def test_unknown_effect_is_rejected(self):
        with pytest.raises(PolicyError):
            parse_policy_set([{"conditions": {}, "effect": "maybe"}])

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "policies.json"
        path.write_text(json.dumps(POLICIES.model_dump(mode="json")), encoding="utf-8")
        assert load_policy_set(path) == POLICIES

    def test_missing_file(self, tmp_path):
        with pytest.raises(PolicyError):
            load_policy_set(tmp_path / "absent.json")

    def test_not_json(self, tmp_path):
        path = tmp_path / "policies.json"
        path.write_text("rules: []", encoding="utf-8")
        with pytest.raises(PolicyError):
            load_policy_set(path)
