"""
Tests for the Policy Administrator session ledger.
"""
import pytest

from ztlearn.models import Verdict
from ztlearn.services.sessions import (
    AUDIT_DENIED, ESTABLISH, TEARDOWN, PolicyAdministrator, SessionError,
    SessionPreconditionError, UnknownSessionError, pa_session,
)


@pytest.fixture
def pa():
    return PolicyAdministrator()


@pytest.mark.parametrize("verdict", [
    Verdict.PDP_DENIED, Verdict.BLOCKED_LOCAL, Verdict.BLOCKED_ANOMALOUS,
    Verdict.BLOCKED_AUTONOMOUS, Verdict.BLOCKED_UNREACHABLE, Verdict.FORWARDED_TO_PDP,
])
def test_only_allowing_verdicts_open_sessions(pa, verdict):
    with pytest.raises(SessionPreconditionError):
        pa.establish("r1", "User1", "10.0.0.1:443", verdict)
    assert pa.sessions() == []


def test_establish_and_teardown(pa):
    record = pa.establish("r1", "User1", "10.0.0.1:443", Verdict.PDP_ALLOWED, time=5.0)
    assert record.session_id == "s-000001"
    assert record.is_open
    assert not record.audit_pending
    closed = pa.teardown(record.session_id, time=9.0)
    assert closed.closed_at == 9.0
    assert closed.reason == "teardown"
    assert pa.open_sessions() == []
    assert [e["op"] for e in pa.events_since()] == ["establish", "teardown"]
    assert [e["op"] for e in pa.events_since(1)] == ["teardown"]


def test_autonomous_allow_awaits_audit(pa):
    record = pa.establish("r1", "User1", "res", Verdict.ALLOWED_AUTONOMOUS)
    assert record.audit_pending
    assert pa.pending_audits() == [record]


def test_allowed_audit_clears_the_flag(pa):
    record = pa.establish("r1", "User1", "res", Verdict.ALLOWED_AUTONOMOUS)
    audited = pa.resolve_audit(record.session_id, Verdict.PDP_ALLOWED, time=3.0)
    assert not audited.audit_pending
    assert audited.is_open
    assert pa.pending_audits() == []


def test_denied_audit_revokes(pa):
    record = pa.establish("r1", "User1", "res", Verdict.ALLOWED_AUTONOMOUS)
    revoked = pa.resolve_audit(record.session_id, Verdict.PDP_DENIED, time=3.0)
    assert revoked.closed_at == 3.0
    assert revoked.reason == AUDIT_DENIED


def test_denied_audit_after_teardown_does_not_reopen(pa):
    record = pa.establish("r1", "User1", "res", Verdict.ALLOWED_AUTONOMOUS)
    pa.teardown(record.session_id, time=1.0)
    audited = pa.resolve_audit(record.session_id, Verdict.PDP_DENIED, time=2.0)
    assert audited.closed_at == 1.0
    assert audited.reason == "teardown"


def test_double_close_is_an_error(pa):
    record = pa.establish("r1", "User1", "res", Verdict.PDP_ALLOWED)
    pa.revoke(record.session_id)
    with pytest.raises(SessionError):
        pa.teardown(record.session_id)


def test_unknown_session(pa):
    with pytest.raises(UnknownSessionError):
        pa.teardown("s-999999")
    with pytest.raises(UnknownSessionError):
        pa.get("s-999999")


def test_ids_are_sequential(pa):
    ids = [pa.establish(f"r{i}", "User1", "res", Verdict.PDP_ALLOWED).session_id for i in range(3)]
    assert ids == ["s-000001", "s-000002", "s-000003"]


class TestPaSession:
    def test_establish_requires_verdict(self, pa):
        with pytest.raises(SessionPreconditionError):
            pa_session(pa, ESTABLISH, "User1", "res")

    def test_teardown_closes_latest_open_path(self, pa):
        pa_session(pa, ESTABLISH, "User1", "res", Verdict.PDP_ALLOWED, request_id="r1")
        second = pa_session(pa, ESTABLISH, "User1", "res", Verdict.PDP_ALLOWED, request_id="r2")
        closed = pa_session(pa, TEARDOWN, "User1", "res", time=4.0)
        assert closed.session_id == second.session_id
        assert len(pa.open_sessions()) == 1

    def test_teardown_without_open_path(self, pa):
        with pytest.raises(UnknownSessionError):
            pa_session(pa, TEARDOWN, "User1", "res")

    def test_unknown_operation(self, pa):
        with pytest.raises(SessionError):
            pa_session(pa, "suspend", "User1", "res")
