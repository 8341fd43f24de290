"""
Policy Administrator session ledger.
Establishes and shuts down subject-resource communication paths after an
allowing verdict, and tracks autonomous allows awaiting a PDP audit.
"""
import logging
import threading
from typing import Dict, List, Optional

from ztlearn.models import Verdict, ZtError
from ztlearn.schemas import SessionRecord

logger = logging.getLogger(__name__)

ESTABLISH = "establish"
TEARDOWN = "teardown"
REVOKED = "revoked"
AUDIT_DENIED = "audit_denied"


class SessionError(ZtError):
    """Exception raised when a session operation is not permitted."""
    pass


class SessionPreconditionError(SessionError):
    """Raised when a session is requested without an allowing verdict."""
    pass


class UnknownSessionError(SessionError):
    """Raised when a session id (or subject-resource pair) has no open session."""
    pass


class PolicyAdministrator:
    """
    Append-only session ledger with serialized writes.

    Every change is appended to the event log; records are replaced, never edited.
    """

    def __init__(self, id_prefix: str = "s"):
        self.id_prefix = id_prefix
        self._records: Dict[str, SessionRecord] = {}
        self._events: List[Dict[str, object]] = []
        self._lock = threading.Lock()

    def _append(self, record: SessionRecord, op: str, time: float) -> SessionRecord:
        self._records[record.session_id] = record
        self._events.append({
            "op": op, "session_id": record.session_id, "time": time, "reason": record.reason,
        })
        return record

    def establish(self, request_id: str, subject: str, resource: str, verdict: Verdict,
                  time: float = 0.0, audit_pending: Optional[bool] = None) -> SessionRecord:
        """
        Open a session for an allowed request.

        Args:
            request_id: Request that was allowed
            subject: Requesting identity
            resource: Target resource
            verdict: Terminal verdict; must be PdpAllowed or AllowedAutonomous
            time: Simulated or wall-clock time of the grant
            audit_pending: Defaults to True for autonomous allows

        Raises:
            SessionPreconditionError: If the verdict does not allow access
        """
        verdict = Verdict(verdict)
        if not verdict.allows:
            raise SessionPreconditionError(
                f"cannot establish a session for request {request_id} with verdict {verdict.value}"
            )
        if audit_pending is None:
            audit_pending = verdict == Verdict.ALLOWED_AUTONOMOUS
        with self._lock:
            session_id = f"{self.id_prefix}-{len(self._records) + 1:06d}"
            record = SessionRecord(
                session_id=session_id, request_id=request_id, subject=subject,
                resource=resource, opened_at=time, verdict=verdict, audit_pending=audit_pending,
            )
            self._append(record, ESTABLISH, time)
        logger.debug(f"Established {session_id}: {subject} -> {resource}")
        return record

    def _close(self, session_id: str, time: float, reason: str, op: str) -> SessionRecord:
        with self._lock:
            record = self._records.get(session_id)
            if record is None:
                raise UnknownSessionError(f"unknown session '{session_id}'")
            if not record.is_open:
                raise SessionError(f"session '{session_id}' is already closed")
            closed = record.model_copy(update={"closed_at": time, "reason": reason})
            return self._append(closed, op, time)

    def teardown(self, session_id: str, time: float = 0.0) -> SessionRecord:
        record = self._close(session_id, time, TEARDOWN, TEARDOWN)
        logger.debug(f"Tore down {session_id} at {time}")
        return record

    def revoke(self, session_id: str, time: float = 0.0, reason: str = REVOKED) -> SessionRecord:
        record = self._close(session_id, time, reason, "revoke")
        logger.info(f"Revoked {session_id} at {time}: {reason}")
        return record

    def find_open(self, subject: str, resource: str) -> SessionRecord:
        """Most recent open session between a subject and a resource."""
        with self._lock:
            for record in reversed(list(self._records.values())):
                if record.is_open and record.subject == subject and record.resource == resource:
                    return record
        raise UnknownSessionError(f"no open session for {subject} -> {resource}")

    def pending_audits(self) -> List[SessionRecord]:
        with self._lock:
            return [r for r in self._records.values() if r.audit_pending]

    def resolve_audit(self, session_id: str, verdict: Verdict, time: float = 0.0) -> SessionRecord:
        """
        Record the PDP's retroactive verdict on an autonomous allow.

        A denied audit revokes the session if it is still open.
        """
        verdict = Verdict(verdict)
        with self._lock:
            record = self._records.get(session_id)
            if record is None:
                raise UnknownSessionError(f"unknown session '{session_id}'")
            audited = record.model_copy(update={"audit_pending": False})
            self._append(audited, "audit", time)
        if verdict == Verdict.PDP_DENIED and audited.is_open:
            return self.revoke(session_id, time, AUDIT_DENIED)
        return audited

    def get(self, session_id: str) -> SessionRecord:
        try:
            return self._records[session_id]
        except KeyError:
            raise UnknownSessionError(f"unknown session '{session_id}'") from None

    def sessions(self) -> List[SessionRecord]:
        with self._lock:
            return list(self._records.values())

    def open_sessions(self) -> List[SessionRecord]:
        return [r for r in self.sessions() if r.is_open]

    def events_since(self, start: int = 0) -> List[Dict[str, object]]:
        """Ledger events from position start onwards, in append order."""
        with self._lock:
            return self._events[start:]


def pa_session(pa: PolicyAdministrator, op: str, subject: str, resource: str,
               verdict: Optional[Verdict] = None, request_id: str = "",
               time: float = 0.0) -> SessionRecord:
    """
    Establish or tear down the communication path between a subject and a resource.

    Raises:
        SessionPreconditionError: If establishing without an allowing verdict
        UnknownSessionError: If tearing down a path with no open session
    """
    if op == ESTABLISH:
        if verdict is None:
            raise SessionPreconditionError("establishing a session requires a verdict")
        return pa.establish(request_id, subject, resource, verdict, time)
    if op == TEARDOWN:
        return pa.teardown(pa.find_open(subject, resource).session_id, time)
    raise SessionError(f"unknown session operation '{op}'")
