"""
Time utilities for epoch timestamps in activity logs and simulated clocks.
"""
from datetime import datetime
from typing import Optional, Sequence
from zoneinfo import ZoneInfo

from ztlearn.config import get_settings

settings = get_settings()

MS_PER_SECOND = 1000.0


def get_timezone(timezone_str: Optional[str] = None) -> ZoneInfo:
    """
    Get timezone object used for bucketing timestamps.

    Args:
        timezone_str: Timezone string (e.g., "UTC", "Europe/Vienna")

    Returns:
        ZoneInfo: Timezone object
    """
    return ZoneInfo(timezone_str or settings.timestamp_timezone)


def from_epoch(epoch_seconds: int, timezone_str: Optional[str] = None) -> datetime:
    """Convert epoch seconds to an aware datetime in the given timezone."""
    return datetime.fromtimestamp(int(epoch_seconds), tz=get_timezone(timezone_str))


def hour_of_day_label(epoch_seconds: int, timezone_str: Optional[str] = None) -> str:
    """
    Two-digit hour label of an epoch timestamp.

    Args:
        epoch_seconds: Seconds since the Unix epoch
        timezone_str: Timezone used for the wall-clock hour

    Returns:
        str: "00" .. "23"
    """
    return f"{from_epoch(epoch_seconds, timezone_str).hour:02d}"


def validate_bucket_edges(edges: Sequence[int]) -> None:
    """Raise ValueError unless edges are non-empty and strictly increasing."""
    if not edges:
        raise ValueError("bucket edges cannot be empty")
    for left, right in zip(edges, edges[1:]):
        if right <= left:
            raise ValueError(f"bucket edges must be strictly increasing: {left} then {right}")


def bucket_label(value: int, edges: Sequence[int]) -> str:
    """
    Label of the half-open bucket [edge_i, edge_i+1) containing value.

    Values below the first edge fall in "<first"; values at or above the last
    edge fall in the overflow bucket "≥last".
    """
    if value < edges[0]:
        return f"<{edges[0]}"
    for left, right in zip(edges, edges[1:]):
        if left <= value < right:
            return f"{left}-{right}"
    return f"≥{edges[-1]}"


def ms_to_seconds(ms: float) -> float:
    return ms / MS_PER_SECOND
