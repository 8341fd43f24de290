"""
Canonical JSON and JSON-lines helpers.
Keys are sorted and separators fixed so equal payloads serialize to identical bytes.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def canonical_dumps(payload: Any, indent: Union[int, None] = None) -> str:
    """Serialize with sorted keys; floats use the shortest round-trip repr."""
    if indent is None:
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return json.dumps(payload, sort_keys=True, indent=indent, ensure_ascii=False)


def dumps_lines(records: Iterable[Dict[str, Any]]) -> str:
    return "".join(canonical_dumps(record) + "\n" for record in records)


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    """
    Write records as JSON lines.

    Returns:
        int: Number of records written
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(canonical_dumps(record) + "\n")
            count += 1
    logger.debug(f"Wrote {count} JSONL records to {path}")
    return count


def iter_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    return list(iter_jsonl(path))
