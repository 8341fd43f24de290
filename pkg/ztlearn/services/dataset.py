"""
Activity-log ingestion, schema derivation, timestamp treatment and synthetic generation.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ztlearn.models import (
    ACTION, ACTION_CATEGORIES, ALLOWED, BLOCKED, LOG_ATTRIBUTES, TIMESTAMP,
    Dataset, GroundTruth, TimestampPolicyKind, Variable, VariableSchema, ZtError,
)
from ztlearn.schemas import SyntheticConfig, TimestampPolicy
from ztlearn.utils.jsonl import read_jsonl, write_jsonl as write_jsonl_records
from ztlearn.utils.time import bucket_label, hour_of_day_label

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ACTION_ALIASES = {"allowed": ALLOWED, "1": ALLOWED, "blocked": BLOCKED, "0": BLOCKED}


class DatasetError(ZtError):
    """Exception raised when a dataset cannot be built or transformed."""
    pass


class SchemaError(DatasetError):
    """Raised when a required column is missing."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"missing column '{column}'")


class RowError(DatasetError):
    """Raised when a row cannot be parsed; line numbers are 1-based file lines."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def build_schema(table: Union[pd.DataFrame, Mapping[str, Sequence[Any]]]) -> VariableSchema:
    """
    Derive one categorical variable per column of a raw string table.

    Categories are the distinct observed labels sorted lexicographically.

    Raises:
        DatasetError: If the table has no rows or no columns
    """
    frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(dict(table))
    if frame.empty or len(frame.columns) == 0:
        raise DatasetError("cannot build a schema from an empty table")
    return VariableSchema(tuple(
        Variable(str(name), tuple(sorted(set(frame[name].astype(str)))))
        for name in frame.columns
    ))


def _normalize_action(frame: pd.DataFrame, first_line: int) -> pd.Series:
    normalized = frame[ACTION].str.strip().str.lower().map(ACTION_ALIASES)
    bad = normalized.isna()
    if bad.any():
        pos = int(np.flatnonzero(bad.to_numpy())[0])
        raise RowError(first_line + pos, f"unparsable action value '{frame[ACTION].iloc[pos]}'")
    return normalized


def _frame_to_dataset(frame: pd.DataFrame, first_line: int) -> Dataset:
    """Validate a nine-attribute string frame and index-encode it."""
    frame = frame.astype(str).apply(lambda col: col.str.strip())
    empty = (frame == "").to_numpy()
    if empty.any():
        row, col = (int(x) for x in np.argwhere(empty)[0])
        raise RowError(first_line + row, f"missing value for '{frame.columns[col]}'")
    frame = frame.assign(**{ACTION: _normalize_action(frame, first_line)})

    schema = build_schema(frame.drop(columns=[ACTION]))
    schema = VariableSchema(schema.variables + (Variable(ACTION, ACTION_CATEGORIES),))
    data = np.column_stack([
        pd.Categorical(frame[var.name], categories=list(var.categories)).codes
        for var in schema.variables
    ]).astype(np.int64)
    return Dataset(schema, data)


def _canonical_columns(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.rename(columns=lambda c: str(c).strip().lower())
    for column in LOG_ATTRIBUTES:
        if column not in frame.columns:
            raise SchemaError(column)
    extra = [c for c in frame.columns if c not in LOG_ATTRIBUTES]
    if extra:
        logger.warning(f"Ignoring extra log columns: {', '.join(extra)}")
    return frame[list(LOG_ATTRIBUTES)]


def load_csv(path: PathLike, delimiter: str = ",", header: bool = True) -> Dataset:
    """
    Load an activity-log CSV.

    Args:
        path: CSV file path
        delimiter: Field separator
        header: Whether the first line names the columns (case-insensitive, any order);
            without a header the canonical column order is assumed

    Returns:
        Dataset: Rows in file order with a schema derived from observed values

    Raises:
        SchemaError: If one of the nine attributes is missing
        RowError: If a row has an empty cell or an unparsable action
    """
    try:
        frame = pd.read_csv(
            path, sep=delimiter, dtype=str, keep_default_na=False,
            header=0 if header else None,
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} is empty") from None
    if not header:
        if len(frame.columns) != len(LOG_ATTRIBUTES):
            raise DatasetError(f"expected {len(LOG_ATTRIBUTES)} columns, found {len(frame.columns)}")
        frame.columns = list(LOG_ATTRIBUTES)
    frame = _canonical_columns(frame)
    dataset = _frame_to_dataset(frame, first_line=2 if header else 1)
    logger.info(f"Loaded {dataset.N} log rows from {path}")
    return dataset


def load_jsonl(path: PathLike) -> Dataset:
    """Load an activity log stored as one JSON object per line with the CSV field names."""
    records = read_jsonl(path)
    if not records:
        raise DatasetError(f"{path} contains no records")
    frame = _canonical_columns(pd.DataFrame.from_records(records).fillna(""))
    dataset = _frame_to_dataset(frame, first_line=1)
    logger.info(f"Loaded {dataset.N} log rows from {path}")
    return dataset


def load_table(path: PathLike, delimiter: str = ",") -> Dataset:
    """
    Load any categorical CSV with a header; every column becomes a variable.

    An "action" column, when present, is normalised like the activity log's.
    """
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} is empty") from None
    frame = frame.rename(columns=lambda c: str(c).strip().lower())
    frame = frame.astype(str).apply(lambda col: col.str.strip())
    if frame.empty:
        raise DatasetError(f"{path} has no rows")
    empty = (frame == "").to_numpy()
    if empty.any():
        row, col = (int(x) for x in np.argwhere(empty)[0])
        raise RowError(2 + row, f"missing value for '{frame.columns[col]}'")
    if ACTION in frame.columns:
        frame = frame.assign(**{ACTION: _normalize_action(frame, 2)})
    schema = build_schema(frame)
    if ACTION in frame.columns:
        schema = schema.replace(Variable(ACTION, ACTION_CATEGORIES))
    data = np.column_stack([
        pd.Categorical(frame[var.name], categories=list(var.categories)).codes
        for var in schema.variables
    ]).astype(np.int64)
    dataset = Dataset(schema, data)
    logger.info(f"Loaded {dataset.N} rows over {len(schema)} variables from {path}")
    return dataset


def load_log(path: PathLike) -> Dataset:
    """Dispatch on extension: .jsonl / .ndjson as JSON lines, anything else as CSV."""
    if str(path).lower().endswith((".jsonl", ".ndjson")):
        return load_jsonl(path)
    return load_csv(path)


def to_frame(dataset: Dataset) -> pd.DataFrame:
    """Decoded label table in schema column order."""
    return pd.DataFrame.from_records(dataset.records(), columns=list(dataset.schema.names))


def write_csv(dataset: Dataset, path: PathLike) -> None:
    to_frame(dataset).to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {dataset.N} rows to {path}")


def write_jsonl(dataset: Dataset, path: PathLike) -> None:
    write_jsonl_records(path, dataset.records())


def timestamp_policy(dataset: Dataset, policy: Union[TimestampPolicy, str, None] = None) -> Dataset:
    """
    Drop the timestamp column or replace it with a categorical bucket variable.

    Args:
        dataset: Dataset containing a "timestamp" variable with epoch-second labels
        policy: TimestampPolicy, or the kind name ("drop", "hour_of_day")

    Returns:
        Dataset: Transformed dataset; bucket categories are observed labels, sorted
    """
    if policy is None:
        policy = TimestampPolicy()
    elif isinstance(policy, str):
        policy = TimestampPolicy(kind=TimestampPolicyKind(policy))
    if TIMESTAMP not in dataset.schema:
        raise DatasetError("dataset has no timestamp column")

    if policy.kind == TimestampPolicyKind.DROP:
        return dataset.drop(TIMESTAMP)

    old = dataset.schema.variable(TIMESTAMP)
    try:
        epochs = [int(label) for label in old.categories]
    except ValueError as e:
        raise DatasetError(f"timestamp labels must be epoch seconds: {e}") from e

    if policy.kind == TimestampPolicyKind.HOUR_OF_DAY:
        mapped = [hour_of_day_label(ts) for ts in epochs]
    else:
        mapped = [bucket_label(ts, policy.edges) for ts in epochs]

    column = dataset.column(TIMESTAMP)
    observed = sorted({mapped[code] for code in np.unique(column)})
    code_of = {label: i for i, label in enumerate(observed)}
    remap = np.array([code_of.get(label, -1) for label in mapped], dtype=np.int64)

    schema = dataset.schema.replace(Variable(TIMESTAMP, tuple(observed)))
    data = np.array(dataset.data, copy=True)
    data[:, dataset.schema.index_of(TIMESTAMP)] = remap[column]
    return Dataset(schema, data)


def domain_order(config: SyntheticConfig) -> List[str]:
    """Configured attributes in canonical log order, then any extras by name."""
    known = [name for name in LOG_ATTRIBUTES if name in config.domains]
    return known + sorted(name for name in config.domains if name not in LOG_ATTRIBUTES)


def sorted_domains(config: SyntheticConfig) -> Dict[str, List[str]]:
    return {name: sorted(config.domains[name]) for name in domain_order(config)}


def draw_labels(rng: np.random.Generator, config: SyntheticConfig, n: int) -> np.ndarray:
    """Boolean fraud flags, one per row."""
    return rng.random(n) < config.fraud_fraction


def draw_records(rng: np.random.Generator, config: SyntheticConfig,
                 fraudulent: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Draw attribute codes and action codes for labelled rows.

    Fraudulent rows carry every fraud-pattern value; benign rows never match
    the full pattern. Codes index the lexicographically sorted domains.

    Returns:
        Tuple of (column codes per attribute, action codes with 1 = allowed)
    """
    n = len(fraudulent)
    domains = sorted_domains(config)
    columns = {name: rng.integers(len(values), size=n) for name, values in domains.items()}

    pattern = {name: domains[name].index(value) for name, value in config.fraud_pattern.items()}
    for name, code in pattern.items():
        columns[name][fraudulent] = code

    if pattern:
        matches = ~fraudulent
        for name, code in pattern.items():
            matches &= columns[name] == code
        first = next(name for name in domains if name in pattern)
        card = len(domains[first])
        if card > 1:
            shift = rng.integers(1, card, size=int(matches.sum()))
            columns[first][matches] = (pattern[first] + shift) % card
        elif matches.any():
            logger.warning(f"Fraud pattern on single-valued '{first}' cannot be avoided by benign rows")

    u_fraud = rng.random(n)
    u_allow = rng.random(n)
    allowed = u_allow < config.benign_allow_rate
    allowed = np.where(fraudulent & (u_fraud < config.fraud_strength), False, allowed)
    return columns, allowed.astype(np.int64)


def _ensure_coverage(rng: np.random.Generator, config: SyntheticConfig,
                     columns: Dict[str, np.ndarray], fraudulent: np.ndarray) -> None:
    """Reassign cells so every domain value occurs at least once where the pattern allows."""
    domains = sorted_domains(config)
    pattern = {name: domains[name].index(value) for name, value in config.fraud_pattern.items()}
    n = len(fraudulent)
    for name, values in domains.items():
        column = columns[name]
        counts = np.bincount(column, minlength=len(values))
        for code in np.flatnonzero(counts == 0):
            for i in rng.permutation(n):
                if counts[column[i]] <= 1:
                    continue
                if name in pattern:
                    if fraudulent[i]:
                        continue
                    others_match = all(columns[p][i] == c for p, c in pattern.items() if p != name)
                    if others_match and code == pattern[name]:
                        continue
                counts[column[i]] -= 1
                column[i] = code
                counts[code] += 1
                break


def observed_only(dataset: Dataset) -> Dataset:
    """Drop categories no row uses; the action variable keeps its fixed pair."""
    variables = []
    columns = []
    for j, var in enumerate(dataset.schema.variables):
        column = dataset.data[:, j]
        if var.name == ACTION:
            variables.append(var)
            columns.append(column)
            continue
        used = np.unique(column)
        variables.append(Variable(var.name, tuple(var.categories[int(c)] for c in used)))
        columns.append(np.searchsorted(used, column).astype(np.int64))
    return Dataset(VariableSchema(tuple(variables)), np.column_stack(columns))


def generate_synthetic(seed: int, config: SyntheticConfig,
                       full_domains: bool = False) -> Tuple[Dataset, List[GroundTruth]]:
    """
    Generate a seeded activity log with a planted fraud pattern.

    Args:
        seed: Random seed; output is a pure function of (seed, config)
        config: Domains, row count and fraud pattern
        full_domains: Keep every configured value as a category even when no
            row uses it. Off by default so the log matches what load_csv reads back.

    Returns:
        Tuple of (Dataset, per-row ground truth)
    """
    rng = np.random.default_rng(seed)
    n = config.rows
    fraudulent = draw_labels(rng, config, n)
    columns, actions = draw_records(rng, config, fraudulent)
    _ensure_coverage(rng, config, columns, fraudulent)

    gaps = rng.integers(1, config.max_gap_seconds + 1, size=n)
    epochs = config.start_epoch + np.cumsum(gaps)
    epoch_labels = sorted({str(int(ts)) for ts in epochs})
    epoch_code = {label: i for i, label in enumerate(epoch_labels)}

    domains = sorted_domains(config)
    variables = [Variable(TIMESTAMP, tuple(epoch_labels))]
    variables += [Variable(name, tuple(values)) for name, values in domains.items()]
    variables.append(Variable(ACTION, ACTION_CATEGORIES))

    data = np.column_stack(
        [np.array([epoch_code[str(int(ts))] for ts in epochs], dtype=np.int64)]
        + [columns[name] for name in domains]
        + [actions]
    )
    labels = [GroundTruth.FRAUDULENT if flag else GroundTruth.BENIGN for flag in fraudulent]
    dataset = Dataset(VariableSchema(tuple(variables)), data)
    if not full_domains:
        dataset = observed_only(dataset)
    logger.info(
        f"Generated {n} synthetic rows (seed={seed}, fraudulent={int(fraudulent.sum())})"
    )
    return dataset, labels


def learning_view(dataset: Dataset, policy: Optional[TimestampPolicy] = None) -> Dataset:
    """Apply the timestamp policy when the dataset still carries a raw timestamp."""
    if TIMESTAMP not in dataset.schema:
        return dataset
    return timestamp_policy(dataset, policy)
