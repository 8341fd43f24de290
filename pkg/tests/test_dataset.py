"""
Tests for activity-log ingestion, timestamp treatment and synthetic generation.
"""
import numpy as np
import pytest

from ztlearn.models import (
    ACTION, ACTION_CATEGORIES, LOG_ATTRIBUTES, TIMESTAMP, GroundTruth, TimestampPolicyKind,
)
from ztlearn.schemas import ILLUSTRATIVE_DOMAINS, SyntheticConfig, TimestampPolicy
from ztlearn.services.dataset import (
    DatasetError, RowError, SchemaError, build_schema, generate_synthetic, load_csv, load_jsonl,
    load_log, load_table, timestamp_policy, to_frame, write_csv, write_jsonl,
)
from ztlearn.utils.time import bucket_label, hour_of_day_label

HEADER = ",".join(LOG_ATTRIBUTES)
ROW = "1672531260,192.168.1.10,10.0.0.1,443,443,HTTPS,User1,Web Browser,allowed"


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadCsv:
    def test_round_trip_preserves_rows(self, tmp_path, synthetic_log):
        dataset, _ = synthetic_log
        path = tmp_path / "log.csv"
        write_csv(dataset, path)
        loaded = load_csv(path)
        assert loaded.records() == dataset.records()

    @pytest.mark.parametrize("rows", [1, 4, 33])
    def test_round_trip_reproduces_synthetic_log_exactly(self, tmp_path, rows):
        dataset, _ = generate_synthetic(1, SyntheticConfig(rows=rows))
        path = tmp_path / "log.csv"
        write_csv(dataset, path)
        assert load_csv(path) == dataset

    def test_jsonl_matches_csv(self, tmp_path, synthetic_log):
        dataset, _ = synthetic_log
        write_jsonl(dataset, tmp_path / "log.jsonl")
        write_csv(dataset, tmp_path / "log.csv")
        assert load_log(tmp_path / "log.jsonl") == load_log(tmp_path / "log.csv")

    def test_column_order_and_case_do_not_matter(self, tmp_path):
        header = ",".join(reversed([c.upper() for c in LOG_ATTRIBUTES]))
        row = ",".join(reversed(ROW.split(",")))
        loaded = load_csv(write_lines(tmp_path / "log.csv", [header, row]))
        assert loaded.schema.names == LOG_ATTRIBUTES
        assert loaded.records()[0]["source_port"] == "443"

    def test_missing_column_names_the_column(self, tmp_path):
        header = HEADER.replace(",protocol", "")
        row = ROW.replace(",HTTPS", "")
        with pytest.raises(SchemaError) as excinfo:
            load_csv(write_lines(tmp_path / "log.csv", [header, row]))
        assert excinfo.value.column == "protocol"
        assert "protocol" in str(excinfo.value)

    def test_unparsable_action_reports_line(self, tmp_path):
        bad = ROW.replace("allowed", "maybe")
        with pytest.raises(RowError) as excinfo:
            load_csv(write_lines(tmp_path / "log.csv", [HEADER, ROW, bad]))
        assert excinfo.value.line == 3

    def test_empty_cell_is_rejected(self, tmp_path):
        bad = ROW.replace("User1", "")
        with pytest.raises(RowError):
            load_csv(write_lines(tmp_path / "log.csv", [HEADER, bad]))

    @pytest.mark.parametrize("raw,expected", [("1", "allowed"), ("0", "blocked"), ("Allowed", "allowed")])
    def test_action_aliases(self, tmp_path, raw, expected):
        row = ROW.replace("allowed", raw)
        loaded = load_csv(write_lines(tmp_path / "log.csv", [HEADER, row]))
        assert loaded.records()[0][ACTION] == expected
        assert loaded.schema.variable(ACTION).categories == ACTION_CATEGORIES

    def test_empty_file_is_a_dataset_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetError):
            load_csv(path)

    def test_header_only_is_a_dataset_error(self, tmp_path):
        with pytest.raises(DatasetError):
            load_csv(write_lines(tmp_path / "log.csv", [HEADER]))

    def test_jsonl_without_records(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetError):
            load_jsonl(path)


def test_build_schema_sorts_categories():
    schema = build_schema({"protocol": ["SSH", "HTTPS", "SSH"], "port": ["443", "22", "8443"]})
    assert schema.variable("protocol").categories == ("HTTPS", "SSH")
    assert schema.variable("port").categories == ("22", "443", "8443")


def test_build_schema_rejects_empty_table():
    with pytest.raises(DatasetError):
        build_schema({})


def test_load_table_reads_any_categorical_csv(tmp_path):
    path = write_lines(tmp_path / "t.csv", ["a,b,action", "x,1,1", "y,2,0", "x,2,allowed"])
    dataset = load_table(path)
    assert dataset.schema.names == ("a", "b", ACTION)
    assert dataset.N == 3
    assert list(dataset.column(ACTION)) == [1, 0, 1]


class TestTimestampPolicy:
    def test_drop_removes_column(self, synthetic_log):
        dataset, _ = synthetic_log
        dropped = timestamp_policy(dataset, "drop")
        assert TIMESTAMP not in dropped.schema
        assert len(dropped.schema) == len(dataset.schema) - 1

    def test_hour_of_day_labels(self, synthetic_log):
        dataset, _ = synthetic_log
        view = timestamp_policy(dataset, TimestampPolicy(kind=TimestampPolicyKind.HOUR_OF_DAY))
        labels = view.schema.variable(TIMESTAMP).categories
        assert all(len(label) == 2 and label.isdigit() for label in labels)
        assert list(labels) == sorted(labels)

    def test_buckets_with_overflow(self, synthetic_log):
        dataset, _ = synthetic_log
        edges = [1672531200, 1672532000]
        view = timestamp_policy(dataset, TimestampPolicy(kind=TimestampPolicyKind.BUCKETS, edges=edges))
        assert set(view.schema.variable(TIMESTAMP).categories) <= {
            "<1672531200", "1672531200-1672532000", "≥1672532000",
        }

    def test_bucket_edges_must_increase(self):
        with pytest.raises(ValueError):
            TimestampPolicy(kind=TimestampPolicyKind.BUCKETS, edges=[5, 5])

    def test_label_boundaries(self):
        assert hour_of_day_label(0, "UTC") == "00"
        assert bucket_label(150, [0, 100]) == "≥100"
        assert bucket_label(100, [0, 100]) == "≥100"
        assert bucket_label(99, [0, 100]) == "0-100"


class TestSynthetic:
    def test_same_seed_same_log(self):
        a, labels_a = generate_synthetic(11, SyntheticConfig())
        b, labels_b = generate_synthetic(11, SyntheticConfig())
        assert a == b
        assert labels_a == labels_b

    def test_different_seed_differs(self):
        a, _ = generate_synthetic(11, SyntheticConfig())
        b, _ = generate_synthetic(12, SyntheticConfig())
        assert a != b

    @pytest.mark.parametrize("seed", range(5))
    def test_thirty_three_rows_cover_illustrative_cardinalities(self, seed):
        dataset, labels = generate_synthetic(seed, SyntheticConfig(rows=33))
        assert dataset.N == 33
        assert len(labels) == 33
        for name, values in ILLUSTRATIVE_DOMAINS.items():
            assert dataset.schema.variable(name).cardinality == len(values)

    def test_fraud_rows_carry_pattern_and_benign_rows_never_do(self, large_log):
        dataset, labels = large_log
        frame = to_frame(dataset)
        fraud = np.array([label == GroundTruth.FRAUDULENT for label in labels])
        assert (frame["source_port"][fraud] == "52415").all()
        assert (frame["source_port"][~fraud] != "52415").all()

    def test_full_strength_fraud_is_always_blocked(self, large_log):
        dataset, labels = large_log
        frame = to_frame(dataset)
        fraud = np.array([label == GroundTruth.FRAUDULENT for label in labels])
        assert (frame[ACTION][fraud] == "blocked").all()

    def test_fraud_fraction_one_labels_everything(self):
        _, labels = generate_synthetic(0, SyntheticConfig(rows=50, fraud_fraction=1.0))
        assert set(labels) == {GroundTruth.FRAUDULENT}

    def test_rows_must_be_positive(self):
        with pytest.raises(ValueError):
            SyntheticConfig(rows=0)

    def test_pattern_must_reference_known_values(self):
        with pytest.raises(ValueError):
            SyntheticConfig(fraud_pattern={"source_port": "99999"})


def test_small_synthetic_log_declares_only_observed_values():
    dataset, _ = generate_synthetic(1, SyntheticConfig(rows=4))
    for var in dataset.schema.variables:
        if var.name == ACTION:
            assert var.categories == ACTION_CATEGORIES
            continue
        assert set(np.unique(dataset.column(var.name))) == set(range(var.cardinality))


def test_full_domains_keep_unobserved_values():
    dataset, _ = generate_synthetic(1, SyntheticConfig(rows=4), full_domains=True)
    for name, values in ILLUSTRATIVE_DOMAINS.items():
        assert dataset.schema.variable(name).categories == tuple(sorted(values))
