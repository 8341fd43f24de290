"""
Shared fixtures.
"""
import pytest

from ztlearn.schemas import SearchConfig, SyntheticConfig
from ztlearn.services.dataset import generate_synthetic, learning_view, write_csv
from ztlearn.services.structure_learning import hill_climb


@pytest.fixture(scope="session")
def synthetic_log():
    """33-row log over the illustrative domains, with ground truth."""
    return generate_synthetic(1, SyntheticConfig())


@pytest.fixture(scope="session")
def large_log():
    return generate_synthetic(3, SyntheticConfig(rows=600))


@pytest.fixture(scope="session")
def trained_model(large_log):
    """Hill-climbed model on 600 synthetic rows with a planted source_port=52415 fraud pattern."""
    dataset, _ = large_log
    net, report, trace = hill_climb(learning_view(dataset), SearchConfig(seed=0))
    return net


@pytest.fixture
def log_csv(tmp_path, synthetic_log):
    path = tmp_path / "log.csv"
    write_csv(synthetic_log[0], path)
    return path
