import os
from pathlib import Path

import pytest

from bigrad.data import write_mnist_sample

ROOT = Path(__file__).resolve().parents[1]

# Filled by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_LOG: list[str] = []


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """IDX files for the 5,000-digit MNIST sample (4,000 train / 1,000 t10k)."""
    pytest.importorskip("mlxtend")
    directory = tmp_path_factory.mktemp("mnist")
    write_mnist_sample(directory, n_validation=1000, seed=0)
    return directory


@pytest.fixture(scope="session")
def artifact_dir():
    directory = Path(os.environ.get("BIGRAD_ARTIFACTS", ROOT / "acceptance_artifacts"))
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
