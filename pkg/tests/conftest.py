import numpy as np
import pytest

from depthfeat.config import parse_config
from depthfeat.synthscene import DatasetSpec, generate_dataset


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """A small rendered dataset shared by the training and CLI tests."""
    root = tmp_path_factory.mktemp("data")
    generate_dataset(DatasetSpec(train_scenes=2, val_scenes=1, height=32, width=48, frames=4, seed=3), root,
                     overwrite=True)
    return root


TINY_LINES = ("data.height=32", "data.width=48", "data.frames=4", "data.train_scenes=2",
              "data.val_scenes=1", "data.seed=3", "train.lr=1e-3", "train.n_features=8",
              "mining.max_positives=200")


@pytest.fixture
def make_config(tiny_data):
    def make(*extra):
        return parse_config("\n".join((f"paths.data={tiny_data}",) + TINY_LINES + extra))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance criteria report one line each; they are repeated after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
