import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from s3mnet.config import load_config
from s3mnet.synthgen import DatasetConfig, SceneConfig, generate_dataset

DESK_PRESET = Path(__file__).parent.parent / "configs" / "desk.cfg"

# Registry filled by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {status} ({detail})")


def desk_full_config(seed=0, alpha=0.1, iterations=5000):
    """The shipped desk preset, with only seed/alpha/cadence knobs turned."""
    config = load_config(DESK_PRESET)
    config.train.seed = seed
    config.train.iterations = iterations
    config.train.loss.alpha = alpha
    config.train.checkpoint_every = 0
    config.train.log_every = 50
    return config


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """Eight 128x64 synthetic scenes, the desk-scale preset's training data."""
    root = tmp_path_factory.mktemp("desk_data")
    generate_dataset(desk_full_config().dataset_config(), root)
    return root


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Four small scenes for fast I/O and pipeline tests."""
    root = tmp_path_factory.mktemp("tiny_data")
    scene = SceneConfig(
        width=64,
        height=32,
        layer_count=2,
        disparity_range=(4, 10),
        background_disparity=2,
        class_palette_size=4,
        seed=7,
    )
    generate_dataset(DatasetConfig(scene=scene, n_samples=4, val_fraction=0.25), root)
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
