import logging
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synthetic(tmp_path_factory):
    from meintensity.pipeline import SyntheticSpec, generate_synthetic

    out = tmp_path_factory.mktemp("synth_small")
    return generate_synthetic(SyntheticSpec(n_clips=12, n_subjects=4, min_frames=16, max_frames=32), out, seed=3)


def pytest_terminal_summary(terminalreporter):
    results = []
    for name, module in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            results = getattr(module, "RESULTS", [])
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(results):
            terminalreporter.write_line(line)
