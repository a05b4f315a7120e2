import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from map_vlc.config import build_system, load_system, merged_config  # noqa: E402

# Small arrays and a short optimizer schedule; same physics as the defaults.
SMALL = {
    "ris": {"rows": 2, "cols": 6},
    "optimizer": {"population": 10, "iterations": 15},
    "scenario": {"slots": 3},
    "experiment": {
        "instances": 3,
        "master_seed": 5,
        "power_values": [0.5, 1.0],
        "blocker_values": [1, 4],
        "grid_resolutions": [2, 3],
    },
}


@pytest.fixture
def default_system():
    return build_system(merged_config())


@pytest.fixture
def small_system():
    return load_system(override=SMALL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
