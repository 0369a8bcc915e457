import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from artigraph.geometry import Pose


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, scale=1.0):
    q = rng.normal(size=4)
    return Pose(position=rng.normal(scale=scale, size=3), quaternion=q / np.linalg.norm(q))
