import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

SRC = Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_recording():
    """Three-lane synthetic recording shared by read-only tests."""
    from driveclone.data import SynthConfig, synth_traffic

    return synth_traffic(SynthConfig(n_vehicles=12, n_lanes=3, duration_s=20.0, seed=11))


@pytest.fixture(scope="session")
def dense_recording():
    """Dense traffic used by the adversarial trainers."""
    from driveclone.data import SynthConfig, synth_traffic

    return synth_traffic(SynthConfig(n_vehicles=40, n_lanes=3, duration_s=60.0, seed=7))
