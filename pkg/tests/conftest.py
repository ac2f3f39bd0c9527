import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from measkick import SystemParams

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FROZEN_PATH = Path(__file__).parent / "oracles" / "frozen.json"


@pytest.fixture(scope="session")
def frozen():
    return json.loads(FROZEN_PATH.read_text())


@pytest.fixture(scope="session")
def ref_params(frozen):
    f = frozen["ref_params"]
    return SystemParams(f["R"], f["v"], complex(*f["z0"]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_params(rng, v_max=2.0, z_max=2.0, **kw):
    """A random parameter draw with |z0| <= z_max."""
    r = rng.uniform(0.02, 0.98)
    v = rng.uniform(0.0, v_max)
    rad = z_max * np.sqrt(rng.uniform())
    ang = rng.uniform(0, 2 * np.pi)
    return SystemParams(r, v, complex(rad * np.cos(ang), rad * np.sin(ang)), **kw)
