import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from yosida_fde import load_bundled, pipeline

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class _ScenarioCache:
    def __init__(self):
        self._runs = {}

    def config(self, name):
        return load_bundled(name)

    def run(self, name):
        if name not in self._runs:
            cfg = load_bundled(name)
            self._runs[name] = (cfg, pipeline.solve(cfg))
        return self._runs[name]


@pytest.fixture(scope="session")
def scenarios():
    """Bundled scenarios, each solved at most once per session."""
    return _ScenarioCache()
