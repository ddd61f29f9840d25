import os

import pytest
from fractions import Fraction

import holecert as hc


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Session cache directory; HOLECERT_TEST_CACHE persists across runs."""
    env = os.environ.get("HOLECERT_TEST_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("holecert-cache"))


@pytest.fixture(scope="session")
def pipeline_cache(cache_dir):
    return hc.PipelineCache(cache_dir)


@pytest.fixture(scope="session")
def bundled_map():
    return hc.load_map(hc.bundled_map_path())


@pytest.fixture(scope="session")
def shift10():
    return hc.full_branch_linear(10)


@pytest.fixture(scope="session")
def doubling():
    return hc.full_branch_linear(2, label="doubling")


@pytest.fixture(scope="session")
def bundled_spectral_5000(bundled_map, pipeline_cache):
    """Spectral record of the bundled map at mesh 2e-4 (heavy, shared)."""
    return pipeline_cache.spectral_record(bundled_map, 5000)
